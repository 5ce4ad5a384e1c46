"""Monte-Carlo uncoded BER over SNR sweeps for MD, ZF, TD, MMSE and SLNR.

Every trial draws one channel realization and one symbol per user.  The
trial's random stream is keyed by ``(seed, trial)`` and consumed in a fixed
order (channel, user symbols, unit noise, TD symbols) whatever schemes are
selected, so all schemes and all SNR points see common random numbers.
SNR is ``P / sigma^2`` with total transmit power ``P = 1``.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .beamforming import baseline_precoders
from .channel import KmsSpec, correlated_channel, kms_factor, stream_rng
from .constellation import average_sum_power, build_qam_udcg
from .detection import detect_qam_indices
from .errors import ConfigError, FeasibilityError
from .grouping import (
    MAX_EXHAUSTIVE_USERS,
    GroupingPlan,
    exhaustive_grouping,
    gamma_threshold,
    greedy_from_gains,
    group_beamformers,
    group_weights,
    pair_gains,
)

__all__ = [
    "SCHEMES",
    "GROUPING_MODES",
    "CSV_COLUMNS",
    "SimConfig",
    "BerPoint",
    "BerReport",
    "gray_map",
    "gray_demap",
    "run_trial",
    "run_trials",
    "run_sweep",
    "snr_at_ber",
    "default_workers",
]

SCHEMES = ("md", "zf", "td", "mmse", "slnr")
GROUPING_MODES = ("greedy", "exhaustive", "none")
CSV_COLUMNS = (
    "scheme", "M", "N", "rho_corr_re", "rho_corr_im", "grouping",
    "snr_db", "trials", "bits", "bit_errors", "ber", "ci95",
)
TOTAL_POWER = 1.0


def default_workers() -> int:
    raw = os.environ.get("QAMMD_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("QAMMD_THREADS", f"not an integer: {raw!r}") from None
    if n < 1:
        raise ConfigError("QAMMD_THREADS", "must be >= 1")
    return n


@dataclass(frozen=True)
class SimConfig:
    M: int
    N: int
    schemes: tuple[str, ...] = ("md", "zf")
    rates: tuple[int, int] = (1, 1)
    snr_grid_db: tuple[float, ...] = tuple(float(x) for x in range(0, 42, 2))
    trials: int = 10_000
    rho_corr: complex = 0j
    grouping: str = "greedy"
    gamma_t: float | None = None
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(s.lower() for s in self.schemes))
        object.__setattr__(self, "snr_grid_db", tuple(float(x) for x in self.snr_grid_db))
        object.__setattr__(self, "rates", tuple(int(r) for r in self.rates))
        object.__setattr__(self, "rho_corr", complex(self.rho_corr))
        self.validate()

    def validate(self) -> None:
        if self.M < 1:
            raise ConfigError("M", "need at least one antenna")
        if self.N < 1:
            raise ConfigError("N", "need at least one user")
        if not self.schemes:
            raise ConfigError("scheme", "no scheme selected")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ConfigError("scheme", f"unknown scheme {s!r}; choose from {', '.join(SCHEMES)}")
        if len(set(self.schemes)) != len(self.schemes):
            raise ConfigError("scheme", "duplicate scheme")
        if len(self.rates) != 2 or min(self.rates) < 0 or sum(self.rates) == 0:
            raise ConfigError("rates", f"need (K_c, K_s) with at least one bit, got {self.rates}")
        if not self.snr_grid_db:
            raise ConfigError("snr", "empty SNR grid")
        if not all(math.isfinite(x) for x in self.snr_grid_db):
            raise ConfigError("snr", "SNR values must be finite")
        if self.trials < 1:
            raise ConfigError("trials", "must be >= 1")
        if not abs(self.rho_corr) < 1:
            raise ConfigError("rho", f"correlation magnitude must be < 1, got {abs(self.rho_corr)}")
        if self.grouping not in GROUPING_MODES:
            raise ConfigError("grouping", f"unknown mode {self.grouping!r}")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed", "must be non-negative")
        for s in self.schemes:
            if s in ("zf", "mmse", "slnr") and self.N > self.M:
                raise ConfigError("N", f"{s} needs N <= M (N={self.N}, M={self.M})")
        if "md" in self.schemes:
            if self.grouping == "exhaustive":
                if self.N > self.M + 1:
                    raise ConfigError("N", f"md needs N <= M+1 (N={self.N}, M={self.M})")
                if self.N == self.M + 1 and self.N % 2:
                    raise ConfigError("N", "with N = M+1 every user must be paired, so N must be even")
                if self.N > MAX_EXHAUSTIVE_USERS:
                    raise ConfigError("grouping", f"exhaustive search limited to N <= {MAX_EXHAUSTIVE_USERS}")
            elif self.N > self.M:
                raise ConfigError("N", f"md with {self.grouping} grouping needs N <= M (N={self.N}, M={self.M})")

    @property
    def threshold_db(self) -> float:
        if self.gamma_t is not None:
            return float(self.gamma_t)
        return gamma_threshold(1 << sum(self.rates))

    def bits_per_trial(self, scheme: str) -> int:
        per_user = sum(self.rates)
        # TD sends N times the per-user rate in each user's slot
        return self.N * per_user * (self.N if scheme == "td" else 1)


def gray_map(index, bits: int | None = None):
    """Binary-reflected Gray code of ``index``.

    >>> [gray_map(i) for i in range(4)]
    [0, 1, 3, 2]
    """
    if bits is not None and np.any(np.asarray(index) >= (1 << bits)):
        raise ValueError(f"index exceeds {bits} bits")
    return index ^ (index >> 1)


def gray_demap(code):
    """Inverse of :func:`gray_map`."""
    if isinstance(code, np.ndarray):
        out = code.copy()
        shift = code >> 1
        while np.any(shift):
            out ^= shift
            shift >>= 1
        return out
    out = code
    code >>= 1
    while code:
        out ^= code
        code >>= 1
    return out


def _bit_errors(sent, detected) -> np.ndarray:
    return np.bitwise_count(gray_map(sent) ^ gray_map(detected)).astype(np.int64)


class _Qam:
    """Single-user normalized QAM with detection on the integer lattice."""

    def __init__(self, kc: int, ks: int):
        self.udcg = build_qam_udcg([(kc, ks)])
        self.scale = math.sqrt(average_sum_power(self.udcg))

    def symbols(self, rc, rs):
        return self.udcg.compose([rc], [rs]) / self.scale

    def errors(self, z, rc, rs):
        # z already scaled back onto the unnormalized lattice
        dc, ds = detect_qam_indices(z, self.udcg)
        return _bit_errors(rc, dc[..., 0]) + _bit_errors(rs, ds[..., 0])


@dataclass
class _Context:
    config: SimConfig
    sigma: np.ndarray
    factor: np.ndarray
    user_qam: _Qam
    td_qam: _Qam
    group_qams: dict = field(default_factory=dict)

    @classmethod
    def build(cls, config: SimConfig) -> _Context:
        kc, ks = config.rates
        spec = KmsSpec(config.rho_corr, config.M)
        snr = np.asarray(config.snr_grid_db)
        return cls(
            config=config,
            sigma=np.sqrt(TOTAL_POWER / 10 ** (snr / 10)),
            factor=kms_factor(spec),
            user_qam=_Qam(kc, ks),
            td_qam=_Qam(config.N * kc, config.N * ks),
        )

    def group_qam(self, size: int):
        if size not in self.group_qams:
            udcg = build_qam_udcg([self.config.rates] * size)
            self.group_qams[size] = (udcg, math.sqrt(average_sum_power(udcg)))
        return self.group_qams[size]


def _draw(config: SimConfig, ctx: _Context, trial: int):
    rng = stream_rng(config.seed, trial)
    N = config.N
    kc, ks = config.rates
    H = correlated_channel(KmsSpec(config.rho_corr, config.M), N, rng, factor=ctx.factor)
    rc = rng.integers(0, 1 << kc, N)
    rs = rng.integers(0, 1 << ks, N)
    g = rng.standard_normal((2, N))
    noise = (g[0] + 1j * g[1]) * math.sqrt(0.5)
    td_rc = rng.integers(0, 1 << (N * kc), N)
    td_rs = rng.integers(0, 1 << (N * ks), N)
    return H, rc, rs, noise, td_rc, td_rs


def _md_plan(config: SimConfig, H) -> GroupingPlan:
    if config.grouping == "none":
        return GroupingPlan.singletons(config.N)
    if config.grouping == "exhaustive":
        return exhaustive_grouping(H, TOTAL_POWER, config.rates)
    return greedy_from_gains(pair_gains(H), config.N, config.threshold_db)


def _md_errors(ctx: _Context, H, rc, rs, noise) -> np.ndarray:
    config = ctx.config
    plan = _md_plan(config, H)
    tx = group_beamformers(H, plan, TOTAL_POWER, group_weights(plan, config.rates))
    W = tx.beam_matrix()
    group_of = np.empty(config.N, dtype=np.int64)
    pos_of = np.empty(config.N, dtype=np.int64)
    s = np.empty(len(plan.groups), dtype=complex)
    for k, g in enumerate(plan.groups):
        udcg, scale = ctx.group_qam(len(g))
        idx = list(g)
        s[k] = complex(udcg.compose(rc[idx], rs[idx])) / scale
        group_of[idx] = k
        pos_of[idx] = range(len(g))
    R = H.conj().T @ W
    clean = R @ s
    # each receiver rescales by its own known gain onto its group's lattice
    own = R[np.arange(config.N), group_of]
    scales = np.array([ctx.group_qam(len(plan.groups[k]))[1] for k in group_of])
    z = (clean + ctx.sigma[:, None] * noise) * (scales / own)
    out = np.zeros((ctx.sigma.size, config.N), dtype=np.int64)
    sizes = np.array([len(plan.groups[k]) for k in group_of])
    for size in np.unique(sizes):
        users = np.flatnonzero(sizes == size)
        udcg, _ = ctx.group_qam(int(size))
        dc, ds = detect_qam_indices(z[:, users], udcg)
        pos = pos_of[users]
        cols = np.arange(users.size)
        out[:, users] = _bit_errors(rc[users], dc[:, cols, pos]) + _bit_errors(rs[users], ds[:, cols, pos])
    return out


def _linear_errors(ctx: _Context, Ws, H, rc, rs, noise) -> np.ndarray:
    """Per-user detection for one precoder per SNR point (``Ws``: S x M x N)."""
    qam = ctx.user_qam
    s = qam.symbols(rc, rs)
    R = np.einsum("mu,smk->suk", H.conj(), Ws)
    clean = R @ s
    own = np.diagonal(R, axis1=1, axis2=2)
    z = (clean + ctx.sigma[:, None] * noise) / own * qam.scale
    return qam.errors(z, rc, rs)


def run_trial(config: SimConfig, trial: int, ctx: _Context | None = None) -> dict[str, np.ndarray]:
    """Bit errors of trial ``trial`` as ``{scheme: array (snr points, N users)}``."""
    ctx = ctx or _Context.build(config)
    H, rc, rs, noise, td_rc, td_rs = _draw(config, ctx, trial)
    S = ctx.sigma.size
    out = {}
    for scheme in config.schemes:
        if scheme == "md":
            out[scheme] = _md_errors(ctx, H, rc, rs, noise)
        elif scheme == "zf":
            W = baseline_precoders(H, TOTAL_POWER, 1.0, "zf").W
            out[scheme] = _linear_errors(ctx, np.broadcast_to(W, (S,) + W.shape), H, rc, rs, noise)
        elif scheme in ("mmse", "slnr"):
            Ws = np.stack([baseline_precoders(H, TOTAL_POWER, sig * sig, scheme).W for sig in ctx.sigma])
            out[scheme] = _linear_errors(ctx, Ws, H, rc, rs, noise)
        else:
            # full power matched filter in each user's own time slot
            norms = np.linalg.norm(H, axis=0)
            amp = math.sqrt(TOTAL_POWER) * norms
            s = ctx.td_qam.symbols(td_rc, td_rs)
            z = (amp * s + ctx.sigma[:, None] * noise) / amp * ctx.td_qam.scale
            out[scheme] = ctx.td_qam.errors(z, td_rc, td_rs)
        assert out[scheme].shape == (S, config.N)
    return out


@dataclass
class _Tally:
    # per scheme: (snr, user) error sums and per-snr sum of squared trial totals
    errors: dict
    squares: dict

    @classmethod
    def empty(cls, config: SimConfig) -> _Tally:
        S, N = len(config.snr_grid_db), config.N
        return cls(
            {s: np.zeros((S, N), dtype=np.int64) for s in config.schemes},
            {s: np.zeros(S, dtype=np.int64) for s in config.schemes},
        )

    def add(self, other: _Tally) -> None:
        for s in self.errors:
            self.errors[s] += other.errors[s]
            self.squares[s] += other.squares[s]


def run_trials(config: SimConfig, start: int, stop: int) -> _Tally:
    """Accumulate integer error counts for trials ``start..stop-1``."""
    ctx = _Context.build(config)
    tally = _Tally.empty(config)
    for t in range(start, stop):
        for scheme, err in run_trial(config, t, ctx).items():
            tally.errors[scheme] += err
            per_trial = err.sum(axis=1)
            tally.squares[scheme] += per_trial * per_trial
    return tally


@dataclass(frozen=True)
class BerPoint:
    scheme: str
    snr_db: float
    trials: int
    bits: int
    bit_errors: int
    ci95: float
    per_user_errors: tuple[int, ...]

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits


@dataclass
class BerReport:
    config: SimConfig
    points: list[BerPoint]
    wall_clock: float = 0.0

    def curve(self, scheme: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(snr_db, ber, ci95)`` arrays of one scheme."""
        pts = [p for p in self.points if p.scheme == scheme]
        if not pts:
            raise KeyError(scheme)
        return (
            np.array([p.snr_db for p in pts]),
            np.array([p.ber for p in pts]),
            np.array([p.ci95 for p in pts]),
        )

    def rows(self) -> list[list[str]]:
        c = self.config
        out = []
        for p in self.points:
            out.append([
                p.scheme, str(c.M), str(c.N), repr(c.rho_corr.real), repr(c.rho_corr.imag),
                c.grouping if p.scheme == "md" else "-",
                f"{p.snr_db:g}", str(p.trials), str(p.bits), str(p.bit_errors),
                f"{p.ber:.6e}", f"{p.ci95:.6e}",
            ])
        return out

    def to_csv(self, out=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(self.rows())
        text = buf.getvalue()
        if out is not None:
            out.write(text)
        return text


def _report(config: SimConfig, tally: _Tally, wall: float) -> BerReport:
    points = []
    n = config.trials
    for scheme in config.schemes:
        bpt = config.bits_per_trial(scheme)
        for i, snr in enumerate(config.snr_grid_db):
            per_user = tally.errors[scheme][i]
            total = int(per_user.sum())
            # spread of per-trial error totals; trials are the independent unit
            mean = total / n
            var = max(int(tally.squares[scheme][i]) / n - mean * mean, 0.0)
            ci = 1.96 * math.sqrt(var / n) / bpt if n > 1 else math.inf
            points.append(BerPoint(
                scheme, snr, n, bpt * n, total, ci, tuple(int(x) for x in per_user)
            ))
    return BerReport(config, points, wall)


def _chunks(trials: int, workers: int) -> list[tuple[int, int]]:
    size = max(1, -(-trials // (workers * 4)))
    return [(a, min(a + size, trials)) for a in range(0, trials, size)]


def _run_chunk(args) -> _Tally:
    config, start, stop = args
    return run_trials(config, start, stop)


def run_sweep(config: SimConfig) -> BerReport:
    """Run all trials, in parallel when ``config.workers > 1``.

    Results are integer sums of per-trial counts, so they do not depend on
    the worker count or chunking.
    """
    t0 = time.perf_counter()
    tally = _Tally.empty(config)
    if config.workers == 1:
        tally = run_trials(config, 0, config.trials)
    else:
        jobs = [(config, a, b) for a, b in _chunks(config.trials, config.workers)]
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for part in pool.map(_run_chunk, jobs):
                tally.add(part)
    return _report(config, tally, time.perf_counter() - t0)


def snr_at_ber(snr_db, ber, target: float) -> float:
    """SNR where a decreasing BER curve crosses ``target``.

    Interpolates ``log10(BER)`` linearly between the bracketing grid points;
    returns ``nan`` if the curve never reaches the target.
    """
    snr_db = np.asarray(snr_db, dtype=float)
    ber = np.asarray(ber, dtype=float)
    for i in range(1, len(ber)):
        if ber[i - 1] >= target > ber[i] or (ber[i] == target):
            if ber[i] == target:
                return float(snr_db[i])
            lo = math.log10(ber[i - 1])
            hi = math.log10(ber[i]) if ber[i] > 0 else lo - 6
            frac = (lo - math.log10(target)) / (lo - hi)
            return float(snr_db[i - 1] + frac * (snr_db[i] - snr_db[i - 1]))
    return math.nan



"""Two-user max-min beamforming, SNR-gain formulas and baseline precoders."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateChannelError, RankError
from .subspace import difference_eigenbasis, is_collinear, pair_stats

__all__ = [
    "BeamformerSolution",
    "PrecoderSet",
    "md_two_user",
    "snr_gain_rho",
    "snr_gain_kappa",
    "baseline_precoders",
    "maxmin_grid_oracle",
    "maxmin_dual_bound",
    "BRANCHES",
]

BRANCHES = ("scenario1", "case1a", "case1b", "case2a", "case2b")


@dataclass(frozen=True)
class BeamformerSolution:
    w: np.ndarray
    value: float
    branch: str
    # |h1^H w|^2 and |h2^H w|^2 actually achieved by w
    gains: tuple[float, float]


@dataclass(frozen=True)
class PrecoderSet:
    W: np.ndarray
    scheme: str
    powers: np.ndarray


def _boundary_value(lam1, lam2, s, P):
    # both users equal: the constraint boundary of the max-min problem
    return P * lam1 * lam2 / (lam1 + lam2) * (1 + s) ** 2 / (1 - s * s)


def _interior_value(lam_weak, lam_strong, s, P):
    # unconstrained optimum of the weaker user's objective
    return P * (lam_weak + lam_strong * s * s) / (1 - s * s)


def _received(h1, h2, w) -> tuple[float, float]:
    return float(abs(np.vdot(h1, w)) ** 2), float(abs(np.vdot(h2, w)) ** 2)


def md_two_user(h1, h2, P: float) -> BeamformerSolution:
    """Common beam maximizing ``min(|h1^H w|^2, |h2^H w|^2)`` with ``|w|^2 = P``.

    Dependent channels use the matched filter of the weaker user; otherwise
    the optimum is written in the eigenbasis of ``h1 h1^H - h2 h2^H``.
    """
    h1 = np.asarray(h1, dtype=complex).ravel()
    h2 = np.asarray(h2, dtype=complex).ravel()
    if P <= 0:
        raise ValueError("transmit power must be positive")
    stats = pair_stats(h1, h2)

    if is_collinear(stats):
        h = h1 if stats.a <= stats.b else h2
        w = math.sqrt(P) * h / np.linalg.norm(h)
        return BeamformerSolution(w, P * min(stats.a, stats.b), "scenario1", _received(h1, h2, w))

    basis, spec = difference_eigenbasis(h1, h2)
    lam1, lam2, s = spec.lam1, spec.lam2, spec.sin_theta
    beta, gamma, alpha = basis.beta, basis.gamma, basis.alpha

    if lam1 <= lam2:
        if s <= lam1 / lam2:
            branch = "case1a"
            mags = (P * lam2 / (lam1 + lam2), P * lam1 / (lam1 + lam2))
            value = _boundary_value(lam1, lam2, s, P)
        else:
            branch = "case1b"
            den = lam1 + lam2 * s * s
            mags = (P * lam1 / den, P * lam2 * s * s / den)
            value = _interior_value(lam1, lam2, s, P)
        phases = (beta, beta - alpha)
    else:
        if s <= lam2 / lam1:
            branch = "case2a"
            mags = (P * lam2 / (lam1 + lam2), P * lam1 / (lam1 + lam2))
            value = _boundary_value(lam1, lam2, s, P)
        else:
            branch = "case2b"
            den = lam1 * s * s + lam2
            mags = (P * lam1 * s * s / den, P * lam2 / den)
            value = _interior_value(lam2, lam1, s, P)
        phases = (gamma + alpha, gamma)

    wt = np.sqrt(mags) * np.exp(1j * np.asarray(phases))
    w = basis.V @ wt
    return BeamformerSolution(w, float(value), branch, _received(h1, h2, w))


def snr_gain_rho(rho: float, cos_phi: float) -> float:
    """MD-over-ZF SNR gain in dB from the power ratio and Hermitian angle.

    Returns ``inf`` for aligned channels (``cos_phi == 1``), where ZF fails.

    >>> round(snr_gain_rho(0.5, math.cos(math.pi / 4)), 2)
    4.77
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    if not 0.0 <= cos_phi <= 1.0:
        raise ValueError("cos_phi must lie in [0, 1]")
    sq = math.sqrt(rho)
    if (rho <= 1 and cos_phi <= sq) or (rho > 1 and cos_phi <= 1 / sq):
        den = 1 + rho - 2 * sq * cos_phi
        num = 1 + rho
    else:
        den = 1 - cos_phi * cos_phi
        num = 1 + rho if rho <= 1 else 1 + 1 / rho
    if den <= 0:
        return math.inf
    return 10 * math.log10(num / den)


def snr_gain_kappa(kappa: float, sin_theta: float) -> float:
    """MD-over-ZF SNR gain in dB from ``lam1/lam2`` and ``sin(theta)``."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    s = sin_theta
    if not 0.0 <= s <= 1.0:
        raise ValueError("sin_theta must lie in [0, 1]")
    if s >= 1.0:
        return math.inf
    c4 = (1 - s * s) ** 2
    if (kappa <= 1 and s <= kappa) or (kappa > 1 and s <= 1 / kappa):
        ratio = (1 + s * s) / (1 - s) ** 2
    elif kappa <= 1:
        ratio = (1 + s * s) * (kappa + s * s) * (1 + 1 / kappa) / c4
    else:
        ratio = (1 + s * s) * (1 / kappa + s * s) * (1 + kappa) / c4
    return 10 * math.log10(ratio)


def _canonical_phase(H, W):
    # rotate each beam so that h_k^H w_k is real and positive
    g = np.einsum("mk,mk->k", H.conj(), W)
    return W * np.exp(-1j * np.angle(g))[None, :]


def baseline_precoders(H, P: float, sigma2: float, scheme: str) -> PrecoderSet:
    """Linear precoders used as baselines: ``zf``, ``mmse`` or ``slnr``.

    ZF balances received amplitudes (max-min); MMSE and SLNR split power
    equally, ``P/N`` per user, with regularization ``N sigma2 / P``.  The
    SLNR beam of user ``k`` maximizes its signal over leakage plus noise.
    Every beam is rotated so that the user's own gain ``h_k^H w_k`` is real
    and positive.
    """
    H = np.asarray(H, dtype=complex)
    M, N = H.shape
    scheme = scheme.lower()
    if N > M:
        raise RankError(f"{scheme}: N={N} users exceed M={M} antennas")
    gram = H.conj().T @ H
    if scheme == "zf":
        if np.linalg.matrix_rank(H) < N:
            raise RankError("zf: channel matrix is rank deficient")
        W = H @ np.linalg.inv(gram)
        W *= math.sqrt(P / np.sum(np.abs(W) ** 2))
    elif scheme == "mmse":
        W = H @ np.linalg.inv(gram + (N * sigma2 / P) * np.eye(N))
        W = W / np.linalg.norm(W, axis=0) * math.sqrt(P / N)
    elif scheme == "slnr":
        # the leading generalized eigenvector of (h h^H, B) is B^{-1} h; with
        # B = Ho Ho^H + alpha I the Woodbury form stays stable as alpha -> 0
        alpha = N * sigma2 / P
        W = np.empty((M, N), dtype=complex)
        for k in range(N):
            Ho = np.delete(H, k, axis=1)
            h = H[:, k]
            inner = Ho.conj().T @ Ho + alpha * np.eye(N - 1)
            v = h - Ho @ np.linalg.solve(inner, Ho.conj().T @ h)
            W[:, k] = v / np.linalg.norm(v) * math.sqrt(P / N)
    else:
        raise ValueError(f"unknown precoding scheme {scheme!r}")
    W = _canonical_phase(H, W)
    return PrecoderSet(W, scheme, np.sum(np.abs(W) ** 2, axis=0))


def _maxmin_on_span(c1, c2, P, t, psi):
    # w = sqrt(P) U [cos t, sin t e^{j psi}] with c_i = U^H h_i
    z = np.sin(t) * np.exp(1j * np.asarray(psi))
    x = np.cos(t)
    f1 = np.abs(np.conj(c1[0]) * x + np.conj(c1[1]) * z) ** 2
    f2 = np.abs(np.conj(c2[0]) * x + np.conj(c2[1]) * z) ** 2
    return P * np.minimum(f1, f2)


def _ternary(f, lo, hi, steps):
    for _ in range(steps):
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        if f(m1) < f(m2):
            lo = m1
        else:
            hi = m2
    x = (lo + hi) / 2
    return x, f(x)


def maxmin_grid_oracle(h1, h2, P: float, grid_size=(181, 180), refine_steps: int = 60) -> float:
    """Brute-force max-min value over beams in ``span{h1, h2}``.

    Sweeps the power split angle between the two basis directions and the
    relative phase of the second, then refines around the best grid cell by
    nested ternary search.  Independent of the eigenbasis machinery.
    """
    h1 = np.asarray(h1, dtype=complex).ravel()
    h2 = np.asarray(h2, dtype=complex).ravel()
    U, sv, _ = np.linalg.svd(np.stack([h1, h2], axis=1), full_matrices=False)
    if sv[0] <= 0:
        raise DegenerateChannelError("zero channels")
    if sv[1] <= 1e-9 * sv[0]:
        u = U[:, 0]
        return float(P * min(abs(np.vdot(h1, u)) ** 2, abs(np.vdot(h2, u)) ** 2))
    c1 = U.conj().T @ h1
    c2 = U.conj().T @ h2

    n_t, n_psi = grid_size
    t = np.linspace(0.0, math.pi / 2, n_t)
    psi = np.linspace(0.0, 2 * math.pi, n_psi, endpoint=False)
    best, best_t, best_psi = -1.0, 0.0, 0.0
    chunk = max(1, 200_000 // n_psi)
    for start in range(0, n_t, chunk):
        tt = t[start : start + chunk, None]
        vals = _maxmin_on_span(c1, c2, P, tt, psi[None, :])
        i, j = np.unravel_index(np.argmax(vals), vals.shape)
        if vals[i, j] > best:
            best, best_t, best_psi = float(vals[i, j]), float(tt[i, 0]), float(psi[j])

    # the optimum usually sits on a flat, slanted ridge where the two gains
    # are equal, so the grid cell can be several steps away along the ridge:
    # scan both coordinates coarsely with exact inner maximization first
    a1, b1 = c1[0].conjugate(), c1[1].conjugate()
    a2, b2 = c2[0].conjugate(), c2[1].conjugate()
    coarse = [k * (math.pi / 2) / 63 for k in range(64)]

    def f(x, p):
        z = math.sin(x) * complex(math.cos(p), math.sin(p))
        c = math.cos(x)
        return P * min(abs(a1 * c + b1 * z) ** 2, abs(a2 * c + b2 * z) ** 2)

    def over_t(p):
        k = max(range(64), key=lambda i: f(coarse[i], p))
        lo, hi = coarse[max(k - 1, 0)], coarse[min(k + 1, 63)]
        return _ternary(lambda x: f(x, p), lo, hi, refine_steps)[1]

    n_coarse = 48
    dpsi = 2 * math.pi / n_coarse
    centres = [best_psi] + [k * dpsi for k in range(n_coarse)]
    centre = max(centres, key=over_t)
    _, refined = _ternary(over_t, centre - dpsi, centre + dpsi, refine_steps)
    return max(best, refined)


def maxmin_dual_bound(h1, h2, P: float, iters: int = 200) -> float:
    """Upper bound ``min_mu P lam_max(mu h1 h1^H + (1 - mu) h2 h2^H)``.

    Weak duality makes this an upper bound on the max-min value for any
    pair; for two users the bound is attained.  The objective is convex in
    ``mu``, so golden-section search converges to machine precision.
    """
    h1 = np.asarray(h1, dtype=complex).ravel()
    h2 = np.asarray(h2, dtype=complex).ravel()
    a = float(np.vdot(h1, h1).real)
    b = float(np.vdot(h2, h2).real)
    c2 = float(abs(np.vdot(h1, h2)) ** 2)

    def lam_max(mu):
        # nonzero spectrum of the rank-2 matrix equals that of its 2x2 Gram form
        x, y = mu * a, (1 - mu) * b
        return (x + y + math.sqrt((x - y) ** 2 + 4 * mu * (1 - mu) * c2)) / 2

    lo, hi = 0.0, 1.0
    g = (math.sqrt(5) - 1) / 2
    for _ in range(iters):
        m1 = hi - g * (hi - lo)
        m2 = lo + g * (hi - lo)
        if lam_max(m1) <= lam_max(m2):
            hi = m2
        else:
            lo = m1
        if hi - lo < 1e-15:
            break
    return P * min(lam_max((lo + hi) / 2), lam_max(0.0), lam_max(1.0))

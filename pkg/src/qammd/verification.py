"""Self-check suites run by ``qammd verify``.

Each suite compares a fast or closed-form routine with an independent
oracle and reports pass/fail with timing.  ``quick`` runs reduced batches;
``full`` runs the acceptance-size batches.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .beamforming import (
    BRANCHES,
    BeamformerSolution,
    maxmin_dual_bound,
    maxmin_grid_oracle,
    md_two_user,
    snr_gain_rho,
)
from .constellation import build_pam_udcg, build_qam_udcg, verify_unique_decomposability
from .detection import detect_qam_indices, ml_detect_indices
from .grouping import (
    GroupingPlan,
    count_pair_groupings,
    enumerate_pair_partitions,
    group_beamformers,
    group_weights,
    plan_is_feasible,
)
from .channel import stream_rng
from .subspace import PairStats, closed_form_spectra, difference_eigenbasis

__all__ = [
    "TABLE_RHO",
    "TABLE_PHI_DEG",
    "TABLE_DB",
    "SuiteResult",
    "compositions",
    "random_pair",
    "spectra_reference",
    "run_suites",
    "SUITES",
]

TABLE_RHO = (1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0)
TABLE_PHI_DEG = (1, 5, 15, 30, 45, 90)
# published SNR gains (dB) for each (rho, phi) cell above
TABLE_DB = (
    (35.43, 21.46, 12.00, 6.28, 3.27, 0.0),
    (35.67, 21.71, 12.25, 6.53, 3.52, 0.0),
    (36.13, 22.16, 12.71, 6.99, 3.98, 0.0),
    (36.92, 22.96, 13.50, 7.78, 4.77, 0.0),
    (38.17, 24.20, 14.68, 8.73, 5.33, 0.0),
)


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.detail} ({self.seconds:.2f} s)"


def compositions(total: int, parts: int):
    """All tuples of ``parts`` non-negative ints summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


def random_pair(rng: np.random.Generator, M: int):
    """Random channel pair mixing independent and strongly aligned cases."""
    h1 = (rng.standard_normal(M) + 1j * rng.standard_normal(M)) * math.sqrt(0.5)
    h2 = (rng.standard_normal(M) + 1j * rng.standard_normal(M)) * math.sqrt(0.5)
    h1 *= math.exp(rng.uniform(-1.0, 1.0))
    h2 *= math.exp(rng.uniform(-1.0, 1.0))
    if rng.random() < 0.5:
        # pull h2 toward h1 so the equal-gain branches show up
        mix = rng.uniform(0.0, 0.6)
        h2 = mix * h2 + np.exp(1j * rng.uniform(0, 2 * math.pi)) * rng.uniform(0.3, 3.0) * h1
    return h1, h2


def spectra_reference(a: float, b: float, c: float, phi_c: float):
    """``(mu1, mu2, lam1, lam2)`` from generic eigensolves.

    Builds an explicit pair with the given statistics, eigen-decomposes its
    Gram matrix and ``h1 h1^H - h2 h2^H``, and also eigen-decomposes the
    reduced matrix ``Sigma V^H J V Sigma`` built from the SVD of ``[h1 h2]``.
    """
    h1 = np.array([math.sqrt(a), 0.0], dtype=complex)
    x = c * complex(math.cos(phi_c), math.sin(phi_c)) / math.sqrt(a)
    h2 = np.array([x, math.sqrt(max(b - abs(x) ** 2, 0.0))], dtype=complex)
    H = np.stack([h1, h2], axis=1)
    mu = np.linalg.eigvalsh(H.conj().T @ H)
    lam = np.linalg.eigvalsh(np.outer(h1, h1.conj()) - np.outer(h2, h2.conj()))
    _, sv, Vh = np.linalg.svd(H)
    V = Vh.conj().T
    J = np.diag([1.0, -1.0])
    Bm = np.diag(sv) @ (V.conj().T @ J @ V) @ np.diag(sv)
    lam_b = np.linalg.eigvalsh((Bm + Bm.conj().T) / 2)
    return (mu[1], mu[0], lam[1], -lam[0]), (lam_b[1], -lam_b[0])


def _suite_gain_table(level, **_):
    worst = 0.0
    for rho, row in zip(TABLE_RHO, TABLE_DB):
        for deg, ref in zip(TABLE_PHI_DEG, row):
            got = snr_gain_rho(rho, math.cos(deg * math.pi / 180))
            worst = max(worst, abs(got - ref))
    return worst <= 0.01 + 1e-9, f"30 cells, max |error| {worst:.4f} dB"


def _suite_udcg(level, **_):
    max_bits = 12 if level == "full" else 8
    checked = 0
    for total in range(1, max_bits + 1):
        for n in range(1, min(total, 4) + 1):
            for rates in compositions(total, n):
                if not verify_unique_decomposability(build_pam_udcg(rates)):
                    return False, f"PAM split {rates} is ambiguous"
                checked += 1
    for total in range(1, max_bits + 1):
        for kc in range(total + 1):
            ks = total - kc
            for rc in compositions(kc, 2):
                for rs in compositions(ks, 2):
                    pairs = list(zip(rc, rs))
                    if any(p == (0, 0) for p in pairs):
                        continue
                    if not verify_unique_decomposability(build_qam_udcg(pairs)):
                        return False, f"QAM split {pairs} is ambiguous"
                    checked += 1
    return True, f"{checked} splits up to K={max_bits}"


def _suite_decoder(level, seed=0, **_):
    samples = 100_000 if level == "full" else 10_000
    rng = stream_rng(seed, 1)
    configs = [[(1, 1), (1, 1)], [(2, 1), (1, 2)], [(1, 0), (2, 2)], [(3, 3)], [(1, 1)] * 3]
    mismatches = ties = 0
    for pairs in configs:
        udcg = build_qam_udcg(pairs)
        half_c = 2 ** (udcg.real.total_bits - 1)
        half_s = 2 ** (udcg.imag.total_bits - 1) if udcg.imag.total_bits else 0.5
        y = rng.uniform(-half_c - 1, half_c + 1, samples) + 1j * rng.uniform(-half_s - 1, half_s + 1, samples)
        rc, rs = detect_qam_indices(y, udcg)
        mc, ms, gap = ml_detect_indices(y, udcg, return_gap=True)
        clear = gap > 1e-9
        ties += int(np.sum(~clear))
        bad = np.any(rc != mc, axis=1) | np.any(rs != ms, axis=1)
        mismatches += int(np.sum(bad & clear))
    return mismatches == 0, f"{len(configs)} configs x {samples} samples, {mismatches} mismatches, {ties} ties"


def _suite_beamformer(level, seed=0, solver: Callable = md_two_user, **_):
    count = 1000 if level == "full" else 100
    rng = stream_rng(seed, 2)
    seen = dict.fromkeys(BRANCHES, 0)
    worst_oracle = worst_power = worst_dual = worst_value = 0.0
    for _ in range(count):
        M = int(rng.integers(2, 7))
        h1, h2 = random_pair(rng, M)
        P = float(rng.uniform(0.5, 2.0))
        sol = solver(h1, h2, P)
        seen[sol.branch] += 1
        achieved = min(abs(np.vdot(h1, sol.w)) ** 2, abs(np.vdot(h2, sol.w)) ** 2)
        grid = maxmin_grid_oracle(h1, h2, P)
        dual = maxmin_dual_bound(h1, h2, P)
        worst_oracle = max(worst_oracle, (grid - achieved) / grid)
        worst_dual = max(worst_dual, abs(achieved - dual) / dual)
        worst_value = max(worst_value, abs(sol.value - achieved) / achieved)
        worst_power = max(worst_power, abs(np.vdot(sol.w, sol.w).real - P) / P)
    covered = all(seen[b] for b in BRANCHES[1:])
    ok = covered and worst_oracle <= 1e-6 and worst_power <= 1e-10 and worst_dual <= 1e-8 and worst_value <= 1e-9
    counts = ", ".join(f"{b}={seen[b]}" for b in BRANCHES[1:])
    return ok, (
        f"{count} pairs ({counts}); oracle shortfall {worst_oracle:.1e}, "
        f"dual gap {worst_dual:.1e}, value mismatch {worst_value:.1e}, power error {worst_power:.1e}"
    )


def _suite_spectra(level, seed=0, **_):
    count = 10_000 if level == "full" else 1_000
    rng = stream_rng(seed, 3)
    worst = 0.0
    for _ in range(count):
        a, b = rng.uniform(0.05, 10.0, 2)
        c = math.sqrt(a * b) * rng.uniform(0.0, 0.999)
        phi = rng.uniform(-math.pi, math.pi)
        spec = closed_form_spectra(PairStats(a, b, c, phi, a / b, c / math.sqrt(a * b)))
        (mu1, mu2, l1, l2), (bl1, bl2) = spectra_reference(a, b, c, phi)
        scale = a + b
        got = np.array([spec.mu1, spec.mu2, spec.lam1, spec.lam2, spec.lam1, spec.lam2])
        ref = np.array([mu1, mu2, l1, l2, bl1, bl2])
        worst = max(worst, float(np.max(np.abs(got - ref))) / scale)
    return worst <= 1e-10, f"{count} triples, max scaled error {worst:.1e}"


def _suite_grouping_count(level, **_):
    for n in range(1, 9):
        brute = sum(1 for _ in enumerate_pair_partitions(n))
        if brute != count_pair_groupings(n):
            return False, f"N={n}: formula {count_pair_groupings(n)} vs enumeration {brute}"
    return True, "N=1..8 match enumeration"


def _suite_grouped(level, seed=0, **_):
    count = 300 if level == "full" else 60
    rng = stream_rng(seed, 4)
    worst_zf = worst_power = worst_eq = 0.0
    for _ in range(count):
        M = int(rng.integers(2, 13))
        N = int(rng.integers(2, M + 2))
        plan = _random_feasible_plan(rng, M, N)
        if plan is None:
            continue
        H = (rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))) * math.sqrt(0.5)
        tx = group_beamformers(H, plan, 1.0, group_weights(plan, (1, 1)))
        for g, w in zip(plan.groups, tx.beams):
            others = np.delete(H, list(g), axis=1)
            if others.size:
                worst_zf = max(worst_zf, float(np.linalg.norm(others.conj().T @ w) / np.linalg.norm(w)))
        worst_power = max(worst_power, abs(sum(np.vdot(w, w).real for w in tx.beams) - 1.0))
        eq = tx.weights * tx.powers * tx.unit_gains
        worst_eq = max(worst_eq, float((eq.max() - eq.min()) / eq.max()))
    ok = worst_zf < 1e-10 and worst_power < 1e-10 and worst_eq < 1e-9
    return ok, f"{count} instances; leakage {worst_zf:.1e}, power {worst_power:.1e}, equalization {worst_eq:.1e}"


def _random_feasible_plan(rng, M: int, N: int) -> GroupingPlan | None:
    users = list(rng.permutation(N))
    if N == M + 1:
        if N % 2:
            return None
        groups = [tuple(sorted(users[i : i + 2])) for i in range(0, N, 2)]
    else:
        groups = []
        while users:
            if len(users) >= 2 and rng.random() < 0.5:
                groups.append(tuple(sorted((users.pop(), users.pop()))))
            else:
                groups.append((users.pop(),))
    plan = GroupingPlan(tuple(sorted(groups)))
    return plan if plan_is_feasible(plan, M) else None


SUITES = {
    "gain-table": _suite_gain_table,
    "udcg": _suite_udcg,
    "decoder": _suite_decoder,
    "beamformer": _suite_beamformer,
    "spectra": _suite_spectra,
    "grouping-count": _suite_grouping_count,
    "grouped-transmission": _suite_grouped,
}


def faulty_solver(branch: str) -> Callable:
    """``md_two_user`` with the power split of one branch deliberately swapped."""

    def solve(h1, h2, P):
        sol = md_two_user(h1, h2, P)
        if sol.branch != branch or branch == "scenario1":
            return sol
        # exchange the power of the two eigen-directions, keeping |w|^2 = P
        basis, _ = difference_eigenbasis(h1, h2)
        coords = basis.V.conj().T @ sol.w
        swapped = np.abs(coords[::-1]) * np.exp(1j * np.angle(coords))
        w = basis.V @ swapped
        gains = (float(abs(np.vdot(h1, w)) ** 2), float(abs(np.vdot(h2, w)) ** 2))
        return BeamformerSolution(w, sol.value, sol.branch, gains)

    return solve


def run_suites(level: str = "quick", seed: int = 0, fault: str | None = None, names=None) -> list[SuiteResult]:
    if level not in ("quick", "full"):
        raise ValueError(f"unknown level {level!r}")
    extra = {}
    if fault is not None:
        if fault not in BRANCHES[1:]:
            raise ValueError(f"unknown branch {fault!r}")
        extra["solver"] = faulty_solver(fault)
    results = []
    for name, suite in SUITES.items():
        if names and name not in names:
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = suite(level, seed=seed, **extra)
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append(SuiteResult(name, bool(ok), detail, time.perf_counter() - t0))
    return results

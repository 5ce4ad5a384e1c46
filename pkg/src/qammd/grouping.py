"""User grouping, group weights and grouped ZF/MD transmission.

Users are split into groups of one or two.  Each group is served by a single
beam constrained to the null space of every other group's channels; pairs
share that beam through a uniquely decomposable constellation, singletons
get a plain matched filter.  Power is then split so that the weighted
per-group gains are equal.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .beamforming import md_two_user, snr_gain_rho
from .constellation import average_sum_power, build_qam_udcg
from .errors import DegenerateChannelError, FeasibilityError, QammdError, RankError
from .subspace import COLLINEAR_TOL, null_complement_basis, pair_stats, project_out

__all__ = [
    "GroupingPlan",
    "GroupTransmission",
    "grouping_gain",
    "pair_gains",
    "gamma_threshold",
    "greedy_from_gains",
    "greedy_grouping",
    "enumerate_pair_partitions",
    "count_pair_groupings",
    "exhaustive_grouping",
    "group_weights",
    "group_beamformers",
    "plan_is_feasible",
    "MAX_EXHAUSTIVE_USERS",
]

MAX_EXHAUSTIVE_USERS = 8
_MAX_GRAM_COND = 1e8


@dataclass(frozen=True)
class GroupingPlan:
    """Partition of users ``0..N-1`` into groups of size one or two."""

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        groups = tuple(tuple(int(u) for u in g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        users = sorted(u for g in groups for u in g)
        if users != list(range(len(users))):
            raise QammdError(f"groups {groups} do not partition 0..{len(users) - 1}")
        if any(len(g) not in (1, 2) for g in groups):
            raise QammdError(f"group sizes must be 1 or 2, got {groups}")

    @property
    def num_users(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def num_pairs(self) -> int:
        return sum(len(g) == 2 for g in self.groups)

    @property
    def relabel(self) -> dict[int, tuple[int, int]]:
        """user -> (group index, position inside the group)"""
        return {u: (k, pos) for k, g in enumerate(self.groups) for pos, u in enumerate(g)}

    def to_lines(self) -> list[str]:
        """One ``group k: u_i [u_j]`` line per group, 1-based."""
        return [
            f"group {k + 1}: " + " ".join(str(u + 1) for u in g)
            for k, g in enumerate(self.groups)
        ]

    @classmethod
    def singletons(cls, n: int) -> GroupingPlan:
        return cls(tuple((u,) for u in range(n)))


@dataclass(frozen=True)
class GroupTransmission:
    plan: GroupingPlan
    beams: tuple[np.ndarray, ...]
    powers: np.ndarray
    # value per unit power of each group's beam (varsigma)
    unit_gains: np.ndarray
    weights: np.ndarray
    branches: tuple[str, ...] = field(default=())

    @property
    def objective(self) -> float:
        """Worst weighted received power ``min_k rho_k P_k varsigma_k``."""
        return float(np.min(self.weights * self.powers * self.unit_gains))

    def beam_matrix(self) -> np.ndarray:
        return np.stack(self.beams, axis=1)


def _others(H: np.ndarray, users: Sequence[int]) -> np.ndarray:
    keep = [u for u in range(H.shape[1]) if u not in set(users)]
    return H[:, keep]


def grouping_gain(H, m: int, n: int) -> float:
    """MD-over-ZF gain (dB) of pairing users ``m`` and ``n``.

    Both channels are first projected onto the orthogonal complement of all
    other users' channels.  A projected channel that vanishes gives ``-inf``.
    """
    H = np.asarray(H, dtype=complex)
    if m == n:
        raise ValueError("a pair needs two distinct users")
    Q = null_complement_basis(_others(H, (m, n)))
    hm, hn = Q.conj().T @ H[:, m], Q.conj().T @ H[:, n]
    try:
        stats = pair_stats(hm, hn)
    except DegenerateChannelError:
        return -math.inf
    return _gain_from_stats(stats.rho, stats.cos_phi)


def _gain_from_stats(rho: float, cos_phi: float) -> float:
    cos_phi = min(max(cos_phi, 0.0), 1.0)
    if 1.0 - cos_phi * cos_phi < COLLINEAR_TOL:
        # dependent pair: ZF cannot separate it at all
        return math.inf
    return snr_gain_rho(rho, cos_phi)


def pair_gains(H, tol: float = 1e-12) -> dict[tuple[int, int], float]:
    """Gains of all pairs ``m < n`` without forming null-space bases.

    The projected Gram matrix of a pair is the Schur complement of the other
    users' block.  When the full Gram matrix ``G`` is invertible that is the
    inverse of the pair's 2x2 block of ``G^-1``, which gives
    ``rho = [G^-1]_nn / [G^-1]_mm`` and
    ``cos(phi) = |[G^-1]_mn| / sqrt([G^-1]_mm [G^-1]_nn)`` for every pair at once.
    """
    H = np.asarray(H, dtype=complex)
    M, N = H.shape
    G = H.conj().T @ H
    # the inverse loses about cond(G) * eps, so near-singular Gram
    # matrices go through the Schur route instead
    if N <= M and np.linalg.cond(G) < _MAX_GRAM_COND:
        Gi = np.linalg.inv(G)
        if np.all(np.isfinite(Gi)):
            d = Gi.diagonal().real
            out = {}
            for m, n in combinations(range(N), 2):
                if d[m] <= 0 or d[n] <= 0:
                    out[(m, n)] = -math.inf
                else:
                    out[(m, n)] = _gain_from_stats(d[n] / d[m], abs(Gi[m, n]) / math.sqrt(d[m] * d[n]))
            return out
    return _pair_gains_schur(G, tol)


def _pair_gains_schur(G, tol):
    N = G.shape[0]
    scale = float(np.max(np.abs(np.diag(G)))) if N else 1.0
    out = {}
    for m, n in combinations(range(N), 2):
        pair = [m, n]
        rest = [u for u in range(N) if u != m and u != n]
        S = G[np.ix_(pair, pair)]
        if rest:
            B = G[np.ix_(rest, pair)]
            # least squares keeps the projection well defined when the
            # other users' channels are themselves dependent
            X = np.linalg.lstsq(G[np.ix_(rest, rest)], B, rcond=tol)[0]
            S = S - B.conj().T @ X
        a, b = S[0, 0].real, S[1, 1].real
        if a <= tol * scale or b <= tol * scale:
            out[(m, n)] = -math.inf
            continue
        out[(m, n)] = _gain_from_stats(a / b, abs(S[0, 1]) / math.sqrt(a * b))
    return out


def gamma_threshold(K: int) -> float:
    """Pairing threshold in dB for users with ``K``-point constellations.

    >>> round(gamma_threshold(4), 2)
    6.99
    """
    if K < 2 or K & (K - 1):
        raise ValueError(f"constellation size must be a power of two >= 2, got {K}")
    return 10 * math.log10(K + 1)


def greedy_from_gains(gains: dict[tuple[int, int], float], N: int, gamma_t: float) -> GroupingPlan:
    """Sorted greedy pairing: accept a pair iff its gain exceeds ``gamma_t``
    and both users are still free.  Unpaired users become singletons."""
    order = sorted(gains.items(), key=lambda kv: (-kv[1], kv[0]))
    taken: set[int] = set()
    groups = []
    for (m, n), g in order:
        if not g > gamma_t:
            break
        if m in taken or n in taken:
            continue
        taken.update((m, n))
        groups.append((m, n))
    groups.extend((u,) for u in range(N) if u not in taken)
    return GroupingPlan(tuple(sorted(groups)))


def greedy_grouping(H, gamma_t: float) -> GroupingPlan:
    H = np.asarray(H, dtype=complex)
    M, N = H.shape
    if N > M + 1:
        raise FeasibilityError(f"N={N} users exceed M+1={M + 1}")
    return greedy_from_gains(pair_gains(H), N, gamma_t)


def enumerate_pair_partitions(N: int):
    """Yield every partition of ``0..N-1`` into blocks of size one or two."""

    def rec(rest):
        if not rest:
            yield ()
            return
        first, tail = rest[0], rest[1:]
        for sub in rec(tail):
            yield ((first,),) + sub
        for i, other in enumerate(tail):
            for sub in rec(tail[:i] + tail[i + 1 :]):
                yield ((first, other),) + sub

    for groups in rec(tuple(range(N))):
        yield GroupingPlan(groups)


def count_pair_groupings(N: int) -> int:
    """Number of partitions of ``N`` users into singletons and pairs.

    >>> [count_pair_groupings(n) for n in range(1, 6)]
    [1, 2, 4, 10, 26]
    """
    if N < 1:
        raise ValueError("N must be positive")
    total = 1
    for m in range((N + 1) // 2, N):
        num = 1
        for k in range(N - m):
            num *= math.comb(N - 2 * k, 2)
        total += num // math.factorial(N - m)
    return total


def _user_rate_pairs(rates, N: int) -> list[tuple[int, int]]:
    rates = list(rates)
    if len(rates) == 2 and all(isinstance(r, (int, np.integer)) for r in rates):
        rates = [tuple(rates)] * N
    if len(rates) != N:
        raise ValueError(f"expected {N} rate pairs, got {len(rates)}")
    return [tuple(int(x) for x in r) for r in rates]


@lru_cache(maxsize=None)
def _group_weight(pairs: tuple[tuple[int, int], ...]) -> float:
    return 1.0 / average_sum_power(build_qam_udcg(pairs))


def group_weights(plan: GroupingPlan, rates) -> np.ndarray:
    """Weight ``1 / E|sum symbol|^2`` of each group's unnormalized lattice.

    ``rates`` is one ``(K_c, K_s)`` pair shared by all users or a list with
    one pair per user.
    """
    pairs = _user_rate_pairs(rates, plan.num_users)
    return np.array([_group_weight(tuple(pairs[u] for u in g)) for g in plan.groups])


def plan_is_feasible(plan: GroupingPlan, M: int) -> bool:
    """Every group keeps a nonzero null space: ``M > N - N_k``."""
    N = plan.num_users
    return all(M > N - len(g) for g in plan.groups)


def group_beamformers(H, plan: GroupingPlan, P: float, weights) -> GroupTransmission:
    """Per-group beams with zero inter-group leakage and equalized weighted gains."""
    H = np.asarray(H, dtype=complex)
    M, N = H.shape
    if plan.num_users != N:
        raise ValueError(f"plan covers {plan.num_users} users, channel has {N}")
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(plan.groups),):
        raise ValueError("need one weight per group")
    if P <= 0:
        raise ValueError("transmit power must be positive")

    units, gains, branches = [], [], []
    for g in plan.groups:
        if M <= N - len(g):
            raise FeasibilityError(
                f"group {tuple(u + 1 for u in g)}: {N - len(g)} interfering users leave "
                f"no null space with M={M}"
            )
        # projecting onto the null space of the other groups keeps inner
        # products of the projected pair, so the beam found for the projected
        # channels already satisfies the zero-forcing constraints
        try:
            proj = project_out(_others(H, g), H[:, list(g)])
        except RankError as exc:
            raise FeasibilityError(f"group {tuple(u + 1 for u in g)}: {exc}") from exc
        if len(g) == 1:
            norm2 = float(np.vdot(proj[:, 0], proj[:, 0]).real)
            if not norm2 > 0:
                raise FeasibilityError(f"user {g[0] + 1} vanishes in its null space")
            units.append(proj[:, 0] / math.sqrt(norm2))
            gains.append(norm2)
            branches.append("single")
        else:
            try:
                sol = md_two_user(proj[:, 0], proj[:, 1], 1.0)
            except DegenerateChannelError as exc:
                raise FeasibilityError(f"group {tuple(u + 1 for u in g)}: {exc}") from exc
            units.append(sol.w)
            gains.append(sol.value)
            branches.append(sol.branch)

    gains = np.asarray(gains)
    if np.any(gains <= 0):
        raise FeasibilityError("a group has zero gain in its null space")
    # P_k proportional to 1/(rho_k varsigma_k): equal weighted received power
    inv = 1.0 / (weights * gains)
    powers = P * inv / inv.sum()
    beams = tuple(math.sqrt(p) * u for p, u in zip(powers, units))
    return GroupTransmission(plan, beams, powers, gains, weights, tuple(branches))


def exhaustive_grouping(H, P: float, rates, max_users: int = MAX_EXHAUSTIVE_USERS) -> GroupingPlan:
    """Best plan over every partition into singletons and pairs.

    Plans are ranked by the worst weighted received power; ties go to fewer
    pairs, then to the lexicographically smaller group list.  Plans whose
    null spaces are empty are skipped.
    """
    H = np.asarray(H, dtype=complex)
    M, N = H.shape
    if N > max_users:
        raise QammdError(f"exhaustive search limited to {max_users} users, got {N}")
    best_key, best_plan = None, None
    for plan in enumerate_pair_partitions(N):
        if not plan_is_feasible(plan, M):
            continue
        try:
            tx = group_beamformers(H, plan, P, group_weights(plan, rates))
        except FeasibilityError:
            continue
        key = (-tx.objective, plan.num_pairs, plan.groups)
        if best_key is None or key < best_key:
            best_key, best_plan = key, plan
    if best_plan is None:
        raise FeasibilityError(f"no feasible grouping for M={M}, N={N}")
    return best_plan

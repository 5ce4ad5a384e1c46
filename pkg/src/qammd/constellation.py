"""Uniquely decomposable PAM/QAM constellation groups.

A PAM group with per-user rates ``K_1..K_N`` splits the ``2**K``-ary PAM
``{±(m - 1/2)}`` into scaled sub-PAMs: user ``i`` owns the levels
``±(m - 1/2) * 2**t_i`` with ``t_i = K_1 + ... + K_{i-1}``.  User 1 therefore
always holds the finest lattice.  A QAM group is a pair of independent PAM
groups for the in-phase and quadrature components.

Levels are stored as *twice* their value so every point is an integer
(odd times a power of two) and set comparisons are exact.  User level
``p`` (``0 <= p < 2**K_i``) sits at ``(2p - 2**K_i + 1) * 2**t_i / 2``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import InvalidRateError

__all__ = [
    "PamUdcg",
    "QamUdcg",
    "build_pam_udcg",
    "build_qam_udcg",
    "sum_points",
    "average_sum_power",
    "verify_unique_decomposability",
]


@dataclass(frozen=True)
class PamUdcg:
    """PAM uniquely decomposable constellation group.

    ``rates[i]`` is the number of bits carried by user ``i``.  A user with
    zero bits transmits the constant ``0``.
    """

    rates: tuple[int, ...]

    @property
    def num_users(self) -> int:
        return len(self.rates)

    @property
    def total_bits(self) -> int:
        return sum(self.rates)

    @property
    def sum_size(self) -> int:
        return 1 << self.total_bits

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        """Power-of-two exponent ``t_i`` scaling each user's sub-PAM."""
        return tuple(itertools.accumulate((0,) + self.rates[:-1]))

    @cached_property
    def twice_levels(self) -> tuple[tuple[int, ...], ...]:
        out = []
        for k, t in zip(self.rates, self.offsets):
            if k == 0:
                out.append((0,))
            else:
                out.append(tuple((2 * p - (1 << k) + 1) << t for p in range(1 << k)))
        return tuple(out)

    def levels(self, user: int) -> np.ndarray:
        """Float levels of one user, ordered by PAM index."""
        return np.asarray(self.twice_levels[user], dtype=float) / 2.0

    def sum_levels(self) -> np.ndarray:
        k = self.total_bits
        return (2.0 * np.arange(1 << k) - (1 << k) + 1) / 2.0

    def compose(self, indices: Sequence[np.ndarray]) -> np.ndarray:
        """Sum-constellation value for per-user PAM indices (arrays broadcast)."""
        twice = 0
        for k, t, p in zip(self.rates, self.offsets, indices):
            if k:
                twice = twice + ((2 * np.asarray(p, dtype=np.int64) - (1 << k) + 1) << t)
        return np.asarray(twice, dtype=float) / 2.0


@dataclass(frozen=True)
class QamUdcg:
    """QAM group built from two PAM groups (in-phase and quadrature)."""

    real: PamUdcg
    imag: PamUdcg

    @property
    def num_users(self) -> int:
        return self.real.num_users

    @property
    def rate_pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple(zip(self.real.rates, self.imag.rates))

    @property
    def total_bits(self) -> int:
        return self.real.total_bits + self.imag.total_bits

    def sub_constellation(self, user: int) -> np.ndarray:
        """User points ordered by ``p_c * 2**K_s + p_s``."""
        re = self.real.levels(user)
        im = self.imag.levels(user)
        return (re[:, None] + 1j * im[None, :]).ravel()

    def compose(self, real_indices, imag_indices) -> np.ndarray:
        return self.real.compose(real_indices) + 1j * self.imag.compose(imag_indices)


def _check_rates(rates: Iterable[int]) -> tuple[int, ...]:
    rates = tuple(int(k) for k in rates)
    if any(k < 0 for k in rates):
        raise InvalidRateError(f"negative rate in {rates}")
    return rates


def build_pam_udcg(rates: Iterable[int]) -> PamUdcg:
    """Construct the PAM group for the given per-user bit split.

    >>> build_pam_udcg([1, 1]).twice_levels
    ((-1, 1), (-2, 2))
    """
    rates = _check_rates(rates)
    if not rates or sum(rates) < 1:
        raise InvalidRateError(f"rate split must carry at least one bit, got {rates}")
    return PamUdcg(rates)


def build_qam_udcg(rate_pairs: Iterable[Sequence[int]]) -> QamUdcg:
    """Construct a QAM group from per-user ``(K_c, K_s)`` pairs."""
    pairs = [tuple(p) for p in rate_pairs]
    if not pairs:
        raise InvalidRateError("empty rate list")
    for i, pair in enumerate(pairs):
        if len(pair) != 2:
            raise InvalidRateError(f"user {i}: expected (K_c, K_s), got {pair}")
        if pair[0] < 0 or pair[1] < 0 or pair[0] + pair[1] == 0:
            raise InvalidRateError(f"user {i}: rate pair {pair} carries no bits")
    real = PamUdcg(_check_rates(p[0] for p in pairs))
    imag = PamUdcg(_check_rates(p[1] for p in pairs))
    return QamUdcg(real, imag)


Udcg = Union[PamUdcg, QamUdcg]


def sum_points(udcg: Udcg) -> dict:
    """Map every sum point to the unique per-user tuple producing it.

    Keys and tuple entries are floats (PAM) or complex numbers (QAM); all
    values are dyadic rationals and hence exact in binary floating point.
    """
    if isinstance(udcg, PamUdcg):
        out = {}
        for combo in itertools.product(*udcg.twice_levels):
            out.setdefault(sum(combo) / 2, tuple(c / 2 for c in combo))
        return out
    re_map = sum_points(udcg.real)
    im_map = sum_points(udcg.imag)
    out = {}
    for (gr, xr), (gi, xi) in itertools.product(re_map.items(), im_map.items()):
        out[complex(gr, gi)] = tuple(complex(a, b) for a, b in zip(xr, xi))
    return out


def _pam_power(pam: PamUdcg) -> Fraction:
    # users are independent and zero-mean, so second moments add
    total = Fraction(0)
    for lv in pam.twice_levels:
        total += Fraction(sum(v * v for v in lv), 4 * len(lv))
    return total


def average_sum_power(udcg: Udcg) -> float:
    """Mean ``|sum|^2`` under uniform independent user symbols."""
    if isinstance(udcg, PamUdcg):
        return float(_pam_power(udcg))
    return float(_pam_power(udcg.real) + _pam_power(udcg.imag))


def _exact(x) -> tuple[Fraction, Fraction]:
    z = complex(x)
    return Fraction(z.real), Fraction(z.imag)


def _integer_keys(group: Udcg) -> list[np.ndarray]:
    # one integer per point; adding keys adds points without carries
    if isinstance(group, PamUdcg):
        return [np.asarray(lv, dtype=np.int64) for lv in group.twice_levels]
    base = 1 << (group.imag.total_bits + 2)
    keys = []
    for lr, li in zip(group.real.twice_levels, group.imag.twice_levels):
        keys.append((np.asarray(lr, dtype=np.int64)[:, None] * base + np.asarray(li, dtype=np.int64)).ravel())
    return keys


def verify_unique_decomposability(group) -> bool:
    """Cardinality test: ``|{sum x_i}| == prod |X_i|``.

    ``group`` is a :class:`PamUdcg`, :class:`QamUdcg` or any sequence of
    finite constellations (iterables of real or complex numbers), compared
    under exact rational arithmetic.
    """
    if isinstance(group, (PamUdcg, QamUdcg)):
        sums = np.zeros(1, dtype=np.int64)
        product = 1
        for key in _integer_keys(group):
            key = np.unique(key)
            product *= key.size
            sums = np.unique(np.add.outer(sums, key).ravel())
        return sums.size == product

    consts = [{_exact(x) for x in c} for c in group]
    if not consts or any(not c for c in consts):
        return False
    sums = {(Fraction(0), Fraction(0))}
    product = 1
    for c in consts:
        product *= len(c)
        sums = {(s[0] + x[0], s[1] + x[1]) for s in sums for x in c}
    return len(sums) == product

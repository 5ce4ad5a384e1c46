"""Fast sum-signal detection for PAM/QAM groups and a brute-force ML oracle.

Detection works on integer lattice indices.  A sum point ``g`` of the
``2**K``-PAM has index ``p = g + (2**K - 1)/2`` in ``0..2**K - 1``; user ``i``
recovers its own index as the ``K_i``-bit digit of ``p`` starting at bit
``t_i``.  No floating-point constellation arithmetic is involved after the
quantizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constellation import PamUdcg, QamUdcg, sum_points
from .errors import InvalidPointError, QammdError

__all__ = [
    "DetectionResult",
    "quantize_pam_index",
    "quantize_pam_sum",
    "split_pam_index",
    "split_pam_sum",
    "detect_qam",
    "detect_qam_indices",
    "ml_detect_oracle",
    "ml_detect_indices",
]


@dataclass(frozen=True)
class DetectionResult:
    sum_estimate: complex
    per_user_symbols: tuple[complex, ...]
    # (real index, imag index) per user
    per_user_indices: tuple[tuple[int, int], ...]


def quantize_pam_index(y, total_bits: int) -> np.ndarray:
    """Index of the nearest ``2**K``-PAM point, using the floor rule.

    Each cell is the half-open interval ``[g - 1/2, g + 1/2)``, so a sample
    exactly halfway between two points goes to the upper one.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise QammdError("received sample is not finite")
    if total_bits == 0:
        return np.zeros(y.shape, dtype=np.int64)
    half = float(1 << (total_bits - 1))
    p = np.floor(y + half)
    return np.clip(p, 0, (1 << total_bits) - 1).astype(np.int64)


def quantize_pam_sum(y, total_bits: int):
    """Nearest point of the ``2**K``-PAM ``{±(m - 1/2)}`` to ``y``.

    >>> float(quantize_pam_sum(0.3, 2))
    0.5
    """
    p = quantize_pam_index(y, total_bits)
    out = p - ((1 << total_bits) - 1) / 2.0
    return out if out.ndim else float(out)


def split_pam_index(p, rates) -> list[np.ndarray]:
    """Per-user indices whose weighted sum is the sum index ``p``."""
    p = np.asarray(p, dtype=np.int64)
    out = []
    shift = 0
    for k in rates:
        if k == 0:
            out.append(np.zeros(p.shape, dtype=np.int64))
        else:
            out.append((p >> shift) & ((1 << k) - 1))
        shift += k
    return out


def split_pam_sum(g, rates) -> tuple[float, ...]:
    """Unique per-user PAM symbols summing to the sum point ``g``.

    >>> split_pam_sum(2.5, (2, 1))
    (0.5, 2.0)
    """
    rates = tuple(rates)
    total = sum(rates)
    twice_p = 2 * float(g) + (1 << total) - 1
    if not (twice_p.is_integer() and int(twice_p) % 2 == 0 and 0 <= twice_p < 2 << total):
        raise InvalidPointError(f"{g} is not a point of the {1 << total}-PAM")
    p = int(twice_p) // 2
    pam = PamUdcg(rates)
    return tuple(
        float(pam.levels(i)[int(q)]) if k else 0.0
        for i, (k, q) in enumerate(zip(rates, split_pam_index(p, rates)))
    )


def detect_qam_indices(y, udcg: QamUdcg) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized fast detection.

    Returns ``(real_idx, imag_idx)``, each of shape ``y.shape + (N,)``.
    """
    y = np.asarray(y, dtype=complex)
    pc = quantize_pam_index(y.real, udcg.real.total_bits)
    ps = quantize_pam_index(y.imag, udcg.imag.total_bits)
    rc = np.stack(split_pam_index(pc, udcg.real.rates), axis=-1)
    rs = np.stack(split_pam_index(ps, udcg.imag.rates), axis=-1)
    return rc, rs


def _result(udcg: QamUdcg, rc, rs) -> DetectionResult:
    symbols = tuple(
        complex(udcg.real.levels(i)[rc[i]], udcg.imag.levels(i)[rs[i]])
        for i in range(udcg.num_users)
    )
    return DetectionResult(
        sum_estimate=complex(sum(symbols)),
        per_user_symbols=symbols,
        per_user_indices=tuple((int(a), int(b)) for a, b in zip(rc, rs)),
    )


def _as_qam(udcg) -> QamUdcg:
    if isinstance(udcg, PamUdcg):
        return QamUdcg(udcg, PamUdcg((0,) * udcg.num_users))
    return udcg


def detect_qam(y: complex, udcg) -> DetectionResult:
    """Quantize each component of ``y`` and split the sum per user.

    A :class:`PamUdcg` is treated as a QAM group with an empty quadrature.
    """
    udcg = _as_qam(udcg)
    rc, rs = detect_qam_indices(complex(y), udcg)
    return _result(udcg, rc, rs)


def _oracle_table(udcg: QamUdcg):
    # sum points in tie-break order, plus per-user (real, imag) indices of
    # each point's preimage, looked up from the enumerated map
    pts = sum_points(udcg)
    keys = sorted(pts, key=lambda z: (z.real, z.imag))
    rc = np.empty((len(keys), udcg.num_users), dtype=np.int64)
    rs = np.empty_like(rc)
    for i in range(udcg.num_users):
        re_lv = udcg.real.levels(i)
        im_lv = udcg.imag.levels(i)
        for j, key in enumerate(keys):
            x = pts[key][i]
            rc[j, i] = int(np.flatnonzero(re_lv == x.real)[0])
            rs[j, i] = int(np.flatnonzero(im_lv == x.imag)[0])
    return np.array(keys, dtype=complex), rc, rs


def ml_detect_indices(y, udcg: QamUdcg, return_gap: bool = False):
    """Exhaustive nearest-point search over the sum constellation.

    Ties go to the smaller real part, then the smaller imaginary part.  With
    ``return_gap`` the distance margin between the two closest points is
    returned too (zero flags an exact tie).
    """
    y = np.atleast_1d(np.asarray(y, dtype=complex))
    pts, rc_tab, rs_tab = _oracle_table(udcg)
    d = np.abs(y[:, None] - pts[None, :]) ** 2
    best = np.argmin(d, axis=1)
    rc, rs = rc_tab[best], rs_tab[best]
    if not return_gap:
        return rc, rs
    if pts.size < 2:
        return rc, rs, np.full(y.shape, np.inf)
    two = np.partition(d, 1, axis=1)[:, :2]
    return rc, rs, two[:, 1] - two[:, 0]


def ml_detect_oracle(y: complex, udcg) -> DetectionResult:
    """Brute-force ML detection (test oracle for :func:`detect_qam`)."""
    udcg = _as_qam(udcg)
    rc, rs = ml_detect_indices(complex(y), udcg)
    return _result(udcg, rc[0], rs[0])

"""Two-user channel geometry and null-space bases for zero-forcing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    CollinearPairError,
    DegenerateChannelError,
    InconsistentStatsError,
    RankError,
)

__all__ = [
    "COLLINEAR_TOL",
    "PairStats",
    "PairSpectra",
    "EigenBasis",
    "pair_stats",
    "closed_form_spectra",
    "difference_eigenbasis",
    "null_complement_basis",
    "project_out",
    "is_collinear",
]

# 1 - cos^2(phi) below this is treated as a linearly dependent pair
COLLINEAR_TOL = 1e-12
_TINY = 1e-14


@dataclass(frozen=True)
class PairStats:
    a: float
    b: float
    c: float
    phi_c: float
    rho: float
    cos_phi: float


@dataclass(frozen=True)
class PairSpectra:
    mu1: float
    mu2: float
    lam1: float
    lam2: float
    sin_theta: float

    @property
    def kappa(self) -> float:
        return self.lam1 / self.lam2 if self.lam2 > 0 else math.inf


@dataclass(frozen=True)
class EigenBasis:
    """Leading eigenvectors of ``h1 h1^H - h2 h2^H`` and the rotated channels.

    ``V`` is ``M x 2`` with the positive eigenvalue first; ``h1t``/``h2t``
    are ``V^H h1`` and ``V^H h2``.
    """

    V: np.ndarray
    h1t: np.ndarray
    h2t: np.ndarray

    @property
    def beta(self) -> float:
        return float(np.angle(self.h1t[0]))

    @property
    def gamma(self) -> float:
        return float(np.angle(self.h2t[1]))

    @property
    def alpha(self) -> float:
        return float(np.angle(self.h2t[0]) - np.angle(self.h2t[1]))


def _vec(h) -> np.ndarray:
    return np.asarray(h, dtype=complex).ravel()


def pair_stats(h1, h2) -> PairStats:
    """Norms, cross-correlation and Hermitian angle of a channel pair.

    >>> pair_stats([2, 0], [1, 0]).cos_phi
    1.0
    """
    h1, h2 = _vec(h1), _vec(h2)
    if h1.shape != h2.shape:
        raise ValueError(f"channel lengths differ: {h1.size} vs {h2.size}")
    a = float(np.vdot(h1, h1).real)
    b = float(np.vdot(h2, h2).real)
    if a <= 0 or b <= 0:
        raise DegenerateChannelError("zero channel vector")
    inner = np.vdot(h1, h2)
    c = float(abs(inner))
    cos_phi = min(c / math.sqrt(a * b), 1.0)
    return PairStats(a, b, c, float(np.angle(inner)), a / b, cos_phi)


def is_collinear(stats: PairStats, tol: float = COLLINEAR_TOL) -> bool:
    return 1.0 - stats.cos_phi**2 < tol


def closed_form_spectra(stats: PairStats) -> PairSpectra:
    """Singular values of ``[h1 h2]`` and eigenvalues of the difference matrix.

    Only ``a``, ``b`` and ``c`` are used.
    """
    a, b, c = stats.a, stats.b, stats.c
    if c * c > a * b * (1 + 1e-12):
        raise InconsistentStatsError(f"c^2={c * c} exceeds ab={a * b}")
    c = min(c, math.sqrt(a * b))
    d = math.sqrt((a - b) ** 2 + 4 * c * c)
    s = math.sqrt(max((a + b) ** 2 - 4 * c * c, 0.0))
    mu1 = (a + b + d) / 2
    mu2 = max((a + b - d) / 2, 0.0)
    lam1 = max((a - b + s) / 2, 0.0)
    lam2 = max((b - a + s) / 2, 0.0)
    sin_theta = 2 * c / (a + b + s)
    return PairSpectra(mu1, mu2, lam1, lam2, sin_theta)


def difference_eigenbasis(h1, h2) -> tuple[EigenBasis, PairSpectra]:
    """Eigen-decompose ``A = h1 h1^H - h2 h2^H`` on the span of the pair.

    Raises :class:`CollinearPairError` when the pair is (nearly) dependent.
    """
    h1, h2 = _vec(h1), _vec(h2)
    stats = pair_stats(h1, h2)
    if is_collinear(stats):
        raise CollinearPairError("channels are linearly dependent")

    # two-pass Gram-Schmidt basis of span{h1, h2}
    u1 = h1 / math.sqrt(stats.a)
    v = h2 - u1 * np.vdot(u1, h2)
    v = v - u1 * np.vdot(u1, v)
    u2 = v / np.linalg.norm(v)
    U = np.stack([u1, u2], axis=1)

    g1 = U.conj().T @ h1
    g2 = U.conj().T @ h2
    A = np.outer(g1, g1.conj()) - np.outer(g2, g2.conj())
    evals, evecs = np.linalg.eigh(A)
    # eigh sorts ascending: (-lam2, lam1)
    V = U @ evecs[:, ::-1]
    h1t = V.conj().T @ h1
    h2t = V.conj().T @ h2

    gram = np.array([[stats.a, np.vdot(h1, h2)], [np.vdot(h2, h1), stats.b]])
    mu = np.linalg.eigvalsh(gram)
    spectra = PairSpectra(
        mu1=float(mu[1]),
        mu2=float(max(mu[0], 0.0)),
        lam1=float(evals[1]),
        lam2=float(-evals[0]),
        sin_theta=float(min(abs(h2t[0]) / abs(h1t[0]), 1.0)),
    )
    return EigenBasis(V, h1t, h2t), spectra


def null_complement_basis(Hbar) -> np.ndarray:
    """Orthonormal basis ``Q`` of the orthogonal complement of ``span(Hbar)``.

    ``Q`` spans the range of the projector ``I - Hbar (Hbar^H Hbar)^-1 Hbar^H``
    and is obtained from a column-pivoted QR factorization of that projector.
    An ``M x 0`` input yields the identity.
    """
    Hbar = np.asarray(Hbar, dtype=complex)
    if Hbar.ndim != 2:
        raise ValueError("Hbar must be a matrix")
    M, r = Hbar.shape
    if r == 0:
        return np.eye(M, dtype=complex)
    if r >= M:
        raise RankError(f"Hbar has {r} columns but only {M} rows; complement is empty")
    sv = np.linalg.svd(Hbar, compute_uv=False)
    if sv[0] <= _TINY or sv[-1] <= 1e-12 * sv[0]:
        raise RankError("Hbar is rank deficient")

    def project(X):
        return X - Hbar @ np.linalg.solve(Hbar.conj().T @ Hbar, Hbar.conj().T @ X)

    P = project(np.eye(M, dtype=complex))
    Q, _, _ = scipy.linalg.qr(P, mode="economic", pivoting=True)
    Q = Q[:, : M - r]
    # second projection pass removes residual leakage into span(Hbar)
    Q, _ = np.linalg.qr(project(Q))
    return Q


def project_out(Hbar, X) -> np.ndarray:
    """Apply ``I - Hbar (Hbar^H Hbar)^-1 Hbar^H`` to the columns of ``X``.

    Two passes keep the residual ``Hbar^H (result)`` at rounding level.
    """
    X = np.asarray(X, dtype=complex)
    Hbar = np.asarray(Hbar, dtype=complex)
    if Hbar.shape[1] == 0:
        return X.copy()
    G = Hbar.conj().T @ Hbar
    try:
        for _ in range(2):
            X = X - Hbar @ np.linalg.solve(G, Hbar.conj().T @ X)
    except np.linalg.LinAlgError as exc:
        raise RankError("Hbar is rank deficient") from exc
    return X

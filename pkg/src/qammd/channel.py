"""Channel generators: i.i.d. and KMS-correlated Rayleigh, LoS arrays.

Random draws use numpy's Philox counter-based generator keyed by a
``SeedSequence`` built from ``(master_seed, *stream)``, so any trial can be
regenerated on its own and results do not depend on how trials are split
across workers.
"""

from __future__ import annotations

import cmath
import csv
import io
import math
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .errors import ConfigError, QammdError

__all__ = [
    "KmsSpec",
    "LosSpec",
    "kms_covariance",
    "kms_factor",
    "correlated_channel",
    "los_channel",
    "stream_rng",
    "write_channel_csv",
    "read_channel_csv",
]


def stream_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent Philox stream for ``(seed, *stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


@dataclass(frozen=True)
class KmsSpec:
    rho: complex
    M: int

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ConfigError("rho", f"correlation magnitude must be < 1, got {abs(self.rho)}")
        if self.M < 1:
            raise ConfigError("M", "need at least one antenna")


@dataclass(frozen=True)
class LosSpec:
    gains: tuple[float, float]
    cosines: tuple[float, float]
    spacing: float
    phases: tuple[float, float]
    M: int


def kms_covariance(spec: KmsSpec) -> np.ndarray:
    """Toeplitz matrix with ``rho**(n-m)`` above the diagonal, Hermitian.

    >>> kms_covariance(KmsSpec(0.5, 2)).real.tolist()
    [[1.0, 0.5], [0.5, 1.0]]
    """
    M = spec.M
    rho = complex(spec.rho)
    S = np.eye(M, dtype=complex)
    for d in range(1, M):
        v = rho**d
        idx = np.arange(M - d)
        S[idx, idx + d] = v
        S[idx + d, idx] = v.conjugate()
    return S


def kms_factor(spec: KmsSpec) -> np.ndarray:
    """Lower Cholesky factor ``L`` with ``L L^H`` equal to the covariance."""
    if spec.rho == 0:
        return np.eye(spec.M, dtype=complex)
    return np.linalg.cholesky(kms_covariance(spec))


def correlated_channel(spec: KmsSpec, N: int, rng: np.random.Generator, factor=None) -> np.ndarray:
    """``M x N`` channel with columns ``L g_k``, ``g_k ~ CN(0, I)`` independent.

    ``factor`` may pass a precomputed :func:`kms_factor` to skip the
    Cholesky step inside loops.
    """
    g = rng.standard_normal((2, spec.M, N))
    G = (g[0] + 1j * g[1]) * math.sqrt(0.5)
    if spec.rho == 0:
        return G
    L = kms_factor(spec) if factor is None else factor
    return L @ G


def los_channel(spec: LosSpec) -> np.ndarray:
    """Two uniform-linear-array steering vectors with given power and phase."""
    if spec.M < 1:
        raise QammdError("need at least one antenna")
    m = np.arange(spec.M)
    cols = []
    for gain, omega, psi in zip(spec.gains, spec.cosines, spec.phases):
        steer = np.exp(-2j * math.pi * spec.spacing * omega * m)
        cols.append(math.sqrt(gain) * cmath.exp(1j * psi) / math.sqrt(spec.M) * steer)
    return np.stack(cols, axis=1)


def write_channel_csv(H, out: TextIO | None = None) -> str:
    """One line per user: ``re(h_1k), im(h_1k), ..., re(h_Mk), im(h_Mk)``."""
    H = np.asarray(H, dtype=complex)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for k in range(H.shape[1]):
        w.writerow([repr(float(x)) for z in H[:, k] for x in (z.real, z.imag)])
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def read_channel_csv(src: TextIO) -> np.ndarray:
    """Parse the format written by :func:`write_channel_csv`.

    Blank lines and lines starting with ``#`` are skipped.  Errors name
    the offending line.
    """
    cols = []
    for lineno, row in enumerate(csv.reader(src), start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        try:
            vals = [float(x) for x in row]
        except ValueError as exc:
            raise ConfigError(f"line {lineno}", f"not a number ({exc})") from None
        if len(vals) % 2:
            raise ConfigError(f"line {lineno}", "odd number of values; need re/im pairs")
        col = np.asarray(vals[0::2]) + 1j * np.asarray(vals[1::2])
        if cols and col.size != cols[0].size:
            raise ConfigError(f"line {lineno}", f"expected {2 * cols[0].size} values, got {len(vals)}")
        cols.append(col)
    if not cols:
        raise ConfigError("line 0", "no channel rows found")
    return np.stack(cols, axis=1)

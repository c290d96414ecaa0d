"""Right-hand sides of the truncated aggregation systems.

Three model variants share the aggregation operator

    birth_s = 1/2 sum_{i+j=s} K(i,j) n_i n_j
    death_s = n_s sum_{i<=M} K(s,i) n_i

and differ in what is added on top: nothing (pure aggregation), a constant
injection vector (sources), or collisional shattering of both partners into
monomers at rate ``lam`` times the aggregation rate (shattering).

For low-rank kernels the birth term is a sum of R linear convolutions and is
evaluated with real FFTs in O(M R log M); the death and shattering terms reduce
to O(M R) projections. Dense kernels fall back to direct O(M^2) sums.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
import scipy.fft

from .kernels import KernelRep, LowRankFactors

ORACLE_MAX_M = 4096


class ModelVariant(str, enum.Enum):
    AGGREGATION = "aggregation"
    SOURCES = "sources"
    SHATTERING = "shattering"


@dataclass(frozen=True)
class SourceTerm:
    """Sparse injection rates ``{size: rate}``."""

    rates: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        rates = {int(k): float(v) for k, v in dict(self.rates).items()}
        for k, v in rates.items():
            if k < 1:
                raise ValueError(f"source size index must be >= 1, got {k}")
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"source rate at k={k} must be finite and >= 0, got {v}")
        object.__setattr__(self, "rates", rates)

    def dense(self, M: int) -> np.ndarray:
        P = np.zeros(M)
        for k, v in self.rates.items():
            if k > M:
                raise ValueError(f"source at k={k} lies beyond truncation M={M}")
            P[k - 1] = v
        return P


@dataclass(frozen=True)
class ModelSpec:
    variant: ModelVariant
    kernel: KernelRep
    sources: SourceTerm = field(default_factory=SourceTerm)
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "variant", ModelVariant(self.variant))
        if self.M < 2:
            raise ValueError(f"truncation size must be >= 2, got {self.M}")
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"shattering rate must be finite and >= 0, got {self.lam}")
        if self.variant is ModelVariant.SOURCES:
            P = self.sources.dense(self.M)
        else:
            P = np.zeros(self.M)
        P.flags.writeable = False
        object.__setattr__(self, "_P", P)

    @property
    def M(self) -> int:
        return self.kernel.M

    @property
    def source_vector(self) -> np.ndarray:
        return self._P


class RhsWorkspace:
    """Scratch buffers for the FFT birth term plus an evaluation counter.

    Not thread safe: give every concurrent trajectory its own workspace.
    """

    def __init__(self, M: int, R: int = 1, workers: Optional[int] = None):
        self.M = M
        self.R = R
        self.nfft = 1 << (2 * M - 1).bit_length()  # power of two >= 2M
        self.workers = workers
        self._pad_u = np.zeros((R, self.nfft))
        self._pad_v = np.zeros((R, self.nfft))
        self.evals = 0

    def fits(self, M: int, R: int) -> bool:
        return self.M == M and self.R == R


def _check_size(kernel: KernelRep, n: np.ndarray) -> None:
    if n.ndim != 1 or n.shape[0] != kernel.M:
        raise ValueError(f"state of shape {n.shape} does not match kernel size M={kernel.M}")


def _birth_lowrank(F: LowRankFactors, n: np.ndarray, ws: RhsWorkspace) -> np.ndarray:
    M = F.M
    a, b = ws._pad_u, ws._pad_v
    np.multiply(F.U.T, n, out=a[:, :M])
    # tails beyond M stay zero from construction
    fa = scipy.fft.rfft(a, axis=1, workers=ws.workers)
    pairs = F.v_rows_in_u
    if pairs is None:
        np.multiply(F.V, n, out=b[:, :M])
        fb = scipy.fft.rfft(b, axis=1, workers=ws.workers)
    else:
        fb = fa[list(pairs)]
    prod = fa[0] * fb[0]
    for r in range(1, F.R):
        prod += fa[r] * fb[r]
    conv = scipy.fft.irfft(prod, n=ws.nfft, workers=ws.workers)
    out = np.empty(M)
    out[0] = 0.0
    # conv index c = (i-1)+(j-1) holds pairs with i+j = c+2
    out[1:] = 0.5 * conv[:M - 1]
    return out


def _birth_dense_direct(K: np.ndarray, n: np.ndarray) -> np.ndarray:
    M = K.shape[0]
    P = K * np.outer(n, n)
    idx = np.add.outer(np.arange(M), np.arange(M))
    sums = np.bincount(idx.ravel(), weights=P.ravel(), minlength=2 * M - 1)
    out = np.empty(M)
    out[0] = 0.0
    out[1:] = 0.5 * sums[:M - 1]
    return out


def birth_term(kernel: KernelRep, n: np.ndarray, ws: Optional[RhsWorkspace] = None) -> np.ndarray:
    """Gain of size s from pairs with i + j = s; entry for s = 1 is zero."""
    n = np.asarray(n, dtype=np.float64)
    _check_size(kernel, n)
    if isinstance(kernel, LowRankFactors):
        if ws is None or not ws.fits(kernel.M, kernel.R):
            ws = RhsWorkspace(kernel.M, kernel.R)
        return _birth_lowrank(kernel, n, ws)
    return _birth_dense_direct(kernel.K, n)


def death_term(kernel: KernelRep, n: np.ndarray) -> np.ndarray:
    """Loss of size s by merging with any partner up to the truncation."""
    n = np.asarray(n, dtype=np.float64)
    _check_size(kernel, n)
    return n * kernel.row_sums(n)


def _monomer_gain(kernel: KernelRep, n: np.ndarray, lam: float) -> float:
    k = np.arange(1, kernel.M + 1, dtype=np.float64)
    big = n.copy()
    big[0] = 0.0
    kbig = k * big
    if isinstance(kernel, LowRankFactors):
        U, V = kernel.U, kernel.V
        # sum_{i,j>=2} (i+j) K_ij n_i n_j split over rank components
        pair = np.dot(kbig @ U, V @ big) + np.dot(big @ U, V @ kbig)
        monomer = n[0] * np.dot(U[0], V @ kbig)
    else:
        K = kernel.K
        pair = kbig @ K @ big + big @ K @ kbig
        monomer = n[0] * np.dot(K[0], kbig)
    return lam * (0.5 * pair + monomer)


def shattering_terms(kernel: KernelRep, n: np.ndarray, lam: float) -> np.ndarray:
    """Shattering contribution: monomer gain at s = 1, loss for s >= 2.

    Collisions of two clusters with i, j >= 2 release i + j monomers, and a
    monomer hitting a cluster of size j >= 2 releases j of them. The loss of
    each size s >= 2 is ``lam * death_s``. Mass flux of the result is zero.
    """
    if lam < 0:
        raise ValueError(f"shattering rate must be >= 0, got {lam}")
    n = np.asarray(n, dtype=np.float64)
    _check_size(kernel, n)
    out = -lam * death_term(kernel, n)
    out[0] = _monomer_gain(kernel, n, lam)
    return out


def eval_rhs(model: ModelSpec, n: np.ndarray, ws: Optional[RhsWorkspace] = None) -> np.ndarray:
    n = np.asarray(n, dtype=np.float64)
    kernel = model.kernel
    _check_size(kernel, n)
    R = kernel.R if isinstance(kernel, LowRankFactors) else 1
    if ws is None:
        ws = RhsWorkspace(kernel.M, R)
    elif not ws.fits(kernel.M, R):
        raise ValueError(f"workspace sized for M={ws.M}, R={ws.R}; model has M={kernel.M}, R={R}")
    ws.evals += 1

    row = kernel.row_sums(n)
    out = birth_term(kernel, n, ws)
    out -= n * row
    if model.variant is ModelVariant.SOURCES:
        out += model.source_vector
    elif model.variant is ModelVariant.SHATTERING and model.lam > 0:
        out[1:] -= model.lam * n[1:] * row[1:]
        out[0] += _monomer_gain(kernel, n, model.lam)
    return out


def eval_rhs_dense_oracle(model: ModelSpec, n: np.ndarray) -> np.ndarray:
    """Direct double-sum evaluation of the same right-hand side.

    Works from the materialized kernel matrix with explicit per-size sums and
    shares no code with :func:`eval_rhs`. Meant for verification at M up to
    ``ORACLE_MAX_M``.
    """
    M = model.M
    if M > ORACLE_MAX_M:
        raise ValueError(f"dense oracle limited to M <= {ORACLE_MAX_M}, got {M}")
    n = np.asarray(n, dtype=np.float64)
    if n.shape != (M,):
        raise ValueError(f"state of shape {n.shape} does not match M={M}")
    K = model.kernel.reconstruct()
    lam = model.lam if model.variant is ModelVariant.SHATTERING else 0.0

    out = np.zeros(M)
    for s in range(1, M + 1):
        # pairs (i, s-i), i = 1..s-1, as zero-based indices
        i = np.arange(0, s - 1)
        birth = 0.5 * np.sum(K[i, s - 2 - i] * n[i] * n[s - 2 - i])
        death = n[s - 1] * np.sum(K[s - 1, :] * n)
        if s == 1:
            out[0] = -death
        else:
            out[s - 1] = birth - death - lam * death
    if lam > 0:
        sizes = np.arange(1, M + 1)
        gain = 0.0
        for i in range(2, M + 1):
            gain += 0.5 * np.sum((i + sizes[1:]) * K[i - 1, 1:] * n[i - 1] * n[1:])
        gain += n[0] * np.sum(sizes[1:] * K[0, 1:] * n[1:])
        out[0] += lam * gain
    if model.variant is ModelVariant.SOURCES:
        out += model.source_vector
    return out


def euler_stability_bound(kernel: KernelRep, n: np.ndarray, a: float = 0.25) -> float:
    """Empirical explicit-Euler step bound ``a / max_i sum_j K(i,j) n_j``.

    Returns ``math.inf`` when the state is zero. Diagnostic and warm start
    only; the adaptive controllers never consult it after the first step.
    """
    if a <= 0:
        raise ValueError(f"a must be positive, got {a}")
    n = np.asarray(n, dtype=np.float64)
    _check_size(kernel, n)
    peak = float(np.max(kernel.row_sums(n)))
    if peak <= 0:
        return math.inf
    return a / peak


class Rhs:
    """Callable ``n -> S(n)`` bound to a model and its own workspace."""

    def __init__(self, model: ModelSpec, workers: Optional[int] = None):
        self.model = model
        R = model.kernel.R if isinstance(model.kernel, LowRankFactors) else 1
        self.ws = RhsWorkspace(model.M, R, workers=workers)

    @property
    def evals(self) -> int:
        return self.ws.evals

    def __call__(self, n: np.ndarray) -> np.ndarray:
        return eval_rhs(self.model, n, self.ws)

"""Coagulation kernels in closed, dense and exact low-rank factored form.

Three closed-form kernels are supported:

``constant``
    K(i, j) = 1.
``brownian``
    Generalized Brownian kernel K(i, j) = (i/j)**alpha + (j/i)**alpha.
    Note that ``brownian`` with alpha = 0 gives K = 2, not the unit
    ``constant`` kernel; the two are kept as distinct specs.
``free_molecular``
    K(i, j) = (i**(1/3) + j**(1/3))**2 * sqrt(1/i + 1/j).

``constant`` and ``brownian`` have exact separable forms of rank 1 and 2.
``free_molecular`` has none and must be used densely, or supplied as
precomputed factors through a ``custom`` factor file.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

DENSE_MAX_M = 8192
_SYMMETRY_RTOL = 1e-12


class KernelError(ValueError):
    """Invalid kernel specification or factor data."""


class FactorizationError(KernelError):
    """The requested kernel has no exact finite-rank factorization."""


class FactorFileError(KernelError):
    """A custom factor file could not be parsed."""


class KernelKind(str, enum.Enum):
    CONSTANT = "constant"
    BROWNIAN = "brownian"
    FREE_MOLECULAR = "free_molecular"
    CUSTOM = "custom"


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind
    alpha: float = 0.0
    path: Optional[Path] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if self.kind is KernelKind.BROWNIAN:
            if not math.isfinite(self.alpha) or self.alpha < 0:
                raise KernelError(f"brownian alpha must be finite and >= 0, got {self.alpha}")
        if self.kind is KernelKind.CUSTOM and self.path is None:
            raise KernelError("custom kernel requires a factor file path")

    @classmethod
    def constant(cls) -> "KernelSpec":
        return cls(KernelKind.CONSTANT)

    @classmethod
    def brownian(cls, alpha: float) -> "KernelSpec":
        return cls(KernelKind.BROWNIAN, alpha=float(alpha))

    @classmethod
    def free_molecular(cls) -> "KernelSpec":
        return cls(KernelKind.FREE_MOLECULAR)

    @classmethod
    def custom(cls, path) -> "KernelSpec":
        return cls(KernelKind.CUSTOM, path=Path(path))


def _closed_form(spec: KernelSpec, i, j):
    if spec.kind is KernelKind.CONSTANT:
        return np.ones(np.broadcast(i, j).shape)
    if spec.kind is KernelKind.BROWNIAN:
        a = spec.alpha
        return (i / j) ** a + (j / i) ** a
    if spec.kind is KernelKind.FREE_MOLECULAR:
        return (np.cbrt(i) + np.cbrt(j)) ** 2 * np.sqrt(1.0 / i + 1.0 / j)
    raise KernelError("custom kernels have no closed form; entries come from factors")


def kernel_entry(spec: KernelSpec, i: int, j: int) -> float:
    """Closed-form rate K(i, j) for sizes ``i, j >= 1``."""
    if i < 1 or j < 1:
        raise KernelError(f"sizes must be >= 1, got ({i}, {j})")
    return float(_closed_form(spec, float(i), float(j)))


@dataclass(frozen=True)
class LowRankFactors:
    """Kernel K = U @ V with U of shape (M, R) and V of shape (R, M).

    Row ``i - 1`` of U and column ``j - 1`` of V belong to particle sizes
    ``i`` and ``j``.
    """

    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U = np.array(self.U, dtype=np.float64)
        V = np.array(self.V, dtype=np.float64)
        if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[0] or U.shape[0] != V.shape[1]:
            raise KernelError(f"incompatible factor shapes {U.shape} and {V.shape}")
        if U.shape[0] < 1 or U.shape[1] < 1:
            raise KernelError("factors must have M >= 1 and R >= 1")
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(V))):
            raise KernelError("factors contain non-finite values")
        U.flags.writeable = False
        V.flags.writeable = False
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "v_rows_in_u", _match_rows(V, U.T))

    # v_rows_in_u[a] = b when V[a, :] equals U[:, b] exactly, else None for the
    # whole map; symmetric factorizations then need only R forward transforms
    @property
    def M(self) -> int:
        return self.U.shape[0]

    @property
    def R(self) -> int:
        return self.U.shape[1]

    def entry(self, i: int, j: int) -> float:
        return float(self.U[i - 1] @ self.V[:, j - 1])

    def reconstruct(self) -> np.ndarray:
        return self.U @ self.V

    def row_sums(self, n: np.ndarray) -> np.ndarray:
        """sum_j K(i, j) n_j for every i."""
        return self.U @ (self.V @ n)

    def validate(self, samples: int = 4096, seed: int = 0) -> None:
        """Check symmetry and nonnegativity on a sample of entries.

        Small kernels are checked exhaustively.
        """
        M = self.M
        if M * M <= samples:
            K = self.reconstruct()
            i, j = np.indices(K.shape)
            kij, kji = K[i, j], K[j, i]
        else:
            rng = np.random.default_rng(seed)
            i = np.concatenate([np.arange(M), rng.integers(0, M, samples)])
            j = np.concatenate([np.arange(M)[::-1], rng.integers(0, M, samples)])
            kij = np.einsum("kr,rk->k", self.U[i], self.V[:, j])
            kji = np.einsum("kr,rk->k", self.U[j], self.V[:, i])
        scale = np.maximum(1.0, np.abs(kij))
        if np.any(np.abs(kij - kji) > _SYMMETRY_RTOL * scale):
            raise KernelError("reconstructed kernel is not symmetric")
        if np.any(kij < 0):
            raise KernelError("reconstructed kernel has negative entries")


def _match_rows(A: np.ndarray, B: np.ndarray):
    out = []
    for row in A:
        hits = [b for b in range(B.shape[0]) if np.array_equal(row, B[b])]
        if not hits:
            return None
        out.append(hits[0])
    return tuple(out)


@dataclass(frozen=True)
class DenseKernel:
    K: np.ndarray

    def __post_init__(self):
        K = np.array(self.K, dtype=np.float64)
        if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] < 1:
            raise KernelError(f"dense kernel must be square, got shape {K.shape}")
        if not np.all(np.isfinite(K)) or np.any(K < 0):
            raise KernelError("dense kernel must be finite and nonnegative")
        if not np.allclose(K, K.T, rtol=_SYMMETRY_RTOL, atol=0.0):
            raise KernelError("dense kernel is not symmetric")
        K.flags.writeable = False
        object.__setattr__(self, "K", K)

    @property
    def M(self) -> int:
        return self.K.shape[0]

    def entry(self, i: int, j: int) -> float:
        return float(self.K[i - 1, j - 1])

    def reconstruct(self) -> np.ndarray:
        return self.K

    def row_sums(self, n: np.ndarray) -> np.ndarray:
        return self.K @ n


KernelRep = Union[LowRankFactors, DenseKernel]


def build_factors(spec: KernelSpec, M: int) -> LowRankFactors:
    if M < 1:
        raise KernelError(f"M must be positive, got {M}")
    if spec.kind is KernelKind.CONSTANT:
        return LowRankFactors(np.ones((M, 1)), np.ones((1, M)))
    if spec.kind is KernelKind.BROWNIAN:
        k = np.arange(1, M + 1, dtype=np.float64)
        up, down = k**spec.alpha, k**-spec.alpha
        return LowRankFactors(np.column_stack([up, down]), np.vstack([down, up]))
    if spec.kind is KernelKind.FREE_MOLECULAR:
        raise FactorizationError("free_molecular kernel has no exact factorization; "
                                 "use the dense path or custom factors")
    factors = load_factors(spec.path)
    if factors.M != M:
        raise KernelError(f"factor file has M={factors.M}, model expects M={M}")
    return factors


def build_dense(spec: KernelSpec, M: int) -> DenseKernel:
    if M < 1:
        raise KernelError(f"M must be positive, got {M}")
    if M > DENSE_MAX_M:
        raise KernelError(f"dense kernels are limited to M <= {DENSE_MAX_M}, got {M}")
    if spec.kind is KernelKind.CUSTOM:
        return DenseKernel(build_factors(spec, M).reconstruct())
    k = np.arange(1, M + 1, dtype=np.float64)
    K = _closed_form(spec, k[:, None], k[None, :])
    # the closed forms are symmetric analytically; enforce it bitwise
    return DenseKernel(0.5 * (K + K.T))


def load_factors(path) -> LowRankFactors:
    """Read a factor file: header ``M R``, then M rows of U, then R rows of V."""
    path = Path(path)
    try:
        lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise FactorFileError(f"cannot read factor file {path}: {exc}") from exc
    if not lines:
        raise FactorFileError(f"{path}: empty factor file")
    try:
        M, R = (int(tok) for tok in lines[0].split())
    except ValueError:
        raise FactorFileError(f"{path}:1: header must be 'M R'") from None
    if M < 1 or R < 1:
        raise FactorFileError(f"{path}:1: M and R must be positive")
    if len(lines) != 1 + M + R:
        raise FactorFileError(f"{path}: expected {1 + M + R} non-empty lines, found {len(lines)}")

    def parse(row_lines, width, first_line):
        rows = []
        for offset, ln in enumerate(row_lines):
            try:
                vals = [float(tok) for tok in ln.split()]
            except ValueError:
                raise FactorFileError(f"{path}:{first_line + offset}: non-numeric value") from None
            if len(vals) != width:
                raise FactorFileError(
                    f"{path}:{first_line + offset}: expected {width} values, found {len(vals)}")
            rows.append(vals)
        return np.array(rows)

    U = parse(lines[1:1 + M], R, 2)
    V = parse(lines[1 + M:], M, 2 + M)
    factors = LowRankFactors(U, V)
    factors.validate()
    return factors


def save_factors(factors: LowRankFactors, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{factors.M} {factors.R}\n")
        np.savetxt(fh, factors.U, fmt="%.17e")
        np.savetxt(fh, factors.V, fmt="%.17e")

"""Post-processing: power-law and cutoff fits, oscillation detection."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np
from scipy.signal import find_peaks

MIN_FIT_POINTS = 8
MIN_SERIES_LENGTH = 100


class FitError(ValueError):
    pass


@dataclass
class SlopeFit:
    k_range: Tuple[int, int]
    beta: float
    residual: float
    points: int


@dataclass
class OscillationSummary:
    peak_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    periods: np.ndarray = field(default_factory=lambda: np.empty(0))
    amplitudes: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def cycles(self) -> int:
        return len(self.periods)


def default_fit_range(M: int, lam: float = 0.0) -> Tuple[int, int]:
    """Skip the first decade and, for shattering, sizes beyond 3 / lam**2."""
    hi = M
    if lam > 0:
        hi = min(hi, int(3.0 / lam**2))
    return 10, hi


def _fit(logk: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    A = np.column_stack([logk, np.ones_like(logk)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return -float(coef[0]), float(np.sqrt(np.mean(resid**2)))


def _usable(n: np.ndarray, k_lo: int, k_hi: int):
    n = np.asarray(n, dtype=np.float64)
    if not 1 <= k_lo < k_hi <= len(n):
        raise FitError(f"invalid size range [{k_lo}, {k_hi}] for M={len(n)}")
    k = np.arange(k_lo, k_hi + 1)
    vals = n[k_lo - 1:k_hi]
    good = vals > 0
    if not np.all(good):
        kept = k[good]
        warnings.warn(f"excluded {np.count_nonzero(~good)} nonpositive entries from the fit; "
                      f"effective range [{kept.min() if kept.size else '-'}, "
                      f"{kept.max() if kept.size else '-'}]", RuntimeWarning, stacklevel=3)
    k, vals = k[good], vals[good]
    if len(k) < MIN_FIT_POINTS:
        raise FitError(f"only {len(k)} usable points in [{k_lo}, {k_hi}]; need {MIN_FIT_POINTS}")
    return k, vals


def fit_power_law(n: np.ndarray, k_lo: int, k_hi: int) -> SlopeFit:
    """Least-squares fit of ``n_k ~ k**-beta`` in log-log space."""
    k, vals = _usable(n, k_lo, k_hi)
    beta, resid = _fit(np.log(k), np.log(vals))
    return SlopeFit((int(k[0]), int(k[-1])), beta, resid, len(k))


def fit_cutoff(n: np.ndarray, lam: float, k_lo: int, k_hi: int) -> SlopeFit:
    """Fit ``n_k ~ k**-beta * exp(-lam**2 k)`` with the cutoff divided out."""
    if lam < 0:
        raise FitError(f"lam must be >= 0, got {lam}")
    k, vals = _usable(n, k_lo, k_hi)
    y = np.log(vals)
    if lam > 0:
        y = y + lam**2 * k
    beta, resid = _fit(np.log(k), y)
    return SlopeFit((int(k[0]), int(k[-1])), beta, resid, len(k))


def detect_oscillations(t: Sequence[float], N: Sequence[float],
                        prominence: float = 0.01) -> OscillationSummary:
    """Find peaks of N(t) whose prominence exceeds a fraction of its range.

    Amplitude of a peak is its height above the lowest point before the next
    peak (or the end of the series for the last one).
    """
    t = np.asarray(t, dtype=np.float64)
    N = np.asarray(N, dtype=np.float64)
    if t.shape != N.shape or t.ndim != 1:
        raise ValueError("t and N must be 1-d arrays of equal length")
    if len(t) < MIN_SERIES_LENGTH:
        raise ValueError(f"need at least {MIN_SERIES_LENGTH} records, got {len(t)}")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    span = float(N.max() - N.min())
    if span <= 0:
        return OscillationSummary()
    # relative to the series' own minimum so results are scale invariant
    peaks, _ = find_peaks(N, prominence=prominence * span)
    if len(peaks) == 0:
        return OscillationSummary()
    bounds = list(peaks[1:]) + [len(N)]
    amplitudes = np.array([N[p] - N[p:b].min() for p, b in zip(peaks, bounds)])
    times = t[peaks]
    return OscillationSummary(times, np.diff(times), amplitudes)


def log_span_per_cycle(t: Sequence[float], values: Sequence[float],
                       peak_times: Sequence[float]) -> np.ndarray:
    """Decades spanned by ``values`` within each interval between peaks."""
    t = np.asarray(t)
    v = np.asarray(values)
    out = []
    for a, b in zip(peak_times[:-1], peak_times[1:]):
        sel = v[(t >= a) & (t < b)]
        sel = sel[sel > 0]
        out.append(np.log10(sel.max() / sel.min()) if sel.size else 0.0)
    return np.array(out)

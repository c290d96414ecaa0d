"""Explicit Runge-Kutta steps and adaptive step-size controllers.

Steppers operate on any callable ``f(n) -> dn/dt`` (all systems here are
autonomous). Two controllers are provided:

* step doubling for RK2/RK4: one step of size tau is compared against two
  steps of size tau/2. Rejected attempts halve tau; accepted steps propose
  ``safety * tau * (tol / err) ** (1 / order)`` clamped to
  ``[g_min, g_max] * tau``.
* the Fehlberg rule for RKF45: the embedded 4th/5th order difference is the
  error and every attempt rescales tau by ``safety * (tol / err) ** (1/5)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

RhsFn = Callable[[np.ndarray], np.ndarray]

ERR_FLOOR = 1e-300
NEGATIVE_REJECT_FRACTION = 1e-3


class Scheme(str, enum.Enum):
    RK2 = "rk2"
    RK4 = "rk4"
    RKF45 = "rkf45"

    @property
    def order(self) -> int:
        return {"rk2": 2, "rk4": 4, "rkf45": 5}[self.value]

    @property
    def stages(self) -> int:
        return {"rk2": 2, "rk4": 4, "rkf45": 6}[self.value]


class StepFailure(ArithmeticError):
    """A stage or the resulting state is not finite."""


class IntegrationAbort(RuntimeError):
    def __init__(self, reason: str, t: float = math.nan, tau: float = math.nan):
        super().__init__(f"{reason} (t={t!r}, tau={tau!r})")
        self.reason = reason
        self.t = t
        self.tau = tau


@dataclass(frozen=True)
class FehlbergTableau:
    a: Tuple[Tuple[float, ...], ...]
    b5: Tuple[float, ...]
    b4: Tuple[float, ...]

    def consistency_defects(self) -> Tuple[float, float]:
        return abs(math.fsum(self.b5) - 1.0), abs(math.fsum(self.b4) - 1.0)

    def is_consistent(self, tol: float = 1e-15) -> bool:
        return all(d <= tol for d in self.consistency_defects())


FEHLBERG = FehlbergTableau(
    a=(
        (),
        (1 / 4,),
        (3 / 32, 9 / 32),
        (1932 / 2197, -7200 / 2197, 7296 / 2197),
        (439 / 216, -8.0, 3680 / 513, -845 / 4104),
        (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
    ),
    b5=(16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55),
    b4=(25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0),
)


@dataclass
class StepControl:
    """Step policy: fixed ``tau`` or adaptive ``tol`` (exactly one is set).

    ``safety`` defaults to 1/4 for step doubling and 0.9 for Fehlberg.
    """

    scheme: Scheme
    tau: Optional[float] = None
    tol: Optional[float] = None
    safety: Optional[float] = None
    g_max: float = 2.0
    g_min: float = 0.5
    tau_min: float = 1e-14
    max_rejects: int = 40
    tau0: Optional[float] = None
    relative_error: bool = False

    def __post_init__(self):
        self.scheme = Scheme(self.scheme)
        if (self.tau is None) == (self.tol is None):
            raise ValueError("exactly one of tau (fixed mode) or tol (adaptive mode) must be given")
        if self.tau is not None and not self.tau > 0:
            raise ValueError(f"fixed tau must be positive, got {self.tau}")
        if self.tol is not None and not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.safety is None:
            self.safety = 0.9 if self.scheme is Scheme.RKF45 else 0.25
        if not 0 < self.safety < 1:
            raise ValueError(f"safety must lie in (0, 1), got {self.safety}")
        if not self.g_min < 1 < self.g_max:
            raise ValueError(f"need g_min < 1 < g_max, got {self.g_min}, {self.g_max}")
        if not self.g_min > 0:
            raise ValueError(f"g_min must be positive, got {self.g_min}")
        if not self.tau_min > 0:
            raise ValueError(f"tau_min must be positive, got {self.tau_min}")
        if self.tau0 is not None and not self.tau0 > 0:
            raise ValueError(f"tau0 must be positive, got {self.tau0}")

    @property
    def adaptive(self) -> bool:
        return self.tol is not None


@dataclass
class StepOutcome:
    n: np.ndarray
    tau_used: float
    tau_next: float
    err: float = math.nan
    rejects: int = 0
    rhs_evals: int = 0


class _Counted:
    __slots__ = ("f", "calls")

    def __init__(self, f: RhsFn):
        self.f = f
        self.calls = 0

    def __call__(self, n):
        self.calls += 1
        return self.f(n)


def _finite(x: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise StepFailure("non-finite state")
    return x


def rk2_step(f: RhsFn, n: np.ndarray, tau: float, f0: Optional[np.ndarray] = None) -> np.ndarray:
    """Heun step; ``f0`` may carry a precomputed ``f(n)``."""
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = tau * (f(n) if f0 is None else f0)
        k2 = tau * f(n + k1)
        return _finite(n + 0.5 * (k1 + k2))


def rk4_step(f: RhsFn, n: np.ndarray, tau: float, f0: Optional[np.ndarray] = None) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = tau * (f(n) if f0 is None else f0)
        k2 = tau * f(n + 0.5 * k1)
        k3 = tau * f(n + 0.5 * k2)
        k4 = tau * f(n + k3)
        return _finite(n + (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0)


def rkf45_stages(f: RhsFn, n: np.ndarray, tau: float, f0: Optional[np.ndarray] = None,
                 tableau: FehlbergTableau = FEHLBERG) -> list:
    k = [tau * (f(n) if f0 is None else f0)]
    for row in tableau.a[1:]:
        inc = row[0] * k[0]
        for c, kj in zip(row[1:], k[1:]):
            inc = inc + c * kj
        k.append(tau * f(n + inc))
    return k


def rkf45_step(f: RhsFn, n: np.ndarray, tau: float, f0: Optional[np.ndarray] = None,
               tableau: FehlbergTableau = FEHLBERG) -> Tuple[np.ndarray, np.ndarray, float]:
    """Return ``(n4, n5, err)`` with ``err = ||n5 - n4||_2``; n4 is propagated."""
    with np.errstate(over="ignore", invalid="ignore"):
        k = rkf45_stages(f, n, tau, f0, tableau)
        n4 = n.copy()
        n5 = n.copy()
        for w4, w5, kj in zip(tableau.b4, tableau.b5, k):
            if w4:
                n4 += w4 * kj
            if w5:
                n5 += w5 * kj
        _finite(n4)
        _finite(n5)
    return n4, n5, float(np.linalg.norm(n5 - n4))


def _single_step(scheme: Scheme, f: RhsFn, n: np.ndarray, tau: float, f0=None):
    if scheme is Scheme.RK2:
        return rk2_step(f, n, tau, f0)
    if scheme is Scheme.RK4:
        return rk4_step(f, n, tau, f0)
    raise ValueError(f"{scheme} has no plain single step; use rkf45_step")


def _error_norm(diff: np.ndarray, ref: np.ndarray, relative: bool) -> float:
    err = float(np.linalg.norm(diff))
    if relative:
        err /= max(1.0, float(np.linalg.norm(ref)))
    return err


def screen_negatives(n: np.ndarray) -> Optional[np.ndarray]:
    """``n`` unchanged, or ``None`` if an entry is below ``-NEGATIVE_REJECT_FRACTION * max|n|``.

    Small negatives are kept: zeroing them adds mass k * |n_k| in the sparse
    tail, which accumulates over long runs at large M.
    """
    if n.min() < -NEGATIVE_REJECT_FRACTION * np.max(np.abs(n)):
        return None
    return n


def doubling_factor(err: float, tol: float, safety: float, order: int) -> float:
    """Unclamped step ratio ``safety * (tol / err) ** (1 / order)``."""
    return safety * (tol / max(err, ERR_FLOOR)) ** (1.0 / order)


def fehlberg_factor(err: float, tol: float, safety: float = 0.9) -> float:
    """Unclamped step ratio ``safety * (tol / err) ** (1 / 5)``."""
    return safety * (tol / max(err, ERR_FLOOR)) ** 0.2


def clamp_ratio(ratio: float, control: StepControl) -> float:
    return min(max(ratio, control.g_min), control.g_max)


def _check_tau(tau: float, control: StepControl, t: float) -> None:
    if tau < control.tau_min:
        raise IntegrationAbort("step size underflow", t, tau)


def step_doubling_adaptive(f: RhsFn, n: np.ndarray, tau: float, control: StepControl,
                           t: float = math.nan) -> StepOutcome:
    if control.scheme is Scheme.RKF45 or not control.adaptive:
        raise ValueError("step doubling needs an adaptive RK2 or RK4 control")
    cf = _Counted(f)
    f0 = None
    rejects = 0
    while True:
        _check_tau(tau, control, t)
        try:
            if f0 is None:
                with np.errstate(over="ignore", invalid="ignore"):
                    f0 = _finite(cf(n))
            full = _single_step(control.scheme, cf, n, tau, f0)
            half = _single_step(control.scheme, cf, n, 0.5 * tau, f0)
            fine = _single_step(control.scheme, cf, half, 0.5 * tau)
            err = _error_norm(fine - full, fine, control.relative_error)
            accepted = screen_negatives(fine) if err <= control.tol else None
        except StepFailure:
            err, accepted = math.inf, None
        if accepted is not None:
            ratio = clamp_ratio(doubling_factor(err, control.tol, control.safety, control.scheme.order),
                           control)
            return StepOutcome(accepted, tau, ratio * tau, err, rejects, cf.calls)
        rejects += 1
        if rejects > control.max_rejects:
            raise IntegrationAbort("too many rejected steps", t, tau)
        tau *= 0.5


def fehlberg_adaptive(f: RhsFn, n: np.ndarray, tau: float, control: StepControl,
                      t: float = math.nan, tableau: FehlbergTableau = FEHLBERG) -> StepOutcome:
    if control.scheme is not Scheme.RKF45 or not control.adaptive:
        raise ValueError("the Fehlberg controller needs an adaptive RKF45 control")
    cf = _Counted(f)
    f0 = None
    rejects = 0
    while True:
        _check_tau(tau, control, t)
        try:
            if f0 is None:
                with np.errstate(over="ignore", invalid="ignore"):
                    f0 = _finite(cf(n))
            n4, n5, err = rkf45_step(cf, n, tau, f0, tableau)
            if control.relative_error:
                err /= max(1.0, float(np.linalg.norm(n4)))
            accepted = screen_negatives(n4) if err <= control.tol else None
        except StepFailure:
            err, accepted = math.inf, None
        ratio = clamp_ratio(fehlberg_factor(err, control.tol, control.safety), control)
        if accepted is not None:
            return StepOutcome(accepted, tau, ratio * tau, err, rejects, cf.calls)
        rejects += 1
        if rejects > control.max_rejects:
            raise IntegrationAbort("too many rejected steps", t, tau)
        # a screened-out state with err <= tol would otherwise not shrink
        tau *= min(ratio, control.g_min) if err <= control.tol else ratio


def fixed_step(f: RhsFn, n: np.ndarray, tau: float, scheme: Scheme,
               t: float = math.nan) -> StepOutcome:
    """One constant-size step. Non-finite results abort the integration."""
    scheme = Scheme(scheme)
    cf = _Counted(f)
    err = math.nan
    try:
        if scheme is Scheme.RKF45:
            new, _, err = rkf45_step(cf, n, tau)
        else:
            new = _single_step(scheme, cf, n, tau)
    except StepFailure:
        raise IntegrationAbort("non-finite state", t, tau) from None
    return StepOutcome(new, tau, tau, err, 0, cf.calls)


def adaptive_step(f: RhsFn, n: np.ndarray, tau: float, control: StepControl,
                  t: float = math.nan) -> StepOutcome:
    if control.scheme is Scheme.RKF45:
        return fehlberg_adaptive(f, n, tau, control, t)
    return step_doubling_adaptive(f, n, tau, control, t)

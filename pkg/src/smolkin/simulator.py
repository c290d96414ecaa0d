"""Integration driver: initial data, main loop, observables and snapshots."""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .rhs import ModelSpec, Rhs, euler_stability_bound
from .steppers import IntegrationAbort, StepControl, adaptive_step, fixed_step

# stretch a step by at most this fraction of tau to land on a target time
_LANDING_SLACK = 1e-6


class InitialKind(str, enum.Enum):
    MONODISPERSE = "monodisperse"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class InitialCondition:
    kind: InitialKind = InitialKind.MONODISPERSE
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", InitialKind(self.kind))
        if self.kind is InitialKind.EXPONENTIAL and not self.scale > 0:
            raise ValueError(f"exponential scale must be positive, got {self.scale}")


@dataclass
class SimulationConfig:
    """One integration run.

    ``record_every``: ``None`` records every accepted step, a positive float
    records the first step at or past each multiple of it, and ``0`` records
    only the initial and final states.
    """

    model: ModelSpec
    control: StepControl
    t_end: float
    initial: Union[InitialCondition, np.ndarray] = field(default_factory=InitialCondition)
    record_every: Optional[float] = None
    snapshot_times: Sequence[float] = ()
    workers: Optional[int] = None

    def __post_init__(self):
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise ValueError(f"t_end must be finite and >= 0, got {self.t_end}")
        snaps = sorted(float(s) for s in self.snapshot_times)
        if any(s < 0 or s > self.t_end for s in snaps):
            raise ValueError(f"snapshot times must lie in [0, {self.t_end}]")
        self.snapshot_times = tuple(snaps)
        if self.record_every is not None and self.record_every < 0:
            raise ValueError("record_every must be >= 0")


@dataclass
class ObservableRecord:
    t: float
    tau: float
    N: float
    M1: float
    M2: float
    err: float
    rhs_evals: int
    rejects: int


class Termination(str, enum.Enum):
    COMPLETED = "completed"
    ABORTED = "aborted"


@dataclass
class RunReport:
    records: List[ObservableRecord]
    snapshots: Dict[float, np.ndarray]
    termination: Termination
    final_state: np.ndarray
    final_t: float
    rhs_evals: int
    accepted: int
    rejected: int
    wall_seconds: float
    abort_reason: Optional[str] = None
    abort_tau: Optional[float] = None

    @property
    def completed(self) -> bool:
        return self.termination is Termination.COMPLETED

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def initial_state(initial: Union[InitialCondition, np.ndarray], M: int) -> np.ndarray:
    if M < 2:
        raise ValueError(f"M must be >= 2, got {M}")
    if isinstance(initial, np.ndarray):
        n = np.array(initial, dtype=np.float64)
        if n.shape != (M,) or not np.all(np.isfinite(n)):
            raise ValueError(f"custom initial state must be a finite vector of length {M}")
        return n
    if initial.kind is InitialKind.MONODISPERSE:
        n = np.zeros(M)
        n[0] = 1.0
        return n
    k = np.arange(1, M + 1, dtype=np.float64)
    n = np.exp(-k / initial.scale)
    return n / np.dot(k, n)


def moments(n: np.ndarray, orders: Sequence[int] = (0, 1, 2)) -> List[float]:
    """Moments ``sum_k k**p n_k`` for each requested order p in {0, 1, 2}."""
    k = np.arange(1, len(n) + 1, dtype=np.float64)
    out = []
    for p in orders:
        if p not in (0, 1, 2):
            raise ValueError(f"moment order must be 0, 1 or 2, got {p}")
        out.append(float(np.dot(k**p, n)))
    return out


def run(config: SimulationConfig) -> RunReport:
    model, control = config.model, config.control
    f = Rhs(model, workers=config.workers)
    n = initial_state(config.initial, model.M)
    t = 0.0
    t_end = config.t_end

    accepted = rejected = 0
    records: List[ObservableRecord] = []
    snapshots: Dict[float, np.ndarray] = {}

    def record(tau, err):
        N, M1, M2 = moments(n)
        records.append(ObservableRecord(t, tau, N, M1, M2, err, f.evals, rejected))

    record(0.0, 0.0)
    targets = [s for s in config.snapshot_times]
    while targets and targets[0] == 0.0:
        snapshots[targets.pop(0)] = n.copy()
    if not targets or targets[-1] != t_end:
        targets.append(t_end)

    if control.adaptive:
        tau = control.tau0 if control.tau0 is not None else euler_stability_bound(model.kernel, n, 0.25)
        if not math.isfinite(tau):
            tau = t_end if t_end > 0 else 1.0
    else:
        tau = control.tau

    next_record = config.record_every if config.record_every else None
    every_step = config.record_every is None
    last = None
    wall0 = time.perf_counter()
    try:
        # fixed mode tracks time as anchor + count * tau to avoid drift
        anchor, count = 0.0, 0
        for target in targets:
            while t < target:
                if control.adaptive:
                    step_tau = tau
                    shortened = t + step_tau * (1 + _LANDING_SLACK) >= target
                    if shortened:
                        step_tau = target - t
                    out = adaptive_step(f, n, step_tau, control, t)
                    landed = shortened and out.rejects == 0
                    t_new = target if landed else t + out.tau_used
                    # a forced short step keeps the controller's earlier proposal
                    if not landed:
                        tau = out.tau_next
                else:
                    t_next = anchor + (count + 1) * control.tau
                    landed = t_next >= target - _LANDING_SLACK * control.tau
                    step_tau = target - t if landed else t_next - t
                    out = fixed_step(f, n, step_tau, control.scheme, t)
                    count += 1
                    t_new = target if landed else t_next
                n = out.n
                t = t_new
                accepted += 1
                rejected += out.rejects
                last = out
                if every_step:
                    record(out.tau_used, out.err)
                elif next_record is not None and t >= next_record:
                    record(out.tau_used, out.err)
                    while next_record <= t:
                        next_record += config.record_every
            if not control.adaptive:
                anchor, count = t, 0
            if target in config.snapshot_times:
                snapshots[target] = n.copy()
    except IntegrationAbort as exc:
        if last is not None and records[-1].t != t:
            record(last.tau_used, last.err)
        return RunReport(records, snapshots, Termination.ABORTED, n, t, f.evals,
                         accepted, rejected, time.perf_counter() - wall0,
                         abort_reason=exc.reason, abort_tau=exc.tau)
    if last is not None and records[-1].t != t:
        record(last.tau_used, last.err)
    return RunReport(records, snapshots, Termination.COMPLETED, n, t, f.evals,
                     accepted, rejected, time.perf_counter() - wall0)

"""Self-check battery run by ``smolkin verify``.

Each check returns ``(passed, detail)``; all run at small M.
"""
from __future__ import annotations

from typing import Callable, List, Tuple

import numpy as np

from . import steppers
from .kernels import KernelSpec, build_factors, kernel_entry
from .rhs import (ModelSpec, ModelVariant, SourceTerm, eval_rhs, eval_rhs_dense_oracle,
                  shattering_terms)
from .simulator import SimulationConfig, run
from .steppers import Scheme, StepControl, fehlberg_factor

Check = Callable[[], Tuple[bool, str]]

VERIFY_KERNELS = (KernelSpec.constant(), KernelSpec.brownian(1 / 3), KernelSpec.brownian(0.95))


def max_rel(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.max(np.abs(b))
    return float(np.max(np.abs(a - b)) / scale) if scale > 0 else float(np.max(np.abs(a)))


def truncation_leak(K: np.ndarray, n: np.ndarray) -> float:
    """-(1/2) sum over i + j > M of (i + j) K_ij n_i n_j, by direct summation."""
    M = len(n)
    k = np.arange(1, M + 1)
    S = np.add.outer(k, k)
    mask = S > M
    return -0.5 * float(np.sum((S * K * np.outer(n, n))[mask]))


def check_tableau(tableau=None) -> Tuple[bool, str]:
    tableau = tableau or steppers.FEHLBERG
    d5, d4 = tableau.consistency_defects()
    return max(d5, d4) <= 1e-15, f"weight-sum defects {d5:.1e}, {d4:.1e}"


def check_factorizations(M: int = 256) -> Tuple[bool, str]:
    worst = 0.0
    k = np.arange(1, M + 1, dtype=float)
    for spec in VERIFY_KERNELS:
        K = build_factors(spec, M).reconstruct()
        if spec.alpha:
            exact = (k[:, None] / k[None, :]) ** spec.alpha + (k[None, :] / k[:, None]) ** spec.alpha
        else:
            exact = np.ones((M, M))
        worst = max(worst, float(np.max(np.abs(K - exact) / exact)))
    spot = abs(kernel_entry(KernelSpec.brownian(1 / 3), 3, 7) - build_factors(
        KernelSpec.brownian(1 / 3), 8).entry(3, 7))
    return worst <= 1e-12 and spot <= 1e-12, f"max relative deviation {worst:.1e}"


def check_oracle(Ms=(16, 64), states: int = 20, seed: int = 0) -> Tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for spec in VERIFY_KERNELS:
        for M in Ms:
            F = build_factors(spec, M)
            for variant in ModelVariant:
                model = ModelSpec(variant, F, SourceTerm({1: 1.0, M: 0.1}), lam=0.01)
                for _ in range(states):
                    n = rng.random(M)
                    worst = max(worst, max_rel(eval_rhs(model, n), eval_rhs_dense_oracle(model, n)))
    return worst <= 1e-12, f"max relative deviation {worst:.1e}"


def check_mass_flux(M: int = 64, states: int = 50, seed: int = 1) -> Tuple[bool, str]:
    rng = np.random.default_rng(seed)
    k = np.arange(1, M + 1)
    worst_leak = worst_shatter = 0.0
    for spec in VERIFY_KERNELS:
        F = build_factors(spec, M)
        K = F.reconstruct()
        model = ModelSpec(ModelVariant.AGGREGATION, F)
        for _ in range(states):
            n = rng.random(M)
            flux = float(np.dot(k, eval_rhs(model, n)))
            leak = truncation_leak(K, n)
            worst_leak = max(worst_leak, abs(flux - leak) / abs(leak))
            sh = shattering_terms(F, n, 0.01)
            worst_shatter = max(worst_shatter, abs(np.dot(k, sh)) / np.dot(k, np.abs(sh)))
    ok = worst_leak <= 1e-12 and worst_shatter <= 1e-12
    return ok, f"leak identity {worst_leak:.1e}, shattering flux {worst_shatter:.1e}"


def check_fehlberg_anchors() -> Tuple[bool, str]:
    changes = [100 * (fehlberg_factor(e, 1.0) - 1) for e in (2.0, 0.5, 1.0)]
    ok = abs(changes[0] + 20) <= 2.5 and abs(changes[1] - 3) <= 0.5 and abs(changes[2] + 10) <= 0.5
    return ok, "step change {:+.2f}% / {:+.2f}% / {:+.2f}%".format(*changes)


def check_constant_kernel(M: int = 256) -> Tuple[bool, str]:
    model = ModelSpec(ModelVariant.AGGREGATION, build_factors(KernelSpec.constant(), M))
    rep = run(SimulationConfig(model, StepControl(Scheme.RK4, tol=1e-8), t_end=2.0,
                               record_every=0))
    n = rep.final_state
    dev = max(abs(n[0] - 0.25), abs(n[1] - 0.125), abs(n.sum() - 0.5))
    return rep.completed and dev <= 1e-6, f"max deviation from closed form {dev:.1e}"


CHECKS: List[Tuple[str, Check]] = [
    ("fehlberg tableau consistency", check_tableau),
    ("fehlberg step-change anchors", check_fehlberg_anchors),
    ("exact low-rank factorizations", check_factorizations),
    ("low-rank vs dense oracle", check_oracle),
    ("mass-flux identities", check_mass_flux),
    ("constant-kernel closed form", check_constant_kernel),
]


def run_checks(echo: Callable[[str], None] = print) -> bool:
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        echo(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return all_ok

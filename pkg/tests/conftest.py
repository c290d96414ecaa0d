import numpy as np
import pytest

from smolkin.kernels import KernelSpec, build_factors
from smolkin.rhs import ModelSpec, ModelVariant


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


def constant_model(M, variant=ModelVariant.AGGREGATION, **kw):
    return ModelSpec(variant, build_factors(KernelSpec.constant(), M), **kw)


ACCEPTANCE_LINES = []


def acceptance(criterion, ok, detail):
    """Record one pass/fail line for the acceptance summary."""
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    print(ACCEPTANCE_LINES[-1])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

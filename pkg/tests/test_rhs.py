import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from smolkin.kernels import KernelSpec, build_dense, build_factors
from smolkin.rhs import (ModelSpec, ModelVariant, Rhs, RhsWorkspace, SourceTerm, birth_term,
                         death_term, eval_rhs, eval_rhs_dense_oracle, euler_stability_bound,
                         shattering_terms)
from smolkin.verify import max_rel, truncation_leak

from conftest import constant_model

ONES3 = build_factors(KernelSpec.constant(), 3)


def test_birth_hand_example():
    np.testing.assert_array_equal(birth_term(ONES3, np.array([1.0, 0, 0])), [0, 0.5, 0])


def test_death_hand_example():
    np.testing.assert_array_equal(death_term(ONES3, np.array([1.0, 0, 0])), [1, 0, 0])


@pytest.mark.parametrize("spec", [KernelSpec.constant(), KernelSpec.brownian(0.95)])
def test_zero_state_gives_zero(spec):
    F = build_factors(spec, 16)
    z = np.zeros(16)
    assert not birth_term(F, z).any()
    assert not death_term(F, z).any()
    assert not shattering_terms(F, z, 0.3).any()


def _direct_birth(K, n):
    M = len(n)
    out = np.zeros(M)
    for s in range(2, M + 1):
        out[s - 1] = 0.5 * sum(K[i - 1, s - i - 1] * n[i - 1] * n[s - i - 1] for i in range(1, s))
    return out


def test_birth_matches_direct_double_sum(rng):
    F = build_factors(KernelSpec.brownian(1 / 3), 64)
    n = rng.random(64)
    ref = _direct_birth(F.reconstruct(), n)
    assert max_rel(birth_term(F, n), ref) <= 1e-12
    # dense kernels take the direct path
    assert max_rel(birth_term(build_dense(KernelSpec.brownian(1 / 3), 64), n), ref) <= 1e-12


def test_death_matches_dense(rng):
    F = build_factors(KernelSpec.brownian(0.95), 128)
    n = rng.random(128)
    ref = n * (F.reconstruct() @ n)
    assert max_rel(death_term(F, n), ref) <= 1e-12


def test_shattering_hand_example():
    out = shattering_terms(ONES3, np.array([0.0, 1.0, 0.0]), 1.0)
    np.testing.assert_allclose(out, [2.0, -1.0, 0.0], atol=1e-15)
    assert 1 * out[0] + 2 * out[1] + 3 * out[2] == pytest.approx(0.0, abs=1e-15)


def test_shattering_lambda_zero(rng):
    assert not shattering_terms(ONES3, rng.random(3), 0.0).any()


def test_shattering_rejects_negative_rate():
    with pytest.raises(ValueError):
        shattering_terms(ONES3, np.ones(3), -0.1)
    with pytest.raises(ValueError):
        ModelSpec(ModelVariant.SHATTERING, ONES3, lam=-1.0)


def test_size_mismatch():
    with pytest.raises(ValueError):
        birth_term(ONES3, np.ones(4))
    with pytest.raises(ValueError):
        eval_rhs(constant_model(3), np.ones(2))


def test_eval_rhs_hand_examples():
    n = np.array([1.0, 0, 0])
    np.testing.assert_array_equal(eval_rhs(constant_model(3), n), [-1, 0.5, 0])
    src = constant_model(3, ModelVariant.SOURCES, sources=SourceTerm({1: 1.0}))
    np.testing.assert_array_equal(eval_rhs(src, n), [0, 0.5, 0])


def test_shattering_with_zero_rate_equals_aggregation(rng):
    agg = constant_model(32)
    sh = constant_model(32, ModelVariant.SHATTERING, lam=0.0)
    for _ in range(10):
        n = rng.random(32)
        assert np.max(np.abs(eval_rhs(agg, n) - eval_rhs(sh, n))) <= 1e-14


def test_oracle_hand_example_and_zero_state():
    n = np.zeros(6)
    n[0] = 1
    np.testing.assert_allclose(eval_rhs_dense_oracle(constant_model(6), n), [-1, 0.5, 0, 0, 0, 0])
    src = constant_model(6, ModelVariant.SOURCES, sources=SourceTerm({1: 1.0, 4: 0.5}))
    np.testing.assert_array_equal(eval_rhs_dense_oracle(src, np.zeros(6)), src.source_vector)
    np.testing.assert_array_equal(eval_rhs(src, np.zeros(6)), src.source_vector)


@pytest.mark.parametrize("variant", list(ModelVariant))
@pytest.mark.parametrize("spec", [KernelSpec.constant(), KernelSpec.brownian(1 / 3),
                                  KernelSpec.brownian(0.95)], ids=["const", "b13", "b95"])
def test_lowrank_agrees_with_oracle(rng, variant, spec):
    F = build_factors(spec, 64)
    model = ModelSpec(variant, F, SourceTerm({1: 1.0, 40: 0.1}), lam=0.01)
    ws = RhsWorkspace(64, F.R)
    for _ in range(100):
        n = rng.random(64)
        assert max_rel(eval_rhs(model, n, ws), eval_rhs_dense_oracle(model, n)) <= 1e-12
    assert ws.evals == 100


def test_free_molecular_dense_path_agrees_with_oracle(rng):
    K = build_dense(KernelSpec.free_molecular(), 48)
    for variant in ModelVariant:
        model = ModelSpec(variant, K, SourceTerm({1: 1.0}), lam=0.05)
        n = rng.random(48)
        assert max_rel(eval_rhs(model, n), eval_rhs_dense_oracle(model, n)) <= 1e-12


def test_oracle_guard():
    with pytest.raises(ValueError, match="oracle"):
        eval_rhs_dense_oracle(constant_model(5000), np.zeros(5000))


@pytest.mark.parametrize("spec", [KernelSpec.constant(), KernelSpec.brownian(0.95)])
def test_truncation_mass_flux_identity(rng, spec):
    M = 128
    F = build_factors(spec, M)
    model = ModelSpec(ModelVariant.AGGREGATION, F)
    k = np.arange(1, M + 1)
    for _ in range(10):
        n = rng.random(M)
        leak = truncation_leak(F.reconstruct(), n)
        assert np.dot(k, eval_rhs(model, n)) == pytest.approx(leak, rel=1e-12)


positive_states = arrays(np.float64, 24, elements=st.floats(0, 10, allow_subnormal=False))


@settings(max_examples=60, deadline=None)
@given(n=positive_states, alpha=st.sampled_from([0.0, 1 / 3, 0.95]),
       lam=st.floats(0, 1))
def test_shattering_mass_neutral(n, alpha, lam):
    F = build_factors(KernelSpec.brownian(alpha), 24)
    out = shattering_terms(F, n, lam)
    k = np.arange(1, 25)
    scale = np.dot(k, np.abs(out))
    assert abs(np.dot(k, out)) <= 1e-12 * max(scale, 1e-300)


@settings(max_examples=40, deadline=None)
@given(n=positive_states, c=st.floats(0.1, 10))
def test_birth_death_bilinear(n, c):
    F = build_factors(KernelSpec.brownian(0.5), 24)
    # FFT round-off is absolute, on the scale of the convolved inputs
    floor = 1e-13 * c * c * np.max(F.reconstruct()) * np.sum(n) ** 2
    for term in (lambda x: birth_term(F, x), lambda x: death_term(F, x)):
        base = term(n)
        scaled = term(c * n)
        assert np.allclose(scaled, c * c * base, rtol=1e-12, atol=floor)


def test_workspace_reuse_is_transparent(rng):
    F = build_factors(KernelSpec.brownian(0.95), 200)
    model = ModelSpec(ModelVariant.SHATTERING, F, lam=0.02)
    ws = RhsWorkspace(200, 2)
    states = [rng.random(200) for _ in range(5)]
    reused = [eval_rhs(model, n, ws) for n in states]
    fresh = [eval_rhs(model, n, RhsWorkspace(200, 2)) for n in states]
    for a, b in zip(reused, fresh):
        np.testing.assert_array_equal(a, b)


def test_workspace_mismatch_rejected():
    with pytest.raises(ValueError, match="workspace"):
        eval_rhs(constant_model(8), np.ones(8), RhsWorkspace(8, 2))


def test_rhs_callable_counts():
    f = Rhs(constant_model(8))
    f(np.ones(8))
    f(np.ones(8))
    assert f.evals == 2


def test_euler_bound():
    n = np.zeros(10)
    n[:4] = 0.5
    F = build_factors(KernelSpec.constant(), 10)
    assert euler_stability_bound(F, n, 0.25) == pytest.approx(0.125)
    n1 = np.zeros(10)
    n1[0] = 1.0
    assert euler_stability_bound(F, n1, 1.0) == 1.0
    assert euler_stability_bound(F, np.zeros(10), 0.25) == math.inf
    with pytest.raises(ValueError):
        euler_stability_bound(F, n1, 0.0)


def test_source_validation():
    with pytest.raises(ValueError):
        SourceTerm({0: 1.0})
    with pytest.raises(ValueError):
        SourceTerm({2: -1.0})
    with pytest.raises(ValueError, match="beyond"):
        constant_model(4, ModelVariant.SOURCES, sources=SourceTerm({5: 1.0}))

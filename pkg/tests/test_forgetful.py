import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bosonic_memory.errors import DomainError
from bosonic_memory.forgetful import (
    VACUUM_VARIANCE,
    GaussianMemoryScenario,
    forgetfulness_decay,
    memory_coupling_vectors,
    moment_difference,
    propagate_memory_moments,
)
from bosonic_memory.model import ChannelParams

from oracles import iterate_channel


def test_memoryless_coupling_vectors():
    X, Y = memory_coupling_vectors(ChannelParams(0.0, 0.36, 4))
    np.testing.assert_array_equal(X[:-1], 0.0)
    assert X[-1] == pytest.approx(0.8, abs=1e-15)


def test_coupling_vectors_example():
    X, _ = memory_coupling_vectors(ChannelParams(0.5, 0.5, 3))
    r = math.sqrt(0.5)
    np.testing.assert_allclose(X, [0.25 * r, 0.5 * r, r], rtol=1e-14)


def test_no_input_leaks_into_memory_at_unit_kappa():
    X, _ = memory_coupling_vectors(ChannelParams(0.4, 1.0, 5))
    np.testing.assert_array_equal(X, 0.0)


@pytest.mark.parametrize("mu, kappa, n", [(0.5, 0.5, 4), (0.3, 0.8, 6), (0.4, 2.0, 5)])
def test_coupling_vectors_match_iterated_memory(mu, kappa, n):
    # run one more use and read the final memory mode off the oracle's b_{n+1} (before its own input)
    A, E, _ = iterate_channel(mu, kappa, n + 1)
    X, Y = memory_coupling_vectors(ChannelParams(mu, kappa, n))
    scale = math.sqrt(mu * abs(1 - kappa))
    # b_{n+1} depends on the memory through sqrt(mu |1 - kappa|) m'_n
    np.testing.assert_allclose(np.abs(A[n, :n]), scale * X, atol=1e-14)
    np.testing.assert_allclose(E[n, 1 : n + 1], scale * Y, atol=1e-14)


def test_vacuum_is_preserved():
    for mu, kappa in [(0.5, 0.5), (0.2, 0.9)]:
        out = propagate_memory_moments(GaussianMemoryScenario.vacuum(8), ChannelParams(mu, kappa, 8))
        assert out.mean_out == 0
        assert out.var_out == pytest.approx(VACUUM_VARIANCE, abs=1e-15)


def test_displaced_memory_example():
    out = propagate_memory_moments(GaussianMemoryScenario.vacuum(10, mean_m=1.0), ChannelParams(0.5, 0.5, 10))
    assert out.mean_out == pytest.approx(0.25**5, abs=1e-18)
    assert out.mean_out == pytest.approx(9.7656e-4, abs=1e-8)


@pytest.mark.parametrize("n", [5, 10, 20])
def test_variance_difference_example(n):
    params = ChannelParams(0.5, 0.5, n)
    a = GaussianMemoryScenario.vacuum(n)
    b = GaussianMemoryScenario.vacuum(n, V_m=VACUUM_VARIANCE + 1.0)
    assert moment_difference(a, b, params).var_out == pytest.approx(0.25**n, rel=1e-12)


def _random_scenario(rng, n, scale=1.0):
    means = lambda k: scale * (rng.normal(size=k) + 1j * rng.normal(size=k))
    G = rng.normal(size=(2 * n + 1, 2 * n + 1))
    V = 0.5 * np.eye(2 * n + 1) + 0.1 * G @ G.T
    return GaussianMemoryScenario(
        complex(means(1)[0]), means(n), means(n), V[0, 0], V[0, 1 : n + 1], V[0, n + 1 :], V[1 : n + 1, 1 : n + 1], V[n + 1 :, n + 1 :]
    )


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0, 3), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_mean_is_linear(mu, kappa, n, seed):
    rng = np.random.default_rng(seed)
    params = ChannelParams(mu, kappa, n)
    s1, s2 = _random_scenario(rng, n), _random_scenario(rng, n)
    m1 = propagate_memory_moments(s1, params).mean_out
    m2 = propagate_memory_moments(s2, params).mean_out
    d = moment_difference(s1, s2, params).mean_out
    assert d == pytest.approx(m2 - m1, abs=1e-9 * (1 + abs(m1) + abs(m2)))


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 25), st.floats(0, 5))
def test_memory_variance_difference_scales_as_product_power(mu, kappa, n, dV):
    params = ChannelParams(mu, kappa, n)
    a = GaussianMemoryScenario.vacuum(n)
    b = GaussianMemoryScenario.vacuum(n, V_m=VACUUM_VARIANCE + dV)
    dV = b.V_m - a.V_m  # the representable difference
    assert moment_difference(a, b, params).var_out == pytest.approx((mu * kappa) ** n * dV, rel=1e-12, abs=1e-300)


def test_outputs_stay_bounded_below_threshold():
    rng = np.random.default_rng(7)
    params = ChannelParams(0.9, 1.05)
    peaks = []
    for n in (10, 40, 160):
        s = _random_scenario(rng, n)
        out = propagate_memory_moments(s, params.with_n(n))
        peaks.append(abs(out.mean_out) + out.var_out)
    # per-mode energy is O(1); the memory cannot accumulate without bound
    assert max(peaks) < 100


def test_scenario_validation():
    with pytest.raises(DomainError):
        GaussianMemoryScenario(0, np.zeros(2), np.zeros(3), 0.5, np.zeros(2), np.zeros(2), np.eye(2), np.eye(2))
    with pytest.raises(DomainError, match="positive semidefinite"):
        GaussianMemoryScenario(0, np.zeros(1), np.zeros(1), 0.1, np.array([1.0]), np.zeros(1), np.eye(1), np.eye(1))
    with pytest.raises(DomainError):
        propagate_memory_moments(GaussianMemoryScenario.vacuum(3), ChannelParams(0.5, 0.5, 4))


def test_mean_energy():
    s = GaussianMemoryScenario.vacuum(3, mean_m=2.0)
    assert s.mean_energy() == pytest.approx(4.0 / 4)


def test_identical_scenarios_zero_distance():
    s = GaussianMemoryScenario.vacuum(6, mean_m=0.3, V_m=0.9)
    report = forgetfulness_decay(ChannelParams(0.5, 0.5), s, s, range(1, 7))
    assert all(r.distance == 0 for r in report.rows)


@pytest.mark.parametrize("mu, kappa", [(0.5, 0.5), (0.9, 0.9), (0.25, 2.0)])
def test_decay_rates(mu, kappa):
    a = GaussianMemoryScenario.vacuum(30)
    b = GaussianMemoryScenario.vacuum(30, mean_m=1.0, V_m=1.5)
    report = forgetfulness_decay(ChannelParams(mu, kappa), a, b, range(1, 31))
    assert report.var_rate == pytest.approx(math.log(mu * kappa), rel=0.05)
    assert report.mean_rate == pytest.approx(0.5 * math.log(mu * kappa), rel=0.05)
    assert report.expected_mean_rate == pytest.approx(0.5 * report.expected_var_rate)
    line = report.json_lines()[0]
    assert set(line) == {"n", "delta_mean", "delta_var", "fitted_rate"}


def test_memoryless_decay_is_immediate():
    a = GaussianMemoryScenario.vacuum(5)
    b = GaussianMemoryScenario.vacuum(5, mean_m=1.0, V_m=1.5)
    report = forgetfulness_decay(ChannelParams(0.0, 0.7), a, b, range(1, 6))
    assert all(r.distance == 0 for r in report.rows)
    assert report.var_rate is None


@pytest.mark.parametrize("mu, kappa", [(0.9, 1.6), (0.5, 2.0)])
def test_decay_rejected_at_and_above_threshold(mu, kappa):
    s = GaussianMemoryScenario.vacuum(4)
    with pytest.raises(DomainError, match="exponentially enhanced"):
        forgetfulness_decay(ChannelParams(mu, kappa), s, s, range(1, 5))

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from bosonic_memory.capacity import (
    BOUNDS_CONVERGENCE,
    _solve_multiplier,
    amplifier_waterfill,
    block_bounds,
    classical_capacity,
    classical_capacity_bounds_attenuator,
    classical_capacity_lower_amplifier,
    g_of_x,
    q_of_eta,
    quantum_capacity,
    quantum_capacity_bounds,
    waterfill_attenuator,
    waterfill_discrete,
)
from bosonic_memory.errors import BracketError, DomainError
from bosonic_memory.model import ChannelParams
from bosonic_memory.spectra import QuadratureSpec, gram_spectrum, szego_average

from oracles import g_direct, q_direct, symbol_direct

N8 = 8.0


# --- kernels ---------------------------------------------------------------


@pytest.mark.parametrize("eta, value", [(0.5, 0.0), (0.75, math.log2(3)), (2.0, 1.0), (0.25, 0.0), (0.0, 0.0)])
def test_q_examples(eta, value):
    assert q_of_eta(eta) == pytest.approx(value, abs=1e-15)
    assert q_of_eta(0.75) == pytest.approx(1.584963, abs=1e-6)


def test_q_pole_and_domain():
    assert q_of_eta(1.0) == math.inf
    with pytest.raises(DomainError):
        q_of_eta(-0.1)


@pytest.mark.parametrize("x, value", [(0.0, 0.0), (1.0, 2.0), (8.0, 4.529325)])
def test_g_examples(x, value):
    assert g_of_x(x) == pytest.approx(value, abs=1e-6)
    with pytest.raises(DomainError):
        g_of_x(-1.0)


@pytest.mark.parametrize("x", [1e-300, 1e-12, 1e-3, 0.5, 7.0, 1e6, 1e15, 1e100])
def test_g_stable_against_high_precision(x):
    with mpmath.workdps(250):
        X = mpmath.mpf(x)
        ref = float(((X + 1) * mpmath.log(X + 1) - X * mpmath.log(X)) / mpmath.log(2))
    assert g_of_x(x) == pytest.approx(ref, rel=1e-13)


@given(st.floats(0, 50))
def test_g_matches_direct(x):
    assert g_of_x(x) == pytest.approx(g_direct(x), rel=1e-10, abs=1e-12)


@given(st.floats(0, 1), st.floats(0, 1))
def test_q_composition_cannot_increase(eta, eta2):
    # attenuators composed with attenuators
    assert q_of_eta(eta * eta2) <= q_of_eta(eta) + 1e-12


@given(st.floats(0, 20).filter(lambda x: abs(x - 1) > 1e-9))
def test_q_matches_direct(eta):
    assert q_of_eta(eta) == pytest.approx(q_direct(eta), rel=1e-12, abs=1e-14)


# --- quantum capacity ------------------------------------------------------


@pytest.mark.parametrize("kappa", [0.25, 0.6, 0.75, 2.0, 4.0])
def test_memoryless_quantum_capacity(kappa):
    assert quantum_capacity(0.0, kappa) == pytest.approx(max(0.0, math.log2(kappa / abs(kappa - 1))), abs=1e-12)


@pytest.mark.parametrize("mu", [0.1, 0.6, 0.9])
def test_quantum_capacity_kappa_zero(mu):
    assert quantum_capacity(mu, 0.0) == pytest.approx(q_direct(mu), abs=1e-12)


@pytest.mark.parametrize("mu, kappa", [(1.0, 0.5), (0.5, 1.0), (1.0, 1.0)])
def test_quantum_capacity_divergence_rejected(mu, kappa):
    with pytest.raises(DomainError, match="diverges"):
        quantum_capacity(mu, kappa)


@pytest.mark.parametrize("mu, kappa", [(0.5, 0.5), (0.9, 0.7), (0.3, 2.0), (0.5, 2.0), (0.9, 1.5), (0.95, 3.0)])
def test_quantum_capacity_against_adaptive_quadrature(mu, kappa):
    from scipy.optimize import brentq

    f = lambda z: q_direct(float(symbol_direct(mu, kappa, z)))
    pts = []
    if kappa < 1:
        lo, hi = symbol_direct(mu, kappa, 0.0), symbol_direct(mu, kappa, 2 * math.pi)
        if lo < 0.5 < hi:
            pts.append(brentq(lambda z: symbol_direct(mu, kappa, z) - 0.5, 0, 2 * math.pi))
    ref, _ = integrate.quad(f, 1e-14, 2 * math.pi, points=pts or None, limit=500, epsabs=1e-12)
    assert quantum_capacity(mu, kappa) == pytest.approx(ref / (2 * math.pi), abs=1e-8)


def test_quantum_capacity_frozen_values():
    # frozen after agreement with the adaptive-quadrature oracle above
    assert quantum_capacity(0.5, 0.5) == pytest.approx(1.654112, abs=1e-6)
    assert quantum_capacity(0.5, 2.0) == pytest.approx(2.0, abs=1e-9)
    assert quantum_capacity(0.9, 1.5) == pytest.approx(4.90689, abs=1e-5)


@pytest.mark.parametrize("mu, kappa", [(0.5, 0.5), (0.5, 2.0), (0.9, 1.5)])
def test_quantum_capacity_against_finer_grid(mu, kappa):
    coarse = quantum_capacity(mu, kappa)
    fine = quantum_capacity(mu, kappa, QuadratureSpec(points=40960))
    assert abs(coarse - fine) < 1e-6


def test_quantum_capacity_continuous_across_threshold():
    mus = np.linspace(0.7, 0.9, 21)
    values = np.array([quantum_capacity(mu, 1.25) for mu in mus])
    jumps = np.abs(np.diff(values))
    assert jumps.max() < 3 * np.median(jumps)


# --- block bounds ----------------------------------------------------------


def test_singleton_blocks_equal_sorted_spectrum():
    params = ChannelParams(0.5, 0.5)
    b = block_bounds(params, 32, [32])
    eta = gram_spectrum(params.with_n(32))
    np.testing.assert_array_equal(b.eta_lower, eta)
    np.testing.assert_array_equal(b.eta_upper, eta)


@pytest.mark.parametrize("P", [1, 2, 8])
def test_flat_symbol_bounds(P):
    b = block_bounds(ChannelParams(0.0, 0.3), P, [16, 32])
    np.testing.assert_allclose(b.eta_lower, 0.3, rtol=1e-14)
    np.testing.assert_allclose(b.eta_upper, 0.3, rtol=1e-14)
    lo, hi = quantum_capacity_bounds(ChannelParams(0.0, 0.75), P, [16, 32])
    assert lo == pytest.approx(math.log2(3), abs=1e-12) and hi == pytest.approx(math.log2(3), abs=1e-12)


def test_block_bounds_sandwich_symbol_quantiles():
    P = 8
    b = block_bounds(ChannelParams(0.5, 0.5), P, [64, 128, 256])
    # quantiles of eta(z) under uniform z at the block edges
    z = np.linspace(0, 2 * math.pi, 400001)
    q = np.quantile(symbol_direct(0.5, 0.5, z), np.arange(P + 1) / P)
    assert np.all(b.eta_lower <= q[1:] + 1e-12)
    assert np.all(b.eta_upper >= q[:-1] - 1e-12)
    assert np.all(b.eta_lower <= b.eta_upper)
    assert np.all(np.diff(b.eta_lower) >= 0) and np.all(np.diff(b.eta_upper) >= 0)


def test_block_bounds_require_divisibility():
    with pytest.raises(DomainError):
        block_bounds(ChannelParams(0.5, 0.5), 3, [64])


def test_block_bounds_convergence_flag():
    assert block_bounds(ChannelParams(0.0, 0.5), 4, [8, 16]).converged
    b = block_bounds(ChannelParams(0.5, 0.5), 4, [8, 16])
    assert not b.converged and b.n_used == (8, 16)
    assert BOUNDS_CONVERGENCE == 1e-6


@pytest.mark.parametrize("mu, kappa", [(0.5, 0.5), (0.3, 2.0)])
def test_quantum_bounds_contain_integral(mu, kappa):
    Q = quantum_capacity(mu, kappa)
    for P in (2, 4, 8):
        lo, hi = quantum_capacity_bounds(ChannelParams(mu, kappa), P, [64, 128, 256])
        assert lo <= Q <= hi


def test_quantum_bounds_approach_integral():
    Q = quantum_capacity(0.5, 0.5)
    widths = []
    for P in (4, 16, 64):
        lo, hi = quantum_capacity_bounds(ChannelParams(0.5, 0.5), P, [256, 512])
        widths.append(hi - lo)
        assert lo <= Q <= hi
    assert widths[0] > widths[1] > widths[2]


# --- classical capacity ----------------------------------------------------


@pytest.mark.parametrize("kappa", [0.0, 0.3, 0.5, 1.0])
def test_memoryless_classical(kappa):
    assert classical_capacity(0.0, kappa, N8) == pytest.approx(g_direct(kappa * N8), abs=1e-12)


@pytest.mark.parametrize("mu, kappa", [(1.0, 0.3), (0.4, 1.0), (1.0, 1.0)])
def test_perfect_transfer(mu, kappa):
    assert classical_capacity(mu, kappa, N8) == pytest.approx(g_direct(N8), abs=1e-12)


@pytest.mark.parametrize("mu", [0.2, 0.5, 0.9])
def test_classical_kappa_zero(mu):
    assert classical_capacity(mu, 0.0, N8) == pytest.approx(g_direct(mu * N8), abs=1e-12)


def test_classical_example_values():
    assert classical_capacity(0.0, 0.5, N8) == pytest.approx(3.60964, abs=1e-5)
    assert classical_capacity(0.0, 1.0, N8) == pytest.approx(4.529325, abs=1e-6)


@pytest.mark.parametrize("mu, kappa, N", [(0.5, 0.5, 1.0), (0.5, 0.5, 8.0), (0.9, 0.9, 8.0), (0.2, 0.95, 0.1), (0.7, 0.3, 50.0)])
def test_waterfilling_solution(mu, kappa, N):
    sol = waterfill_attenuator(mu, kappa, N)
    assert abs(sol.achieved_mean - N) <= 1e-8 * N
    assert np.all(sol.N_of_z >= 0)
    assert sol.L > 0


def test_waterfilling_against_independent_solver():
    mu, kappa, N = 0.5, 0.5, 8.0
    eta = lambda z: symbol_direct(mu, kappa, z)
    photons = lambda z, L: 1.0 / (eta(z) * (2.0 ** (L / eta(z)) - 1.0))
    from scipy.optimize import brentq

    def mean(L):
        return integrate.quad(lambda z: photons(z, L), 1e-9, 2 * math.pi, limit=400)[0] / (2 * math.pi)

    with np.errstate(over="ignore"):
        L = brentq(lambda L: mean(L) - N, 1e-3, 1.0, xtol=1e-14)
        ref = integrate.quad(lambda z: g_direct(eta(z) * photons(z, L)), 1e-9, 2 * math.pi, limit=400)[0] / (2 * math.pi)
    sol = waterfill_attenuator(mu, kappa, N)
    assert sol.L == pytest.approx(L, rel=1e-7)
    assert sol.capacity_value == pytest.approx(ref, abs=1e-8)
    assert sol.capacity_value == pytest.approx(3.806366, abs=1e-6)


def test_classical_monotone_in_memory():
    values = [classical_capacity(mu, 0.5, N8) for mu in (0.0, 0.2, 0.4, 0.6, 0.8)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_classical_rejections():
    with pytest.raises(DomainError):
        classical_capacity(0.5, 1.5, N8)
    with pytest.raises(DomainError):
        classical_capacity(0.5, 0.5, 0.0)
    with pytest.raises(DomainError, match="unavailable for amplifier"):
        classical_capacity_bounds_attenuator(ChannelParams(0.5, 2.0), 4, [64], N8)


def test_bracket_failure_reports_endpoints():
    with pytest.raises(BracketError) as info:
        _solve_multiplier(lambda L: 1.0, 5.0)
    assert info.value.lower == 1e-12 and info.value.upper == 1.0


def test_discrete_waterfilling():
    etas = np.array([0.1, 0.4, 0.9])
    L, photons = waterfill_discrete(etas, 3.0)
    assert np.mean(photons) == pytest.approx(3.0, rel=1e-12)
    # better channels get more photons
    assert photons[0] < photons[1] < photons[2]


def test_classical_bounds_single_block():
    params = ChannelParams(0.5, 0.5)
    eta = gram_spectrum(params.with_n(64))
    lo, hi = classical_capacity_bounds_attenuator(params, 1, [64], N8)
    assert lo == pytest.approx(g_direct(eta[0] * N8), abs=1e-12)
    assert hi == pytest.approx(g_direct(eta[-1] * N8), abs=1e-12)


def test_classical_bounds_flat():
    lo, hi = classical_capacity_bounds_attenuator(ChannelParams(0.0, 0.5), 4, [16], N8)
    assert lo == pytest.approx(g_direct(4.0), abs=1e-12) and hi == pytest.approx(g_direct(4.0), abs=1e-12)


def test_classical_bounds_converge():
    C = classical_capacity(0.5, 0.5, N8)
    prev = None
    for P in (4, 8, 16):
        lo, hi = classical_capacity_bounds_attenuator(ChannelParams(0.5, 0.5), P, [128, 256, 512], N8)
        assert lo <= C <= hi
        if prev:
            assert lo >= prev[0] - 1e-12 and hi <= prev[1] + 1e-12
        prev = (lo, hi)


# --- amplifier lower bound -------------------------------------------------


def test_amplifier_flat_example():
    # g(2 * 9 + 1) - g(1)
    assert classical_capacity_lower_amplifier(0.0, 2.0, N8) == pytest.approx(g_direct(19) - 2, abs=1e-12)
    assert classical_capacity_lower_amplifier(0.0, 2.0, N8) == pytest.approx(3.727939, abs=1e-6)
    assert classical_capacity_lower_amplifier(0.0, 2.0, N8, offset=-1) == pytest.approx(g_direct(17) - 2, abs=1e-12)


def test_amplifier_perfect_transfer():
    # eta = 1: g(N + 2) with the printed offset, g(N) with the standard one
    assert classical_capacity_lower_amplifier(1.0, 1.5, N8) == pytest.approx(g_direct(N8 + 2), abs=1e-12)
    assert classical_capacity_lower_amplifier(1.0, 1.5, N8, offset=-1) == pytest.approx(g_direct(N8), abs=1e-12)


def test_amplifier_monotone_in_memory():
    values = [classical_capacity_lower_amplifier(mu, 1.5, N8) for mu in (0.0, 0.5, 0.9)]
    assert values[0] < values[1] < values[2]
    np.testing.assert_allclose(values, [3.9719, 4.1954, 4.5685], atol=1e-4)


@pytest.mark.parametrize("mu, kappa", [(0.3, 2.0), (0.9, 1.5)])
def test_amplifier_constraint_met(mu, kappa):
    sol = amplifier_waterfill(mu, kappa, N8)
    assert abs(sol.achieved_mean - N8) <= 1e-8 * N8
    assert np.all(sol.N_of_z >= 0)


def test_amplifier_zero_energy_limit():
    # with the printed +1 the bound keeps the positive offset term as N -> 0
    mu, kappa = 0.3, 2.0
    offset_term = szego_average(lambda x: g_of_x(x + 1) - g_of_x(x - 1), mu, kappa).value
    assert classical_capacity_lower_amplifier(mu, kappa, 1e-9) == pytest.approx(offset_term, abs=1e-6)
    assert classical_capacity_lower_amplifier(mu, kappa, 1e-9, offset=-1) == pytest.approx(0.0, abs=1e-6)


def test_amplifier_rejections():
    with pytest.raises(DomainError):
        classical_capacity_lower_amplifier(0.5, 0.5, N8)
    with pytest.raises(DomainError):
        classical_capacity_lower_amplifier(0.5, 2.0, N8, offset=0)

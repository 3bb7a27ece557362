"""Quantum and classical capacities of the unraveled channel.

Capacities are in bits (qubits for Q) per channel use.  Below and above
threshold the asymptotic values are averages of single-mode formulas over the
symbol ``eta(z)``; the finite-``n`` spectra give sandwiching bounds through the
block construction in ``block_bounds``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import BracketError, DomainError
from .model import ChannelParams
from .spectra import (
    QuadratureSpec,
    _flat_value,
    gram_spectrum,
    quadrature_grid,
    symbol_from_angle,
    szego_average,
)

LN2 = math.log(2.0)
BOUNDS_CONVERGENCE = 1e-6
MULTIPLIER_RTOL = 1e-14
_BRACKET_LOW = 1e-12
_BRACKET_HIGH = 1.0
_MAX_DOUBLINGS = 200


def q_of_eta(eta):
    """Single-mode quantum capacity ``max{0, log2(eta) - log2|eta - 1|}``; ``inf`` at eta = 1."""
    x = np.asarray(eta, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise DomainError("eta must be non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        lossy = np.log2(x) - np.log2(np.abs(1.0 - x))
        # -log2(1 - 1/eta) keeps precision for large gains
        gain = -np.log1p(-1.0 / np.where(x > 1.0, x, 2.0)) / LN2
    out = np.where(x > 1.0, gain, np.maximum(lossy, 0.0))
    out = np.where(x == 1.0, np.inf, out)
    out = np.where(np.isposinf(x), 0.0, out)
    return out if out.ndim else float(out)


def g_of_x(x):
    """Bosonic entropy ``(x+1) log2(x+1) - x log2 x`` with ``g(0) = 0``."""
    v = np.asarray(x, dtype=float)
    if np.any(v < 0) or np.any(np.isnan(v)):
        raise DomainError("g is defined for x >= 0 only")
    pos = v > 0
    safe = np.where(pos, v, 1.0)
    # x log(1 + 1/x), written so that 1/x never overflows for tiny x
    big = safe >= 1.0
    tail = np.where(big, np.log1p(1.0 / np.where(big, safe, 1.0)), np.log1p(safe) - np.log(safe))
    out = (np.log1p(safe) + safe * tail) / LN2
    out = np.where(pos, out, 0.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# finite-n block bounds


@dataclass(frozen=True)
class BlockBounds:
    P: int
    eta_lower: np.ndarray
    eta_upper: np.ndarray
    n_used: tuple
    converged: bool


def block_bounds(params: ChannelParams, P: int, n_schedule: Sequence[int]) -> BlockBounds:
    """Per-block infimum and supremum of the sorted spectra over ``n_schedule``.

    ``params.n`` is ignored.  ``converged`` is set when adding the last ``n``
    moved no bound by more than ``1e-6``.
    """
    if P < 1:
        raise DomainError("P must be a positive integer")
    schedule = [int(n) for n in n_schedule]
    if not schedule:
        raise DomainError("n_schedule is empty")
    for n in schedule:
        if n % P:
            raise DomainError(f"P={P} does not divide n={n}")
    lower = upper = None
    prev = None
    for n in schedule:
        eta = gram_spectrum(params.with_n(n)).reshape(P, n // P)
        lo, hi = eta[:, 0], eta[:, -1]
        prev = (lower, upper)
        lower = lo if lower is None else np.minimum(lower, lo)
        upper = hi if upper is None else np.maximum(upper, hi)
    converged = False
    if len(schedule) > 1:
        change = max(np.max(np.abs(lower - prev[0])), np.max(np.abs(upper - prev[1])))
        converged = bool(change < BOUNDS_CONVERGENCE)
    return BlockBounds(P, lower, upper, tuple(schedule), converged)


def quantum_bounds_from_blocks(blocks: BlockBounds, amplifying: bool) -> tuple[float, float]:
    q_low = float(np.mean(q_of_eta(blocks.eta_lower)))
    q_high = float(np.mean(q_of_eta(blocks.eta_upper)))
    # q grows with eta below 1 and shrinks with eta above 1
    return (q_high, q_low) if amplifying else (q_low, q_high)


def quantum_capacity_bounds(params: ChannelParams, P: int, n_schedule: Sequence[int]) -> tuple[float, float]:
    """``(Q_lower, Q_upper)`` from the memoryless channels built on the block extremes."""
    blocks = block_bounds(params, P, n_schedule)
    return quantum_bounds_from_blocks(blocks, params.amplifying)


def _reject_divergent(mu: float, kappa: float) -> None:
    if mu == 1.0 or kappa == 1.0:
        raise DomainError(f"quantum capacity diverges at mu={mu:g}, kappa={kappa:g} (mu = 1 or kappa = 1)")


def quantum_capacity(mu: float, kappa: float, quad: QuadratureSpec | None = None) -> float:
    """Average of ``q`` over the asymptotic symbol (unbounded input energy).

    Above threshold the single diverging eigenvalue carries no quantum
    capacity, so the same average applies on both sides of ``mu*kappa = 1``.
    """
    ChannelParams(mu, kappa)
    _reject_divergent(mu, kappa)
    kinks = (0.5,) if kappa < 1.0 else ()
    res = szego_average(q_of_eta, mu, kappa, quad, kinks)
    if not res.converged:
        warnings.warn(f"quantum capacity quadrature unconverged (error estimate {res.error:.2e})", RuntimeWarning)
    return res.value


# ---------------------------------------------------------------------------
# water-filling


@dataclass(frozen=True)
class WaterFillingSolution:
    L: float
    theta: np.ndarray
    N_of_z: np.ndarray
    achieved_mean: float
    capacity_value: float
    error: float = 0.0


def _solve_multiplier(mean_photons, N: float) -> float:
    """Root of the decreasing function ``mean_photons(L) - N``."""
    f = lambda L: mean_photons(L) - N
    lo, hi = _BRACKET_LOW, _BRACKET_HIGH
    if not f(lo) > 0:
        raise BracketError(f"constraint not reachable at L={lo:g}", lo, hi)
    for _ in range(_MAX_DOUBLINGS):
        if f(hi) < 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BracketError("could not bracket the Lagrange multiplier", lo, hi)
    return brentq(f, lo, hi, xtol=1e-300, rtol=MULTIPLIER_RTOL, maxiter=500)


def attenuator_photons(eta, L: float):
    """Optimal photon number ``1 / (eta (2^{L/eta} - 1))`` on an attenuating mode."""
    eta = np.asarray(eta, dtype=float)
    pos = eta > 0
    safe = np.where(pos, eta, 1.0)
    with np.errstate(over="ignore"):
        denom = safe * np.expm1(L * LN2 / safe)
    return np.where(pos, 1.0 / denom, 0.0)


def amplifier_photons(eta, L: float):
    """``1 / (eta (1 - 2^{-L/eta})) - 1`` clamped at zero."""
    eta = np.asarray(eta, dtype=float)
    n = 1.0 / (eta * -np.expm1(-L * LN2 / eta)) - 1.0
    return np.maximum(n, 0.0)


def waterfill_discrete(etas, N: float) -> tuple[float, np.ndarray]:
    """Lagrange multiplier and photon numbers for attenuating modes with mean budget ``N``."""
    etas = np.asarray(etas, dtype=float)
    if N <= 0:
        raise DomainError("mean photon number must be positive")
    if not np.any(etas > 0):
        return math.inf, np.full(etas.shape, float(N))
    L = _solve_multiplier(lambda L: float(np.mean(attenuator_photons(etas, L))), N)
    return L, attenuator_photons(etas, L)


def _attenuator_solution(mu, kappa, N, grid):
    eta = symbol_from_angle(mu, kappa, grid.theta)
    L = _solve_multiplier(lambda L: grid.average(attenuator_photons(eta, L)), N)
    photons = attenuator_photons(eta, L)
    return L, photons, grid.average(photons), grid.average(g_of_x(eta * photons))


def waterfill_attenuator(mu: float, kappa: float, N: float, quad: QuadratureSpec | None = None) -> WaterFillingSolution:
    """Optimal photon distribution over the symbol and the resulting classical capacity."""
    ChannelParams(mu, kappa)
    if kappa > 1.0:
        raise DomainError("exact classical capacity is only available for kappa <= 1")
    if not N > 0:
        raise DomainError("mean photon number must be positive")
    quad = quad or QuadratureSpec()
    flat = _flat_value(mu, kappa)
    if flat is not None:
        theta = np.array([0.5 * math.pi])
        L = math.inf if flat == 0 else flat * math.log2(1.0 + 1.0 / (flat * N))
        return WaterFillingSolution(L, theta, np.array([float(N)]), float(N), float(g_of_x(flat * N)))
    prev = None
    for level in range(quad.max_refinements + 1):
        grid = quadrature_grid(mu, kappa, (), quad, level)
        L, photons, achieved, cap = _attenuator_solution(mu, kappa, N, grid)
        if prev is not None:
            err = abs(cap - prev)
            if err < quad.tol or level == quad.max_refinements:
                if err >= quad.tol:
                    warnings.warn(f"water-filling quadrature unconverged (error {err:.2e})", RuntimeWarning)
                return WaterFillingSolution(L, grid.theta, photons, achieved, cap, err)
        prev = cap
    raise AssertionError("unreachable")


def classical_capacity(mu: float, kappa: float, N: float, quad: QuadratureSpec | None = None) -> float:
    return waterfill_attenuator(mu, kappa, N, quad).capacity_value


def classical_capacity_bounds_attenuator(params: ChannelParams, P: int, n_schedule: Sequence[int], N: float) -> tuple[float, float]:
    """``(C_lower, C_upper)`` by discrete water-filling over the block extremes."""
    if params.amplifying:
        raise DomainError("exact classical capacity unavailable for amplifier (kappa > 1)")
    blocks = block_bounds(params, P, n_schedule)
    return classical_bounds_from_blocks(blocks, N)


def classical_bounds_from_blocks(blocks: BlockBounds, N: float) -> tuple[float, float]:
    out = []
    for etas in (blocks.eta_lower, blocks.eta_upper):
        etas = np.clip(etas, 0.0, None)
        _, photons = waterfill_discrete(etas, N)
        out.append(float(np.mean(g_of_x(etas * photons))))
    return out[0], out[1]


def _amplifier_terms(eta, photons, offset):
    return g_of_x(eta * (photons + 1.0) + offset) - g_of_x(eta - 1.0)


def amplifier_waterfill(
    mu: float, kappa: float, N: float, quad: QuadratureSpec | None = None, offset: int = 1
) -> WaterFillingSolution:
    """Gaussian-encoding lower bound on the classical capacity for ``kappa > 1``.

    The rate density is ``g(eta (N(z)+1) + offset) - g(eta - 1)``.  ``offset=1``
    is the default; ``offset=-1`` gives the usual Holevo quantity of a
    phase-insensitive amplifier fed with thermal Gaussian inputs, and is the
    variant for which the photon distribution used here is the exact optimum.
    With ``offset=1`` the bound does not vanish as ``N -> 0``.
    """
    ChannelParams(mu, kappa)
    if kappa <= 1.0:
        raise DomainError("the amplifier bound requires kappa > 1")
    if not N > 0:
        raise DomainError("mean photon number must be positive")
    if offset not in (1, -1):
        raise DomainError("offset must be +1 or -1")
    quad = quad or QuadratureSpec()
    flat = _flat_value(mu, kappa)
    if flat is not None:
        eta = float(flat)
        L = -eta * math.log2(1.0 - 1.0 / (eta * (N + 1.0)))
        cap = float(_amplifier_terms(eta, N, offset))
        return WaterFillingSolution(L, np.array([0.5 * math.pi]), np.array([float(N)]), float(N), cap)
    prev = None
    for level in range(quad.max_refinements + 1):
        grid = quadrature_grid(mu, kappa, (), quad, level)
        eta = symbol_from_angle(mu, kappa, grid.theta)
        L = _solve_multiplier(lambda L: grid.average(amplifier_photons(eta, L)), N)
        photons = amplifier_photons(eta, L)
        cap = grid.average(_amplifier_terms(eta, photons, offset))
        if prev is not None:
            err = abs(cap - prev)
            if err < quad.tol or level == quad.max_refinements:
                if err >= quad.tol:
                    warnings.warn(f"amplifier bound quadrature unconverged (error {err:.2e})", RuntimeWarning)
                return WaterFillingSolution(L, grid.theta, photons, grid.average(photons), cap, err)
        prev = cap
    raise AssertionError("unreachable")


def classical_capacity_lower_amplifier(
    mu: float, kappa: float, N: float, quad: QuadratureSpec | None = None, offset: int = 1
) -> float:
    return amplifier_waterfill(mu, kappa, N, quad, offset).capacity_value

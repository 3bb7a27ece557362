"""Memory-mode moment propagation and forgetfulness diagnostics.

After ``n`` uses the outgoing memory mode is

    m'_n = sqrt(mu kappa)^n m_1 + X . a + Y . e        (a -> a^dagger for kappa > 1)

so its first and second moments depend on the initial memory state only
through powers of ``sqrt(mu kappa)``.  Moments are tracked for one quadrature
per mode, with the vacuum variance equal to 1/2; for the amplifier this is the
quadrature left unchanged by conjugation, so the same variance formula holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DomainError
from .model import ChannelParams, ratio_powers

VACUUM_VARIANCE = 0.5
PSD_SLACK = 1e-10


@dataclass(frozen=True)
class GaussianMemoryScenario:
    """First and second moments of the initial memory, input and environment modes.

    The covariance matrix is ``[[V_m, C^T, D^T], [C, V_a, 0], [D, 0, V_e]]``.
    """

    mean_m: complex
    mean_a: np.ndarray
    mean_e: np.ndarray
    V_m: float
    C: np.ndarray
    D: np.ndarray
    V_a: np.ndarray
    V_e: np.ndarray

    def __post_init__(self):
        n = len(self.mean_a)
        object.__setattr__(self, "mean_a", np.asarray(self.mean_a, dtype=complex))
        object.__setattr__(self, "mean_e", np.asarray(self.mean_e, dtype=complex))
        object.__setattr__(self, "C", np.asarray(self.C, dtype=float))
        object.__setattr__(self, "D", np.asarray(self.D, dtype=float))
        object.__setattr__(self, "V_a", np.atleast_2d(np.asarray(self.V_a, dtype=float)))
        object.__setattr__(self, "V_e", np.atleast_2d(np.asarray(self.V_e, dtype=float)))
        shapes = {
            "mean_e": (self.mean_e.shape, (n,)),
            "C": (self.C.shape, (n,)),
            "D": (self.D.shape, (n,)),
            "V_a": (self.V_a.shape, (n, n)),
            "V_e": (self.V_e.shape, (n, n)),
        }
        for name, (got, want) in shapes.items():
            if got != want:
                raise DomainError(f"{name} has shape {got}, expected {want}")
        if self.V_m < 0:
            raise DomainError("V_m must be non-negative")
        smallest = np.linalg.eigvalsh(self.covariance())[0]
        if smallest < -PSD_SLACK:
            raise DomainError(f"covariance matrix is not positive semidefinite (min eigenvalue {smallest:.3e})")

    @property
    def n(self) -> int:
        return len(self.mean_a)

    def covariance(self) -> np.ndarray:
        n = self.n
        V = np.zeros((2 * n + 1, 2 * n + 1))
        V[0, 0] = self.V_m
        V[0, 1 : n + 1] = V[1 : n + 1, 0] = self.C
        V[0, n + 1 :] = V[n + 1 :, 0] = self.D
        V[1 : n + 1, 1 : n + 1] = self.V_a
        V[n + 1 :, n + 1 :] = self.V_e
        return V

    def truncated(self, n: int) -> GaussianMemoryScenario:
        """The same state restricted to the first ``n`` uses."""
        if n > self.n:
            raise DomainError(f"scenario covers {self.n} uses, {n} requested")
        return replace(
            self,
            mean_a=self.mean_a[:n],
            mean_e=self.mean_e[:n],
            C=self.C[:n],
            D=self.D[:n],
            V_a=self.V_a[:n, :n],
            V_e=self.V_e[:n, :n],
        )

    def mean_energy(self) -> float:
        """``(<m^dag m> + sum_j <a_j^dag a_j>) / (n + 1)`` for phase-symmetric modes."""
        occ_m = abs(self.mean_m) ** 2 + self.V_m - VACUUM_VARIANCE
        occ_a = np.abs(self.mean_a) ** 2 + np.diag(self.V_a) - VACUUM_VARIANCE
        return float((occ_m + occ_a.sum()) / (self.n + 1))

    @classmethod
    def vacuum(cls, n: int, mean_m: complex = 0.0, V_m: float = VACUUM_VARIANCE) -> GaussianMemoryScenario:
        """Vacuum inputs and environment; the memory mode may be displaced or heated."""
        return cls(
            mean_m=mean_m,
            mean_a=np.zeros(n),
            mean_e=np.zeros(n),
            V_m=V_m,
            C=np.zeros(n),
            D=np.zeros(n),
            V_a=VACUUM_VARIANCE * np.eye(n),
            V_e=VACUUM_VARIANCE * np.eye(n),
        )


@dataclass(frozen=True)
class MemoryMomentResult:
    mean_out: complex
    var_out: float


def memory_coupling_vectors(params: ChannelParams) -> tuple[np.ndarray, np.ndarray]:
    """Weights ``X`` (inputs) and ``Y`` (environment) of the final memory mode."""
    mu, kappa, n = params.mu, params.kappa, params.n
    decay = ratio_powers(params, n - np.arange(1, n + 1))
    X = math.sqrt(abs(1.0 - kappa)) * decay
    Y = math.sqrt((1.0 - mu) * kappa) * decay
    return X, Y


def _propagate(params, mean_m, mean_a, mean_e, V_m, C, D, V_a, V_e) -> MemoryMomentResult:
    X, Y = memory_coupling_vectors(params)
    head = float(ratio_powers(params, [params.n])[0])
    inputs = np.conj(mean_a) if params.amplifying else mean_a
    mean = head * mean_m + X @ inputs + Y @ mean_e
    var = head**2 * V_m + head * 2.0 * (X @ C + Y @ D) + X @ V_a @ X + Y @ V_e @ Y
    return MemoryMomentResult(complex(mean), float(var))


def _moments(s: GaussianMemoryScenario) -> tuple:
    return (s.mean_m, s.mean_a, s.mean_e, s.V_m, s.C, s.D, s.V_a, s.V_e)


def propagate_memory_moments(scenario: GaussianMemoryScenario, params: ChannelParams) -> MemoryMomentResult:
    if scenario.n != params.n:
        raise DomainError(f"scenario has {scenario.n} uses but params.n = {params.n}")
    return _propagate(params, *_moments(scenario))


def moment_difference(
    scenario_a: GaussianMemoryScenario, scenario_b: GaussianMemoryScenario, params: ChannelParams
) -> MemoryMomentResult:
    """Output moments of ``b`` minus those of ``a``.

    Both moments are linear in the input moments, so the difference is
    propagated directly; subtracting the two outputs would lose it to
    rounding once it drops below ``eps`` times the output variance.
    """
    for s in (scenario_a, scenario_b):
        if s.n != params.n:
            raise DomainError(f"scenario has {s.n} uses but params.n = {params.n}")
    diff = [np.subtract(y, x) for x, y in zip(_moments(scenario_a), _moments(scenario_b))]
    return _propagate(params, *diff)


@dataclass(frozen=True)
class DecayRow:
    n: int
    delta_mean: float
    delta_var: float

    @property
    def distance(self) -> float:
        """``|delta mean| + |delta variance|``, the report's distance between output moments."""
        return self.delta_mean + self.delta_var


@dataclass(frozen=True)
class DecayReport:
    rows: list = field(default_factory=list)
    var_rate: float | None = None
    mean_rate: float | None = None
    expected_var_rate: float = 0.0

    @property
    def expected_mean_rate(self) -> float:
        return 0.5 * self.expected_var_rate

    def json_lines(self) -> list[dict]:
        return [
            {"n": r.n, "delta_mean": r.delta_mean, "delta_var": r.delta_var, "fitted_rate": self.var_rate}
            for r in self.rows
        ]


def _fit_rate(ns, values) -> float | None:
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = values > 1e-300
    if keep.sum() < 2:
        return None
    slope, _ = np.polyfit(ns[keep], np.log(values[keep]), 1)
    return float(slope)


def forgetfulness_decay(
    params: ChannelParams,
    scenario_a: GaussianMemoryScenario,
    scenario_b: GaussianMemoryScenario,
    n_range: Sequence[int],
) -> DecayReport:
    """Distance between final-memory moments for two initial memory states, per ``n``.

    The fitted log-slope of the variance difference should equal
    ``log(mu kappa)``, that of the mean difference half of it.
    """
    t = params.product
    if t >= 1.0:
        raise DomainError(
            f"mu*kappa = {t:g} >= 1: at and above threshold memory correlations are "
            "exponentially enhanced, not forgotten"
        )
    rows = []
    for n in n_range:
        p = params.with_n(int(n))
        d = moment_difference(scenario_a.truncated(p.n), scenario_b.truncated(p.n), p)
        rows.append(DecayRow(p.n, abs(d.mean_out), abs(d.var_out)))
    ns = [r.n for r in rows]
    expected = math.log(t) if t > 0 else -math.inf
    return DecayReport(
        rows,
        _fit_rate(ns, [r.delta_var for r in rows]),
        _fit_rate(ns, [r.delta_mean for r in rows]),
        expected,
    )

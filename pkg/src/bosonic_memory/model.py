"""Linear-optics description of the bosonic memory channel.

A single channel use mixes the input mode ``a`` with a memory mode ``m``
that is handed over to the next use, after the memory mode has itself
exchanged excitations with a fresh vacuum environment mode ``e``.  The
memory coupling is a beam splitter of transmissivity ``mu``; the signal
coupling is a beam splitter of transmissivity ``kappa <= 1`` or a linear
amplifier of gain ``kappa > 1``.

Everything here works at the level of mode-transformation matrices:

* ``elementary_step`` gives the single-use wiring,
* ``build_coupling_matrices`` gives the n-use input/output relations
  ``b = A a - E e`` (attenuator) or ``b = A a + E e^dagger`` (amplifier),
  where column 0 of ``E`` acts on the initial memory mode,
* ``build_gram_matrix`` gives ``M = A A^T`` in closed form.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

THRESHOLD_TOLERANCE = 1e-12
N_MAX = 2048
# beyond this exponent (mu*kappa)**n no longer fits in a float64
_MAX_LOG_MAGNITUDE = 700.0
# (sqrt(mu*kappa))**k is evaluated through exp/log above this exponent
_LOG_POWER_CUTOFF = 50
# bound on the ratio between the commutation defect and eps * M_nn above threshold
# (worst seen over 3000 random cases is about 30)
_ROUNDING_FACTOR = 64.0


class ChannelKind(enum.Enum):
    ATTENUATING = "attenuating"
    AMPLIFYING = "amplifying"


class Threshold(enum.Enum):
    BELOW = "below"
    AT = "at"
    ABOVE = "above"


@dataclass(frozen=True)
class Regime:
    kind: ChannelKind
    threshold: Threshold

    def __post_init__(self):
        if self.kind is ChannelKind.ATTENUATING and self.threshold is Threshold.ABOVE:
            raise DomainError("an attenuating channel cannot operate above threshold")


@dataclass(frozen=True)
class ChannelParams:
    """Memory parameter ``mu``, transmissivity/gain ``kappa`` and use count ``n``."""

    mu: float
    kappa: float
    n: int = 1

    def __post_init__(self):
        mu, kappa = float(self.mu), float(self.kappa)
        if not (math.isfinite(mu) and 0.0 <= mu <= 1.0):
            raise DomainError(f"mu must lie in [0, 1], got {self.mu!r}")
        if not (math.isfinite(kappa) and kappa >= 0.0):
            raise DomainError(f"kappa must be a finite non-negative number, got {self.kappa!r}")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "n", int(self.n))

    @property
    def product(self) -> float:
        """The threshold product mu*kappa."""
        return self.mu * self.kappa

    @property
    def ratio(self) -> float:
        """sqrt(mu*kappa), the per-use decay (or growth) of memory amplitudes."""
        return math.sqrt(self.mu * self.kappa)

    @property
    def amplifying(self) -> bool:
        return self.kappa > 1.0

    @property
    def regime(self) -> Regime:
        return classify_regime(self)

    def with_n(self, n: int) -> ChannelParams:
        return ChannelParams(self.mu, self.kappa, n)


def classify_regime(params: ChannelParams) -> Regime:
    kind = ChannelKind.AMPLIFYING if params.kappa > 1.0 else ChannelKind.ATTENUATING
    t = params.product
    if abs(t - 1.0) <= THRESHOLD_TOLERANCE:
        threshold = Threshold.AT
    elif t < 1.0:
        threshold = Threshold.BELOW
    else:
        threshold = Threshold.ABOVE
    return Regime(kind, threshold)


def ratio_powers(params: ChannelParams, exponents) -> np.ndarray:
    """``sqrt(mu*kappa) ** k`` for an array of non-negative integer exponents.

    Large exponents above threshold go through ``exp(k * log(s))`` so that the
    result degrades gracefully instead of accumulating repeated-multiply error.
    """
    k = np.asarray(exponents, dtype=float)
    s = params.ratio
    if s > 1.0:
        out = np.power(s, k)
        big = k > _LOG_POWER_CUTOFF
        if np.any(big):
            out[big] = np.exp(k[big] * (0.5 * math.log(params.product)))
        return out
    # 0.0 ** 0 == 1 keeps the memoryless diagonal intact
    return np.power(s, k)


def _check_size(params: ChannelParams) -> None:
    if params.n > N_MAX:
        raise DomainError(f"n={params.n} exceeds the supported maximum {N_MAX}")
    t = params.product
    if t > 1.0 and params.n * math.log(t) > _MAX_LOG_MAGNITUDE:
        raise DomainError(
            f"n={params.n} is too large above threshold: (mu*kappa)**n overflows float64"
        )


@dataclass(frozen=True)
class ElementaryStep:
    """Single-use wiring of the channel.

    ``coefficients[i, k]`` couples output ``i`` (rows: outgoing memory m',
    output b, outgoing environment e') to input ``k`` (columns: incoming
    memory m, input a, environment e).  ``adjoint[i, k]`` marks couplings to
    the creation operator of the input mode, which only occur for the
    amplifier.
    """

    coefficients: np.ndarray
    adjoint: np.ndarray

    def commutator(self, i: int, k: int) -> float:
        """``[out_i, out_k^dagger]`` implied by the wiring (inputs canonical)."""
        sign = np.where(self.adjoint[i], -1.0, 1.0)
        same = self.adjoint[i] == self.adjoint[k]
        return float(np.sum(np.where(same, sign * self.coefficients[i] * self.coefficients[k], 0.0)))


def elementary_step(params: ChannelParams) -> ElementaryStep:
    mu, kappa = params.mu, params.kappa
    if kappa <= 1.0:
        c = np.array(
            [
                [math.sqrt(mu * kappa), math.sqrt(1 - kappa), math.sqrt((1 - mu) * kappa)],
                [-math.sqrt(mu * (1 - kappa)), math.sqrt(kappa), -math.sqrt((1 - mu) * (1 - kappa))],
                [-math.sqrt(1 - mu), 0.0, math.sqrt(mu)],
            ]
        )
        adj = np.zeros((3, 3), dtype=bool)
    else:
        c = np.array(
            [
                [math.sqrt(mu * kappa), math.sqrt(kappa - 1), math.sqrt((1 - mu) * kappa)],
                [math.sqrt(mu * (kappa - 1)), math.sqrt(kappa), math.sqrt((1 - mu) * (kappa - 1))],
                [-math.sqrt(1 - mu), 0.0, math.sqrt(mu)],
            ]
        )
        adj = np.array(
            [
                [False, True, False],
                [True, False, True],
                [False, False, False],
            ]
        )
    return ElementaryStep(c, adj)


@dataclass(frozen=True)
class ModeCouplingMatrices:
    """Output-from-input (``A``, n x n) and output-from-environment (``E``, n x (n+1)) couplings.

    ``E`` has non-negative entries; the attenuator subtracts it
    (``b = A a - E e``), the amplifier adds it on creation operators.
    Column 0 of ``E`` multiplies the initial memory mode.
    """

    A: np.ndarray
    E: np.ndarray
    params: ChannelParams

    @property
    def sign(self) -> int:
        """+1 when ``A A^T + E E^T = I`` (attenuator), -1 when ``A A^T - E E^T = I``."""
        return -1 if self.params.amplifying else 1

    def commutator_defect(self) -> float:
        """Max-abs entry of ``A A^T +/- E E^T - I``."""
        n = self.params.n
        R = self.A @ self.A.T + self.sign * (self.E @ self.E.T) - np.eye(n)
        return float(np.max(np.abs(R)))


def build_coupling_matrices(params: ChannelParams) -> ModeCouplingMatrices:
    _check_size(params)
    mu, kappa, n = params.mu, params.kappa, params.n
    j = np.arange(n)
    lag = j[:, None] - j[None, :]

    A = np.zeros((n, n))
    lower = lag > 0
    A[lower] = math.sqrt(mu) * (kappa - 1.0) * ratio_powers(params, lag[lower] - 1)
    A[j, j] = math.sqrt(kappa)

    gap = abs(1.0 - kappa)
    E = np.zeros((n, n + 1))
    E[:, 0] = math.sqrt(mu * gap) * ratio_powers(params, j)
    tri = lag >= 0
    env = np.zeros((n, n))
    env[tri] = math.sqrt((1.0 - mu) * gap) * ratio_powers(params, lag[tri])
    E[:, 1:] = env
    return ModeCouplingMatrices(A, E, params)


@dataclass(frozen=True)
class GramMatrix:
    M: np.ndarray
    params: ChannelParams = field(compare=False)

    @property
    def n(self) -> int:
        return self.M.shape[0]


def _kappa_table(params: ChannelParams) -> np.ndarray:
    """kappa_{jj'} indexed by min(j, j') - 1 (0-based)."""
    mu, kappa, n = params.mu, params.kappa, params.n
    t = params.product
    terms = np.power(t, np.arange(max(n - 1, 0)))
    geo = np.concatenate([[0.0], np.cumsum(terms)])
    return kappa + mu * (kappa - 1.0) ** 2 * geo


def build_gram_matrix(params: ChannelParams) -> GramMatrix:
    """``M = A A^T`` from its closed form; eigenvalues are the normal-mode transmissivities."""
    _check_size(params)
    mu, n = params.mu, params.n
    j = np.arange(n)
    low = np.minimum(j[:, None], j[None, :])
    lag = np.abs(j[:, None] - j[None, :])
    eye = np.eye(n)

    if classify_regime(params).threshold is Threshold.AT:
        if mu == 0.0:
            raise DomainError("threshold branch requires mu > 0")
        M = eye + (1.0 - mu) + (1.0 - mu) ** 2 / mu * (low + 1)
        return GramMatrix(M, params)

    kt = _kappa_table(params)[low]
    M = (kt - 1.0) * ratio_powers(params, lag)
    # the diagonal is kappa_jj itself; writing it directly keeps flat cases exact
    M[j, j] = kt[j, j]
    return GramMatrix(M, params)


def limiting_kappa(mu: float, kappa: float) -> float:
    """Diagonal of the limiting Toeplitz matrix, ``kappa + mu (kappa-1)^2 / (1 - mu kappa)``.

    Only meaningful below threshold.
    """
    t = mu * kappa
    if t >= 1.0:
        raise DomainError("the limiting diagonal exists only below threshold (mu*kappa < 1)")
    return kappa + mu * (kappa - 1.0) ** 2 / (1.0 - t)


def write_matrix_csv(path, matrix) -> None:
    """Row-major CSV with 17 significant digits (round-trips float64 exactly)."""
    arr = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in arr:
            writer.writerow([format(float(x), ".17g") for x in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
    return np.array(rows, dtype=float)


def max_exact_n(params: ChannelParams, tol: float = 1e-12) -> int:
    """Largest ``n`` for which ``A A^T +/- E E^T = I`` is expected to hold to ``tol``.

    Above threshold the entries of ``A A^T`` grow like ``(mu kappa)^n`` while the
    identity stays of order one, so the check loses roughly ``eps * M_nn``
    absolute accuracy.  Below and at threshold there is no cap beyond ``N_MAX``.
    """
    if classify_regime(params).threshold is not Threshold.ABOVE:
        return N_MAX
    eps = float(np.finfo(float).eps)
    n = 1
    while n < N_MAX:
        trial = params.with_n(n + 1)
        if trial.n * math.log(params.product) > _MAX_LOG_MAGNITUDE:
            break
        if _ROUNDING_FACTOR * eps * _kappa_table(trial)[-1] > tol:
            break
        n += 1
    return n

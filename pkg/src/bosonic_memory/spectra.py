"""Normal-mode spectra of the memory channel.

The eigenvalues of the Gram matrix ``M = A A^T`` are the transmissivities
(``kappa <= 1``) or gains (``kappa > 1``) of the independent single-mode
channels obtained after unraveling.  For large ``n`` they distribute like the
symbol

    eta(z) = |sqrt(mu) - sqrt(kappa) e^{iz/2}|^2 / |1 - sqrt(mu kappa) e^{iz/2}|^2

under uniform ``z`` in ``[0, 2 pi]``.  All averages over ``z`` are taken in the
half angle ``theta = z / 2`` on ``[0, pi]``; the symbol is even in ``theta`` so
this is the same as averaging over a full period.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, EigensolverError
from .model import (
    ChannelParams,
    GramMatrix,
    ModeCouplingMatrices,
    Threshold,
    build_gram_matrix,
    classify_regime,
    ratio_powers,
)

RESIDUAL_TOLERANCE = 1e-10


# ---------------------------------------------------------------------------
# eigen-analysis


def eigen_spectrum(M) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors (columns) of a symmetric matrix.

    Raises EigensolverError if LAPACK does not converge or any eigenpair has a
    residual larger than ``1e-10 * ||M||``.
    """
    mat = M.M if isinstance(M, GramMatrix) else np.asarray(M, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise DomainError("matrix has non-finite entries")
    if not np.allclose(mat, mat.T, rtol=1e-12, atol=0.0):
        raise DomainError("matrix is not symmetric")
    try:
        vals, vecs = np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"symmetric eigensolver did not converge: {exc}") from exc
    scale = max(np.max(np.abs(vals)), np.finfo(float).tiny) if vals.size else 1.0
    residual = float(np.max(np.linalg.norm(mat @ vecs - vecs * vals, axis=0))) if vals.size else 0.0
    if residual > RESIDUAL_TOLERANCE * scale:
        raise EigensolverError(
            f"eigenpair residual {residual:.3e} exceeds {RESIDUAL_TOLERANCE:g} * ||M|| = "
            f"{RESIDUAL_TOLERANCE * scale:.3e}",
            residual=residual,
        )
    return vals, vecs


def _inverse_factor(params: ChannelParams) -> np.ndarray:
    """``A^{-1}`` for ``kappa > 1``: lower-triangular Toeplitz with bounded entries.

    ``A = (sqrt(kappa) - sqrt(mu) Z)(1 - sqrt(mu kappa) Z)^{-1}`` with ``Z`` the
    down-shift, so the inverse decays like ``sqrt(mu/kappa)**k``.
    """
    mu, kappa, n = params.mu, params.kappa, params.n
    r = math.sqrt(mu / kappa)
    col = np.empty(n)
    col[0] = 1.0 / math.sqrt(kappa)
    if n > 1:
        col[1:] = math.sqrt(mu) * (1.0 - kappa) / kappa * np.power(r, np.arange(n - 1))
    j = np.arange(n)
    lag = j[:, None] - j[None, :]
    B = np.where(lag >= 0, col[np.clip(lag, 0, None)], 0.0)
    return B


def gram_spectrum(params: ChannelParams) -> np.ndarray:
    """Sorted eigenvalues of ``M`` for ``params.n`` uses.

    Above threshold the matrix carries one eigenvalue of order
    ``(mu kappa)**n``, which wipes out the absolute accuracy of a direct solve
    for all the others.  There the bounded part of the spectrum is taken from
    ``M^{-1} = A^{-T} A^{-1}`` instead, and only the largest eigenvalue from
    ``M`` itself.
    """
    regime = classify_regime(params)
    G = build_gram_matrix(params)
    if regime.threshold is not Threshold.ABOVE or params.n == 1:
        vals, _ = eigen_spectrum(G)
        return vals
    B = _inverse_factor(params)
    inv_vals, _ = eigen_spectrum(B.T @ B)
    finite = np.sort(1.0 / inv_vals[1:])
    top, _ = eigen_spectrum(G)
    return np.concatenate([finite, top[-1:]])


@dataclass(frozen=True)
class SpectrumDecomposition:
    """``A = O diag(sqrt(eta)) Oprime`` and ``E E^T = O diag(|eta - 1|) O^T``."""

    eta: np.ndarray
    O: np.ndarray
    Oprime: np.ndarray
    Odoubleprime: np.ndarray


def unravel(mats: ModeCouplingMatrices) -> SpectrumDecomposition:
    """Joint rotation of inputs, outputs and environment into independent single-mode channels."""
    A, E = mats.A, mats.E
    try:
        U, sv, Vt = np.linalg.svd(A)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"singular value decomposition did not converge: {exc}") from exc
    order = np.argsort(sv, kind="stable")
    eta = sv[order] ** 2
    O = U[:, order]
    Oprime = Vt[order, :]

    # rows of O^T E are orthogonal with squared norms |eta - 1|; orthonormalise
    # them largest first so that vanishing rows are completed from the complement
    G = O.T @ E
    norms = np.linalg.norm(G, axis=1)
    by_size = np.argsort(-norms, kind="stable")
    Q, R = np.linalg.qr(G[by_size].T)
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    Odp = np.empty_like(G)
    Odp[by_size] = (Q * signs).T
    return SpectrumDecomposition(eta, O, Oprime, Odp)


# ---------------------------------------------------------------------------
# asymptotic symbol


def _flat_value(mu: float, kappa: float):
    if mu == 0.0:
        return kappa
    if kappa == 0.0:
        return mu
    if mu == 1.0 or kappa == 1.0:
        return 1.0
    return None


def symbol_from_angle(mu: float, kappa: float, theta):
    """eta as a function of the half angle ``theta = z/2`` in ``[0, pi]``."""
    theta = np.asarray(theta, dtype=float)
    flat = _flat_value(mu, kappa)
    if flat is not None:
        out = np.full(theta.shape, float(flat))
        return out if out.ndim else float(out)
    s = math.sqrt(mu * kappa)
    half = np.sin(0.5 * theta) ** 2
    num = (math.sqrt(mu) - math.sqrt(kappa)) ** 2 + 4.0 * s * half
    den = (1.0 - s) ** 2 + 4.0 * s * half
    with np.errstate(divide="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
    return out if out.ndim else float(out)


def symbol_eval(mu: float, kappa: float, z):
    """Asymptotic eigenvalue symbol at ``z`` in ``[0, 2 pi]``.

    Returns ``inf`` at the pole ``mu*kappa == 1, z == 0``.
    """
    z_arr = np.asarray(z, dtype=float)
    if np.any((z_arr < 0) | (z_arr > 2 * math.pi)):
        raise DomainError("z must lie in [0, 2 pi]")
    return symbol_from_angle(mu, kappa, 0.5 * z_arr)


def symbol_preimage(mu: float, kappa: float, value: float):
    """Half angle where the symbol crosses ``value``, or None if it never does."""
    s = math.sqrt(mu * kappa)
    K = (kappa - 1.0) * (1.0 - mu)
    if s == 0.0 or K == 0.0 or value == 1.0:
        return None
    c = (1.0 + s * s - K / (value - 1.0)) / (2.0 * s)
    if -1.0 < c < 1.0:
        return math.acos(c)
    return None


def symbol_cdf(mu: float, kappa: float, x, left: bool = False):
    """Distribution function of eta(z) under uniform z.

    ``left=True`` gives the left limit, which differs only for a flat symbol
    (a point mass).
    """
    x = np.asarray(x, dtype=float)
    flat = _flat_value(mu, kappa)
    if flat is not None:
        edge = flat - 1e-12 * max(1.0, abs(flat))
        return np.where(x > flat + (flat - edge) if left else x >= edge, 1.0, 0.0)
    s = math.sqrt(mu * kappa)
    K = (kappa - 1.0) * (1.0 - mu)
    lo, hi = sorted((float(symbol_from_angle(mu, kappa, 0.0)), float(symbol_from_angle(mu, kappa, math.pi))))
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (1.0 + s * s - K / (x - 1.0)) / (2.0 * s)
    theta = np.arccos(np.clip(np.nan_to_num(c, nan=1.0), -1.0, 1.0))
    frac = theta / math.pi
    # eta increases with theta for attenuators and decreases for amplifiers
    cdf = frac if K < 0 else 1.0 - frac
    cdf = np.where(x < lo, 0.0, np.where(x >= hi, 1.0, cdf))
    return cdf


# ---------------------------------------------------------------------------
# quadrature over the symbol


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss-Legendre rule on the half angle.

    ``points`` is the node count of the coarsest level; each refinement halves
    every panel.  Refinement stops once two successive levels agree to ``tol``.
    """

    points: int = 4096
    tol: float = 1e-9
    max_refinements: int = 6
    panel_nodes: int = 16

    def __post_init__(self):
        if self.points < self.panel_nodes:
            raise DomainError(f"quadrature needs at least {self.panel_nodes} points")


@dataclass(frozen=True)
class SzegoResult:
    value: float
    error: float
    converged: bool


@dataclass(frozen=True)
class QuadratureGrid:
    theta: np.ndarray
    weights: np.ndarray  # normalised: sum(weights) == 1

    def average(self, values) -> float:
        return float(np.dot(self.weights, values))


def breakpoints(mu: float, kappa: float, kinks: Sequence[float] = ()) -> np.ndarray:
    """Panel edges on [0, pi]: kink preimages plus geometric grading near a sharp peak at 0."""
    pts = {0.0, math.pi}
    for value in kinks:
        th = symbol_preimage(mu, kappa, value)
        if th is not None:
            pts.add(th)
    s = math.sqrt(mu * kappa)
    if _flat_value(mu, kappa) is None and abs(1.0 - s) < 0.5:
        floor = max(abs(1.0 - s) / 8.0, 1e-4)
        h = math.pi / 2.0
        while h > floor:
            pts.add(h)
            h /= 2.0
    return np.array(sorted(pts))


def quadrature_grid(mu: float, kappa: float, kinks: Sequence[float] = (), quad: QuadratureSpec | None = None, level: int = 0) -> QuadratureGrid:
    quad = quad or QuadratureSpec()
    edges = breakpoints(mu, kappa, kinks)
    lengths = np.diff(edges)
    panels = max(quad.points // quad.panel_nodes, len(lengths))
    # share panels by length, every segment gets at least one
    counts = np.maximum(1, np.round(panels * lengths / math.pi).astype(int)) * (2**level)
    x, w = np.polynomial.legendre.leggauss(quad.panel_nodes)
    thetas, weights = [], []
    for a, b, k in zip(edges[:-1], edges[1:], counts):
        sub = np.linspace(a, b, k + 1)
        half = 0.5 * np.diff(sub)
        mid = 0.5 * (sub[:-1] + sub[1:])
        thetas.append((mid[:, None] + half[:, None] * x[None, :]).ravel())
        weights.append((half[:, None] * w[None, :]).ravel())
    theta = np.concatenate(thetas)
    weight = np.concatenate(weights) / math.pi
    return QuadratureGrid(theta, weight)


def szego_average(
    F: Callable[[np.ndarray], np.ndarray],
    mu: float,
    kappa: float,
    quad: QuadratureSpec | None = None,
    kinks: Sequence[float] = (),
) -> SzegoResult:
    """``(1/2pi) * integral of F(eta(z)) dz`` over [0, 2 pi].

    ``F`` must accept arrays.  ``kinks`` are eta values where ``F`` is not
    smooth; panels are split at their preimages.
    """
    quad = quad or QuadratureSpec()
    flat = _flat_value(mu, kappa)
    if flat is not None:
        return SzegoResult(float(np.asarray(F(np.array([float(flat)])))[0]), 0.0, True)
    prev = None
    error = math.inf
    for level in range(quad.max_refinements + 1):
        grid = quadrature_grid(mu, kappa, kinks, quad, level)
        value = grid.average(F(symbol_from_angle(mu, kappa, grid.theta)))
        if prev is not None:
            error = abs(value - prev)
            if error < quad.tol:
                return SzegoResult(value, error, True)
        prev = value
    return SzegoResult(prev, error, False)


# ---------------------------------------------------------------------------
# above threshold: rank-one part plus bounded Toeplitz-like remainder


@dataclass(frozen=True)
class ThresholdSplit:
    """``M = c psi psi^T + deltaM`` with ``psi`` a unit vector and ``deltaM`` bounded in n."""

    c: float
    psi: np.ndarray
    deltaM: np.ndarray

    @property
    def projector(self) -> np.ndarray:
        return np.outer(self.psi, self.psi)

    def reconstruct(self) -> np.ndarray:
        return self.c * self.projector + self.deltaM

    def commutator_ratio(self) -> float:
        """``||[P, deltaM]||_F / ||deltaM||_F``."""
        P = self.projector
        com = P @ self.deltaM - self.deltaM @ P
        return float(np.linalg.norm(com) / np.linalg.norm(self.deltaM))


def threshold_split(params: ChannelParams) -> ThresholdSplit:
    mu, kappa, n = params.mu, params.kappa, params.n
    t = params.product
    if t <= 1.0 or classify_regime(params).threshold is not Threshold.ABOVE:
        raise DomainError("the rank-one split exists only above threshold (mu*kappa > 1)")
    j = np.arange(1, n + 1)
    grow = ratio_powers(params, j)
    decay = np.power(1.0 / params.ratio, j.astype(float))
    alpha = (kappa - 1.0) / math.sqrt(kappa * (t - 1.0))
    beta = (1.0 - mu) * math.sqrt(kappa / (t - 1.0))
    c = (
        mu * (kappa - 1.0) ** 2 * math.expm1(n * math.log(t)) / (t - 1.0) ** 2
        - 2.0 * (1.0 - mu) * (kappa - 1.0) * n / (t - 1.0)
        - (1.0 - mu) ** 2 * kappa * math.expm1(-n * math.log(t)) / (t - 1.0) ** 2
    )
    psi = (alpha * grow - beta * decay) / math.sqrt(c)
    lag = np.abs(j[:, None] - j[None, :])
    tail = (1.0 - mu) * (kappa - 1.0) / (t - 1.0) * np.power(1.0 / params.ratio, lag.astype(float))
    corner = beta**2 * np.outer(decay, decay)
    deltaM = np.eye(n) + tail - corner
    return ThresholdSplit(c, psi, deltaM)


def limiting_remainder_entry(mu: float, kappa: float, lag: int) -> float:
    """Off-diagonal entry of the limiting remainder Toeplitz matrix at distance ``lag``."""
    t = mu * kappa
    if t <= 1.0:
        raise DomainError("defined only above threshold")
    return (1.0 - mu) * (kappa - 1.0) / (t - 1.0) * t ** (-0.5 * abs(lag))


# ---------------------------------------------------------------------------
# finite-n spectra against the symbol


@dataclass(frozen=True)
class FitRow:
    n: int
    ks_distance: float
    trimmed_count: int

    def as_dict(self) -> dict:
        return {"n": self.n, "ks_distance": self.ks_distance, "trimmed_count": self.trimmed_count}


def ks_distance(sample, mu: float, kappa: float) -> float:
    """Kolmogorov-Smirnov distance between a sample and the symbol distribution."""
    y = np.sort(np.asarray(sample, dtype=float))
    m = y.size
    if m == 0:
        raise DomainError("empty sample")
    F = symbol_cdf(mu, kappa, y)
    F_left = symbol_cdf(mu, kappa, y, left=True)
    # empirical CDF at and just below each sample point (ties collapse)
    at = np.searchsorted(y, y, side="right") / m
    below = np.searchsorted(y, y, side="left") / m
    return float(max(np.max(np.abs(at - F)), np.max(np.abs(F_left - below))))


def finite_spectrum_fit(params: ChannelParams, n_list: Sequence[int], trim: int | None = None) -> list[FitRow]:
    """KS distance between the finite part of each spectrum and the symbol distribution.

    The largest ``trim`` eigenvalues are dropped: one above threshold, one by
    default at threshold, none below.
    """
    regime = classify_regime(params)
    if trim is None:
        trim = 0 if regime.threshold is Threshold.BELOW else 1
    rows = []
    for n in n_list:
        if n <= trim:
            raise DomainError(f"n={n} leaves no eigenvalues after trimming {trim}")
        eta = gram_spectrum(params.with_n(n))
        finite = eta[: n - trim] if trim else eta
        rows.append(FitRow(n, ks_distance(finite, params.mu, params.kappa), trim))
    return rows


def write_spectrum_csv(path, eta) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "eta"])
        for j, value in enumerate(np.asarray(eta, dtype=float), start=1):
            writer.writerow([j, format(float(value), ".17g")])


def fit_report_json(rows: Sequence[FitRow]) -> str:
    return json.dumps([r.as_dict() for r in rows])

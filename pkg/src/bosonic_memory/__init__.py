"""Capacities and normal-mode structure of a bosonic Gaussian memory channel."""

from .errors import BracketError, DomainError, EigensolverError, NumericalError
from .model import (
    ChannelKind,
    ChannelParams,
    Regime,
    Threshold,
    build_coupling_matrices,
    build_gram_matrix,
    classify_regime,
    elementary_step,
    max_exact_n,
)
from .spectra import (
    QuadratureSpec,
    gram_spectrum,
    szego_average,
    symbol_eval,
    threshold_split,
    unravel,
)
from .capacity import (
    block_bounds,
    classical_capacity,
    classical_capacity_lower_amplifier,
    quantum_capacity,
    quantum_capacity_bounds,
)
from .forgetful import GaussianMemoryScenario, forgetfulness_decay, propagate_memory_moments

__version__ = "0.1.0"

__all__ = [
    "BracketError",
    "ChannelKind",
    "ChannelParams",
    "DomainError",
    "EigensolverError",
    "GaussianMemoryScenario",
    "NumericalError",
    "QuadratureSpec",
    "Regime",
    "Threshold",
    "block_bounds",
    "build_coupling_matrices",
    "build_gram_matrix",
    "classical_capacity",
    "classical_capacity_lower_amplifier",
    "classify_regime",
    "elementary_step",
    "forgetfulness_decay",
    "gram_spectrum",
    "max_exact_n",
    "propagate_memory_moments",
    "quantum_capacity",
    "quantum_capacity_bounds",
    "szego_average",
    "symbol_eval",
    "threshold_split",
    "unravel",
]

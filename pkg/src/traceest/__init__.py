"""Matrix-free stochastic trace estimation and query lower-bound experiments."""

from .estimators import (
    EstimateResult,
    LinearEstimator,
    configured,
    estimate_configured,
    estimate_gaussian,
    estimate_orthogonal,
    estimate_rademacher,
    estimate_unit_vector,
    gaussian,
    orthogonal,
    rademacher,
    rotate_estimator,
    symmetrize_estimator,
    unit_vector,
)
from .oracle import (
    DenseSymmetric,
    Diagonal,
    ImplicitMatrix,
    PlantedRank,
    Rotated,
    diagonal_sum_of_squares,
    frobenius_norm,
    quadratic_query,
    similarity_transform,
    true_trace,
)
from .sampler import RandomSource

__version__ = "0.1.0"

"""Linear nonadaptive trace estimators.

An estimator draws k query vectors and weights, asks the oracle for
``x_i^T A x_i`` and returns ``sum_i w_i f_A(x_i)``.  Supported kinds:

==============  =====================================  ============
kind            queries                                weight
==============  =====================================  ============
rademacher      i.i.d. sign vectors                    1/k
gaussian        i.i.d. N(0, I_n)                       1/k
unit            i.i.d. uniform unit vectors            n/k
orthogonal      k rows of a Haar orthogonal matrix     n/k
configured      finite mixture of angle configurations per config
==============  =====================================  ============

Any estimator can be wrapped by a fixed rotation (queries ``Q x_i``) or
symmetrized (a fresh Haar ``Q`` per estimate).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .oracle import ORTHO_TOL, ImplicitMatrix, orthogonality_error
from .sampler import (
    RandomSource,
    gaussian_vector,
    gram_schmidt_rows,
    haar_orthogonal_matrix,
    orthogonal_frames,
    rademacher_vector,
    uniform_unit_vector,
)

KINDS = ("rademacher", "gaussian", "unit", "orthogonal", "configured")

#: eigenvalue slack when factoring a Gram matrix of cosines
GRAM_PSD_TOL = 1e-10

#: rough cap on floats held per batch when simulating many trials
BATCH_FLOATS = 2**22


class InfeasibleConfiguration(ValueError):
    """Pairwise angles that no set of unit vectors can realize."""


def angle_matrix(k: int, angles) -> np.ndarray:
    """Symmetric k x k angle matrix from a scalar, a k(k-1)/2 list (i<j, row-major) or a matrix."""
    a = np.asarray(angles, dtype=float)
    if a.ndim == 0:
        out = np.full((k, k), float(a))
    elif a.ndim == 1:
        if a.size != k * (k - 1) // 2:
            raise ValueError(f"expected {k * (k - 1) // 2} pairwise angles for k={k}, got {a.size}")
        out = np.zeros((k, k))
        iu = np.triu_indices(k, 1)
        out[iu] = a
        out.T[iu] = a
    else:
        out = np.array(a)
        if out.shape != (k, k) or not np.allclose(out, out.T):
            raise ValueError("angle matrix must be symmetric k x k")
    np.fill_diagonal(out, 0.0)
    if np.any(out < 0) or np.any(out > np.pi + 1e-12):
        raise ValueError("angles must lie in [0, pi]")
    return out


def gram_factor(angles: np.ndarray) -> np.ndarray:
    """Factor ``L`` (k x r) with ``L L^T = cos(angles)``; raises if not PSD."""
    gram = np.cos(angles)
    np.fill_diagonal(gram, 1.0)
    evals, evecs = np.linalg.eigh(gram)
    if evals[0] < -GRAM_PSD_TOL:
        raise InfeasibleConfiguration(f"Gram matrix of cosines is not PSD (min eigenvalue {evals[0]:.3g})")
    keep = evals > GRAM_PSD_TOL
    return evecs[:, keep] * np.sqrt(evals[keep])


@dataclass(frozen=True, eq=False)
class Configuration:
    """One mixture component: pairwise angles (k x k) and query weights."""

    probability: float
    angles: np.ndarray
    weights: np.ndarray
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        k = w.size
        ang = angle_matrix(k, self.angles)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "angles", ang)
        object.__setattr__(self, "factor", gram_factor(ang))

    @property
    def k(self) -> int:
        return self.weights.size

    @property
    def rank(self) -> int:
        return self.factor.shape[1]


@dataclass(frozen=True, eq=False)
class LinearEstimator:
    kind: str
    k: int
    configurations: tuple[Configuration, ...] = ()
    rotation: np.ndarray | None = None
    symmetrized: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}; expected one of {KINDS}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if self.kind == "configured":
            if not self.configurations:
                raise ValueError("configured estimator needs at least one configuration")
            total = sum(c.probability for c in self.configurations)
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"configuration probabilities sum to {total}, not 1")
            if any(c.probability < 0 for c in self.configurations):
                raise ValueError("configuration probabilities must be nonnegative")
            if any(c.k != self.k for c in self.configurations):
                raise ValueError("every configuration must have k weights")
        if self.rotation is not None:
            q = np.asarray(self.rotation, dtype=float)
            if q.ndim != 2 or q.shape[0] != q.shape[1] or orthogonality_error(q) > ORTHO_TOL:
                raise ValueError("rotation must be a square orthogonal matrix")
            object.__setattr__(self, "rotation", q)

    @property
    def label(self) -> str:
        name = self.kind
        if self.rotation is not None:
            name = f"rotated({name})"
        if self.symmetrized:
            name = f"sym({name})"
        return f"{name}[k={self.k}]"

    def expected_weight_sum(self, n: int) -> float:
        """E[sum_i w_i]; unbiasedness of unit-query estimators requires n."""
        if self.kind in ("rademacher", "gaussian"):
            return 1.0
        if self.kind in ("unit", "orthogonal"):
            return float(n)
        return float(sum(c.probability * c.weights.sum() for c in self.configurations))

    def check_unbiased(self, n: int) -> None:
        if self.kind == "configured":
            s = self.expected_weight_sum(n)
            if abs(s - n) > 1e-12 * max(1.0, n):
                raise ValueError(f"configured estimator is biased: E[sum w] = {s}, need n = {n}")
        if self.kind == "orthogonal" and self.k > n:
            raise ValueError(f"orthogonal estimator needs k <= n (k={self.k}, n={n})")
        if self.kind == "configured":
            r = max(c.rank for c in self.configurations)
            if r > n:
                raise ValueError(f"configuration needs {r} orthogonal directions but n={n}")

    # -- query generation -------------------------------------------------

    def sample_queries(self, n: int, rng: RandomSource, size: int) -> tuple[np.ndarray, np.ndarray]:
        """``size`` independent draws: queries ``(size, k, n)``, weights ``(size, k)``."""
        if self.symmetrized:
            q = haar_orthogonal_matrix(n, rng, size=size)
            x, w = replace(self, symmetrized=False).sample_queries(n, rng, size)
            return np.einsum("bij,bkj->bki", q, x), w
        x, w = self._base_queries(n, rng, size)
        if self.rotation is not None:
            if self.rotation.shape[0] != n:
                raise ValueError(f"rotation is {self.rotation.shape[0]}-dimensional, matrix has n={n}")
            x = x @ self.rotation.T
        return x, w

    def _base_queries(self, n, rng, size):
        k = self.k
        if self.kind == "rademacher":
            return rademacher_vector(n, rng, size=(size, k)), np.full((size, k), 1.0 / k)
        if self.kind == "gaussian":
            return gaussian_vector(n, rng, size=(size, k)), np.full((size, k), 1.0 / k)
        if self.kind == "unit":
            return uniform_unit_vector(n, rng, size=(size, k)), np.full((size, k), n / k)
        if self.kind == "orthogonal":
            if k > n:
                raise ValueError(f"orthogonal estimator needs k <= n (k={k}, n={n})")
            return orthogonal_frames(n, k, rng, size=size), np.full((size, k), n / k)
        return self._configured_queries(n, rng, size)

    def _configured_queries(self, n, rng, size):
        configs = self.configurations
        probs = np.array([c.probability for c in configs])
        pick = rng.gen.choice(len(configs), size=size, p=probs / probs.sum())
        x = np.empty((size, self.k, n))
        w = np.empty((size, self.k))
        for idx, c in enumerate(configs):
            sel = np.flatnonzero(pick == idx)
            if sel.size == 0:
                continue
            if c.rank > n:
                raise InfeasibleConfiguration(f"configuration needs {c.rank} dimensions, n={n}")
            frame = gram_schmidt_rows(rng.gen.standard_normal((sel.size, c.rank, n)), rng)
            x[sel] = np.einsum("kr,brn->bkn", c.factor, frame)
            w[sel] = c.weights
        return x, w

    def floats_per_trial(self, n: int) -> int:
        base = self.k * n + (n * n if self.symmetrized else 0)
        return max(1, base)

    # -- estimation --------------------------------------------------------

    def estimate_many(self, A: ImplicitMatrix, rng: RandomSource, size: int) -> np.ndarray:
        """``size`` independent estimates from a single stream."""
        self.check_unbiased(A.n)
        x, w = self.sample_queries(A.n, rng, size)
        return np.sum(w * A.quadratic(x), axis=-1)

    def estimate(self, A: ImplicitMatrix, rng: RandomSource) -> EstimateResult:
        value = float(self.estimate_many(A, rng, 1)[0])
        return EstimateResult(value, self.k, rng.provenance)


@dataclass(frozen=True)
class EstimateResult:
    value: float
    queries_used: int
    seed_provenance: tuple[int, int]


def rademacher(k: int) -> LinearEstimator:
    return LinearEstimator("rademacher", k)


def gaussian(k: int) -> LinearEstimator:
    return LinearEstimator("gaussian", k)


def unit_vector(k: int) -> LinearEstimator:
    return LinearEstimator("unit", k)


def orthogonal(k: int) -> LinearEstimator:
    return LinearEstimator("orthogonal", k)


def configured(mixture: Sequence[tuple[float, object, Sequence[float]]]) -> LinearEstimator:
    """Build from ``[(probability, angles, weights), ...]``."""
    configs = tuple(Configuration(p, a, w) for p, a, w in mixture)
    if not configs:
        raise ValueError("empty mixture")
    return LinearEstimator("configured", configs[0].k, configs)


def estimate_rademacher(A: ImplicitMatrix, k: int, rng: RandomSource) -> EstimateResult:
    return rademacher(k).estimate(A, rng)


def estimate_gaussian(A: ImplicitMatrix, k: int, rng: RandomSource) -> EstimateResult:
    return gaussian(k).estimate(A, rng)


def estimate_unit_vector(A: ImplicitMatrix, k: int, rng: RandomSource) -> EstimateResult:
    return unit_vector(k).estimate(A, rng)


def estimate_orthogonal(A: ImplicitMatrix, k: int, rng: RandomSource) -> EstimateResult:
    if k > A.n:
        raise ValueError(f"k <= n required for the orthogonal estimator (k={k}, n={A.n})")
    return orthogonal(k).estimate(A, rng)


def estimate_configured(A: ImplicitMatrix, est: LinearEstimator, rng: RandomSource) -> EstimateResult:
    if est.kind != "configured":
        raise ValueError("estimate_configured needs a configured estimator")
    return est.estimate(A, rng)


def rotate_estimator(est: LinearEstimator, Q) -> LinearEstimator:
    """Estimator whose queries are ``Q x_i``; weights unchanged.

    Rotating an already rotated estimator composes the rotations.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or orthogonality_error(Q) > ORTHO_TOL:
        raise ValueError("Q must be a square orthogonal matrix")
    if est.symmetrized:
        # Haar measure absorbs any fixed rotation
        return est
    combined = Q if est.rotation is None else Q @ est.rotation
    return replace(est, rotation=combined)


def symmetrize_estimator(est: LinearEstimator) -> LinearEstimator:
    """Draw a Haar ``Q`` per estimate and answer with the rotated estimator."""
    return replace(est, symmetrized=True)


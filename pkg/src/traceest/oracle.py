"""Implicit symmetric matrices behind a quadratic-form oracle ``x -> x^T A x``.

Four structured representations cover everything the experiments need and
give exact ground truth (trace, Frobenius norm, diagonal) cheaply:

* :class:`Diagonal` -- ``diag(values)``
* :class:`PlantedRank` -- ``sum_r c_r d_r d_r^T`` with orthonormal ``d_r``
* :class:`DenseSymmetric` -- explicit entries
* :class:`Rotated` -- ``Q^T B Q`` for an inner matrix ``B`` and orthogonal ``Q``

All quadratic forms accept batched input of shape ``(..., n)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: tolerance for orthonormality of planted directions and rotations
ORTHO_TOL = 1e-10

#: largest n for which :meth:`ImplicitMatrix.dense` materializes without ``force``
MAX_DENSE_N = 4096


class DimensionError(ValueError):
    """Query vector length does not match the matrix dimension."""


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def orthogonality_error(q: np.ndarray) -> float:
    """max |Q^T Q - I| entrywise."""
    q = np.asarray(q, dtype=float)
    return float(np.max(np.abs(q.T @ q - np.eye(q.shape[1])))) if q.size else 0.0


class ImplicitMatrix:
    """Base class; subclasses are immutable once built."""

    n: int

    def quadratic(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def trace(self) -> float:
        raise NotImplementedError

    def frobenius_norm(self) -> float:
        raise NotImplementedError

    def diagonal(self) -> np.ndarray:
        raise NotImplementedError

    def _dense(self) -> np.ndarray:
        raise NotImplementedError

    def dense(self, force: bool = False, max_n: int = MAX_DENSE_N) -> np.ndarray:
        """Materialize the n x n matrix (guarded against accidental blowup)."""
        if self.n > max_n and not force:
            raise MemoryError(f"refusing to materialize n={self.n} > {max_n}; pass force=True")
        return self._dense()

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.n:
            raise DimensionError(f"query has length {x.shape[-1] if x.ndim else 0}, matrix has n={self.n}")
        return x


@dataclass(frozen=True, eq=False)
class Diagonal(ImplicitMatrix):
    values: np.ndarray

    def __post_init__(self):
        v = _readonly(self.values)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("diagonal values must be a non-empty vector")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    def quadratic(self, x):
        x = self._check(x)
        return (x * x) @ self.values

    def trace(self):
        return float(np.sum(self.values))

    def frobenius_norm(self):
        return float(np.linalg.norm(self.values))

    def diagonal(self):
        return self.values.copy()

    def _dense(self):
        return np.diag(self.values)


@dataclass(frozen=True, eq=False)
class PlantedRank(ImplicitMatrix):
    """``sum_r coefficients[r] * d_r d_r^T`` where ``d_r`` are rows of ``directions``."""

    coefficients: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        c = _readonly(np.atleast_1d(self.coefficients))
        d = _readonly(np.atleast_2d(self.directions))
        if c.ndim != 1 or d.ndim != 2 or d.shape[0] != c.size:
            raise ValueError("need one direction row per coefficient")
        gram = d @ d.T
        if np.max(np.abs(gram - np.eye(c.size))) > ORTHO_TOL:
            raise ValueError("planted directions must be orthonormal to 1e-10")
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "directions", d)

    @property
    def n(self) -> int:
        return self.directions.shape[1]

    @property
    def rank(self) -> int:
        return self.coefficients.size

    def quadratic(self, x):
        x = self._check(x)
        proj = x @ self.directions.T
        return (proj * proj) @ self.coefficients

    def trace(self):
        return float(np.sum(self.coefficients))

    def frobenius_norm(self):
        return float(np.linalg.norm(self.coefficients))

    def diagonal(self):
        return (self.directions**2).T @ self.coefficients

    def _dense(self):
        return (self.directions.T * self.coefficients) @ self.directions


@dataclass(frozen=True, eq=False)
class DenseSymmetric(ImplicitMatrix):
    entries: np.ndarray

    def __post_init__(self):
        m = _readonly(self.entries)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.size == 0:
            raise ValueError("dense matrix must be square and non-empty")
        scale = max(1.0, float(np.max(np.abs(m))))
        if np.max(np.abs(m - m.T)) > ORTHO_TOL * scale:
            raise ValueError("dense matrix is not symmetric")
        object.__setattr__(self, "entries", m)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def quadratic(self, x):
        x = self._check(x)
        return np.sum((x @ self.entries) * x, axis=-1)

    def trace(self):
        return float(np.trace(self.entries))

    def frobenius_norm(self):
        return float(np.linalg.norm(self.entries))

    def diagonal(self):
        return np.diag(self.entries).copy()

    def _dense(self):
        return np.array(self.entries)


@dataclass(frozen=True, eq=False)
class Rotated(ImplicitMatrix):
    """``Q^T inner Q``; a query x is answered as ``inner.quadratic(Q x)``."""

    inner: ImplicitMatrix
    rotation: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        q = _readonly(self.rotation)
        if q.shape != (self.inner.n, self.inner.n):
            raise ValueError(f"rotation must be {self.inner.n}x{self.inner.n}")
        if orthogonality_error(q) > ORTHO_TOL:
            raise ValueError("rotation is not orthogonal to 1e-10")
        object.__setattr__(self, "rotation", q)

    @property
    def n(self) -> int:
        return self.inner.n

    def quadratic(self, x):
        x = self._check(x)
        return self.inner.quadratic(x @ self.rotation.T)

    def trace(self):
        return self.inner.trace()

    def frobenius_norm(self):
        return self.inner.frobenius_norm()

    def diagonal(self):
        # (Q^T B Q)_ii = q_i^T B q_i with q_i the i-th column of Q
        return np.asarray(self.inner.quadratic(self.rotation.T), dtype=float)

    def _dense(self):
        return self.rotation.T @ self.inner._dense() @ self.rotation


def identity(n: int) -> Diagonal:
    return Diagonal(np.ones(n))


def quadratic_query(A: ImplicitMatrix, x) -> float | np.ndarray:
    """Oracle answer ``x^T A x`` (vectorized over leading axes of ``x``)."""
    out = A.quadratic(x)
    return float(out) if np.ndim(out) == 0 else out


def bilinear(A: ImplicitMatrix, x, y):
    """``x^T A y`` by polarization of two quadratic queries."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return 0.25 * (A.quadratic(x + y) - A.quadratic(x - y))


def true_trace(A: ImplicitMatrix) -> float:
    return A.trace()


def frobenius_norm(A: ImplicitMatrix) -> float:
    return A.frobenius_norm()


def diagonal_sum_of_squares(A: ImplicitMatrix) -> float:
    d = A.diagonal()
    return float(d @ d)


def similarity_transform(A: ImplicitMatrix, Q) -> Rotated:
    """Representation of ``Q^T A Q``."""
    return Rotated(A, Q)

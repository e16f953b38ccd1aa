"""Seeded random objects: sign vectors, Gaussians, sphere points, Haar frames.

Every sampler takes a :class:`RandomSource` and an optional ``size`` so that
Monte Carlo code can draw whole batches at once.  Batched outputs put the
batch axes first, e.g. ``orthogonal_frames(n, k, rng, size=B)`` has shape
``(B, k, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MAX_SEED = 2**64

#: pivot norm below which a Gram-Schmidt row is treated as degenerate and redrawn
DEGENERATE_PIVOT = 1e-12


class RandomSource:
    """Deterministic random stream keyed by ``(seed, stream_id)``.

    Backed by the counter-based Philox generator.  Child streams
    (:meth:`child`) are independent and are what parallel trial chunks use,
    so results never depend on how chunks are scheduled.
    """

    def __init__(self, seed: int = 0, stream_id: int = 0, _path: tuple[int, ...] = ()):
        for name, value in (("seed", seed), ("stream_id", stream_id)):
            if not 0 <= int(value) < _MAX_SEED:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._path = tuple(int(p) for p in _path)
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self._path))
        self.gen = np.random.Generator(np.random.Philox(seq))

    def child(self, index: int) -> RandomSource:
        """Independent sub-stream; depends only on (seed, stream_id, path, index)."""
        return RandomSource(self.seed, self.stream_id, (*self._path, index))

    @property
    def provenance(self) -> tuple[int, int]:
        return (self.seed, self.stream_id)

    def __repr__(self) -> str:
        path = f", path={self._path}" if self._path else ""
        return f"RandomSource(seed={self.seed}, stream_id={self.stream_id}{path})"


def _check_dim(n: int, name: str = "n", minimum: int = 1) -> int:
    if int(n) != n or n < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {n}")
    return int(n)


def _shape(size, *tail: int) -> tuple[int, ...]:
    if size is None:
        return tuple(tail)
    if np.isscalar(size):
        return (int(size), *tail)
    return (*tuple(size), *tail)


def rademacher_vector(n: int, rng: RandomSource, size=None) -> np.ndarray:
    """i.i.d. uniform signs in {-1, +1}."""
    n = _check_dim(n)
    bits = rng.gen.integers(0, 2, size=_shape(size, n), dtype=np.int8)
    return 2.0 * bits - 1.0


def gaussian_vector(n: int, rng: RandomSource, variance: float = 1.0, size=None) -> np.ndarray:
    """i.i.d. N(0, variance) coordinates."""
    n = _check_dim(n)
    if not variance > 0:
        raise ValueError(f"variance must be positive, got {variance}")
    g = rng.gen.standard_normal(_shape(size, n))
    if variance != 1.0:
        g *= np.sqrt(variance)
    return g


def uniform_unit_vector(n: int, rng: RandomSource, size=None) -> np.ndarray:
    """Uniform point on the unit sphere S^{n-1} (normalized Gaussian)."""
    n = _check_dim(n)
    shape = _shape(size, n)
    flat = rng.gen.standard_normal(shape).reshape(-1, n)
    norms = np.linalg.norm(flat, axis=1)
    bad = norms < DEGENERATE_PIVOT
    while np.any(bad):
        flat[bad] = rng.gen.standard_normal((int(bad.sum()), n))
        norms[bad] = np.linalg.norm(flat[bad], axis=1)
        bad = norms < DEGENERATE_PIVOT
    return (flat / norms[:, None]).reshape(shape)


def gram_schmidt_rows(rows: np.ndarray, rng: RandomSource | None = None) -> np.ndarray:
    """Orthonormalize the rows of ``rows`` (shape ``(..., k, n)``), in order.

    Classical Gram-Schmidt with one full re-orthogonalization pass per row.
    Applied to i.i.d. Gaussian rows this is the QR factorization with a
    positive triangular diagonal, so the output is exactly Haar distributed.
    A row whose residual norm drops below ``DEGENERATE_PIVOT`` is replaced by
    a fresh Gaussian row drawn from ``rng``.
    """
    rows = np.asarray(rows, dtype=float)
    k, n = rows.shape[-2:]
    if k > n:
        raise ValueError(f"cannot orthonormalize {k} rows in dimension {n}")
    q = rows.reshape(-1, k, n).copy()
    for i in range(k):
        v = q[:, i, :]
        while True:
            if i:
                prev = q[:, :i, :]
                for _ in range(2):
                    coef = np.einsum("bjn,bn->bj", prev, v)
                    v = v - np.einsum("bj,bjn->bn", coef, prev)
            norm = np.linalg.norm(v, axis=1)
            bad = norm < DEGENERATE_PIVOT
            if not np.any(bad):
                break
            if rng is None:
                raise np.linalg.LinAlgError("rows are numerically linearly dependent")
            v = v.copy()
            v[bad] = rng.gen.standard_normal((int(bad.sum()), n))
        q[:, i, :] = v / norm[:, None]
    return q.reshape(rows.shape)


@dataclass(frozen=True)
class QueryTuple:
    """k query vectors (rows) plus, optionally, their prescribed pairwise angles."""

    vectors: np.ndarray
    pairwise_angles: np.ndarray | None = field(default=None)

    @property
    def k(self) -> int:
        return self.vectors.shape[0]

    @property
    def n(self) -> int:
        return self.vectors.shape[1]

    def gram(self) -> np.ndarray:
        return self.vectors @ self.vectors.T


def orthogonal_frames(n: int, k: int, rng: RandomSource, size=None) -> np.ndarray:
    """Batched first-k-rows of Haar orthogonal matrices, shape ``(*size, k, n)``."""
    n = _check_dim(n)
    k = _check_dim(k, "k")
    if k > n:
        raise ValueError(f"k <= n required for orthogonal queries (k={k}, n={n})")
    g = rng.gen.standard_normal(_shape(size, k, n))
    return gram_schmidt_rows(g, rng)


def orthogonal_tuple(n: int, k: int, rng: RandomSource) -> QueryTuple:
    """k random orthogonal unit vectors: the first k rows of a Haar matrix."""
    vectors = orthogonal_frames(n, k, rng)
    angles = np.full(k * (k - 1) // 2, np.pi / 2)
    return QueryTuple(vectors, angles)


def haar_orthogonal_matrix(n: int, rng: RandomSource, size=None) -> np.ndarray:
    """Haar-distributed orthogonal matrix (or a batch of them)."""
    return orthogonal_frames(n, n, rng, size)


def angled_pair(n: int, theta: float, rng: RandomSource) -> tuple[np.ndarray, np.ndarray]:
    """Two random unit vectors at angle ``theta``: (y1, y1 cos t + y2 sin t)."""
    n = _check_dim(n, minimum=2)
    y = orthogonal_frames(n, 2, rng)
    return y[0], np.cos(theta) * y[0] + np.sin(theta) * y[1]


def projected_sphere_coordinates(n: int, k: int, rng: RandomSource, size=None) -> np.ndarray:
    """First k coordinates of a uniform unit vector in R^n, without drawing all n.

    Uses ``g[:k] / sqrt(|g[:k]|^2 + chi2_{n-k})``, which has exactly the law
    of ``u[:k]`` for ``u`` uniform on S^{n-1}.
    """
    n = _check_dim(n)
    if not 0 <= k <= n:
        raise ValueError(f"0 <= k <= n required (k={k}, n={n})")
    head = rng.gen.standard_normal(_shape(size, k))
    tail = _chisquare(n - k, rng, _shape(size))
    return head / np.sqrt(np.sum(head**2, axis=-1) + tail)[..., None]


def projected_orthonormal_pair(n: int, k: int, rng: RandomSource, size=None) -> tuple[np.ndarray, np.ndarray]:
    """First k coordinates of a Haar-random orthonormal pair (u, v) in R^n.

    Gram-Schmidt only needs the 2x2 Gram matrix of the unseen n-k
    coordinates, which is Wishart(n-k, I_2); it is drawn via the Bartlett
    decomposition, so the result is exact and costs O(k).
    """
    n = _check_dim(n, minimum=2)
    if not 0 <= k <= n:
        raise ValueError(f"0 <= k <= n required (k={k}, n={n})")
    shape = _shape(size)
    g = rng.gen.standard_normal((*shape, k))
    h = rng.gen.standard_normal((*shape, k))
    m = n - k
    # Bartlett factor of the tail Gram matrix [[gg, gh], [gh, hh]]
    l11 = np.sqrt(_chisquare(m, rng, shape))
    l21 = rng.gen.standard_normal(shape) if m >= 1 else np.zeros(shape)
    l22 = np.sqrt(_chisquare(m - 1, rng, shape))
    gg = np.sum(g * g, axis=-1) + l11**2
    gh = np.sum(g * h, axis=-1) + l11 * l21
    hh = np.sum(h * h, axis=-1) + l21**2 + l22**2
    gnorm = np.sqrt(gg)
    u = g / gnorm[..., None]
    proj = gh / gg
    resid = h - proj[..., None] * g
    resid_norm = np.sqrt(np.maximum(hh - gh**2 / gg, 0.0))
    v = resid / resid_norm[..., None]
    return u, v


def _chisquare(df: int, rng: RandomSource, shape: tuple[int, ...]) -> np.ndarray:
    if df <= 0:
        return np.zeros(shape)
    return rng.gen.chisquare(df, size=shape)

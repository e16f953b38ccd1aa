import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from traceest.sampler import (
    RandomSource,
    angled_pair,
    gaussian_vector,
    gram_schmidt_rows,
    haar_orthogonal_matrix,
    orthogonal_frames,
    orthogonal_tuple,
    projected_orthonormal_pair,
    projected_sphere_coordinates,
    rademacher_vector,
    uniform_unit_vector,
)


def test_same_seed_same_stream():
    a = orthogonal_frames(6, 3, RandomSource(5, 2), size=4)
    b = orthogonal_frames(6, 3, RandomSource(5, 2), size=4)
    assert a.tobytes() == b.tobytes()


def test_children_are_reproducible_and_distinct():
    rng = RandomSource(5)
    assert rng.child(3).gen.random() == RandomSource(5).child(3).gen.random()
    assert rng.child(3).gen.random() != rng.child(4).gen.random()


def test_distinct_streams_uncorrelated():
    m = 10**5
    x = RandomSource(1, 0).gen.random(m)
    y = RandomSource(1, 1).gen.random(m)
    assert abs(np.corrcoef(x, y)[0, 1]) <= 4 / math.sqrt(m)


@pytest.mark.parametrize("seed", [-1, 2**64])
def test_seed_range(seed):
    with pytest.raises(ValueError):
        RandomSource(seed)


def test_provenance():
    assert RandomSource(9, 4).provenance == (9, 4)


def test_rademacher_support_and_moments():
    assert np.all(np.abs(rademacher_vector(4, RandomSource(0))) == 1)
    x = rademacher_vector(2, RandomSource(1), size=10**6)
    assert abs(x[:, 0].mean()) <= 4e-3
    assert abs(np.mean(x[:, 0] * x[:, 1])) <= 4e-3


def test_rademacher_rejects_empty():
    with pytest.raises(ValueError):
        rademacher_vector(0, RandomSource(0))


def test_gaussian_moments():
    g = gaussian_vector(1, RandomSource(2), size=10**6)[:, 0]
    assert abs(g.var() - 1) <= 0.01
    assert abs(np.mean(g**4) / np.mean(g**2) ** 2 - 3) <= 0.05
    h = gaussian_vector(2, RandomSource(3), variance=1 / 100, size=10**6)
    assert abs(h[:, 0].var() - 0.01) <= 1e-3


def test_gaussian_rejects_nonpositive_variance():
    with pytest.raises(ValueError):
        gaussian_vector(3, RandomSource(0), variance=0.0)


def test_unit_vector_moments():
    u = uniform_unit_vector(10, RandomSource(4), size=10**6)
    assert np.max(np.abs(np.linalg.norm(u, axis=1) - 1)) <= 1e-12
    assert abs(np.mean(u[:, 0] ** 2) - 0.1) <= 1e-3
    assert abs(np.mean(u[:, 0] * u[:, 1])) <= 4e-4


def test_unit_vector_single_draw_shape():
    u = uniform_unit_vector(5, RandomSource(0))
    assert u.shape == (5,)
    assert math.isclose(np.linalg.norm(u), 1.0, abs_tol=1e-12)


def test_orthogonal_tuple_square_is_orthonormal():
    t = orthogonal_tuple(2, 2, RandomSource(0))
    np.testing.assert_allclose(t.gram(), np.eye(2), atol=1e-10)
    np.testing.assert_allclose(np.cos(t.pairwise_angles), [0.0], atol=1e-12)


def test_orthogonal_tuple_second_moment():
    y = orthogonal_frames(50, 5, RandomSource(5), size=10**5)[:, 0, :]
    second = y.T @ y / y.shape[0]
    assert np.max(np.abs(second - np.eye(50) / 50)) <= 2e-3


def test_circle_angle_is_uniform():
    y = orthogonal_frames(2, 1, RandomSource(6), size=10**5)[:, 0, :]
    phi = np.arctan2(y[:, 1], y[:, 0])
    assert stats.kstest(phi, stats.uniform(-np.pi, 2 * np.pi).cdf).pvalue > 0.01


def test_orthogonal_tuple_rejects_k_above_n():
    with pytest.raises(ValueError):
        orthogonal_tuple(3, 4, RandomSource(0))


def test_haar_n1_signs():
    q = haar_orthogonal_matrix(1, RandomSource(7), size=10**4)[:, 0, 0]
    assert set(np.unique(q)) <= {-1.0, 1.0}
    assert abs(np.mean(q > 0) - 0.5) <= 0.01


def test_haar_det_and_orthogonality():
    q = haar_orthogonal_matrix(3, RandomSource(8), size=100)
    np.testing.assert_allclose(np.abs(np.linalg.det(q)), 1.0, atol=1e-9)
    err = np.abs(np.einsum("bji,bjk->bik", q, q) - np.eye(3))
    assert err.max() <= 1e-10


def test_haar_column_matches_sphere():
    q = haar_orthogonal_matrix(8, RandomSource(9), size=10**5)
    u = uniform_unit_vector(8, RandomSource(10), size=10**5)
    assert stats.ks_2samp(q[:, 0, 0], u[:, 0]).pvalue > 0.01


def test_haar_determinant_signs_balanced():
    q = haar_orthogonal_matrix(4, RandomSource(11), size=20_000)
    frac = np.mean(np.linalg.det(q) < 0)
    assert abs(frac - 0.5) <= 4 * math.sqrt(0.25 / 20_000)


@pytest.mark.parametrize("theta, expected", [(np.pi / 2, 0.0), (0.0, 1.0), (np.pi / 3, 0.5)])
def test_angled_pair(theta, expected):
    a, b = angled_pair(7, theta, RandomSource(1))
    assert math.isclose(a @ b, expected, abs_tol=1e-10)
    assert math.isclose(np.linalg.norm(b), 1.0, abs_tol=1e-12)


def test_angled_pair_rejects_n1():
    with pytest.raises(ValueError):
        angled_pair(1, 0.3, RandomSource(0))


def test_gram_schmidt_conditioning_large():
    y = orthogonal_frames(4096, 64, RandomSource(12))
    off = y @ y.T - np.eye(64)
    assert np.max(np.abs(off)) <= 1e-10


def test_rotation_invariance_of_sphere():
    Q = haar_orthogonal_matrix(6, RandomSource(13))
    u = uniform_unit_vector(6, RandomSource(14), size=10**5)
    v = uniform_unit_vector(6, RandomSource(15), size=10**5)
    assert stats.ks_2samp((u @ Q.T)[:, 0], v[:, 0]).pvalue > 0.01


@pytest.mark.parametrize("row", [0, 2])
def test_frame_rows_are_uniform(row):
    n = 9
    y = orthogonal_frames(n, 3, RandomSource(16 + row), size=10**5)[:, row, 0]
    law = stats.beta(0.5, (n - 1) / 2)
    assert stats.kstest(y**2, law.cdf).pvalue > 0.01


def test_degenerate_rows_are_redrawn():
    rows = np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    q = gram_schmidt_rows(rows, RandomSource(17))
    np.testing.assert_allclose(q @ q.T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(q[0], rows[0])
    with pytest.raises(np.linalg.LinAlgError):
        gram_schmidt_rows(rows)


def test_projected_sphere_law():
    n, k = 200, 5
    fast = projected_sphere_coordinates(n, k, RandomSource(18), size=10**5)
    law = stats.beta(k / 2, (n - k) / 2)
    assert stats.kstest(np.sum(fast**2, axis=1), law.cdf).pvalue > 0.01
    full = uniform_unit_vector(n, RandomSource(19), size=10**5)[:, :k]
    assert stats.ks_2samp(fast[:, 0], full[:, 0]).pvalue > 0.01


def test_projected_pair_matches_full_frames():
    n, k, m = 40, 6, 50_000
    u, v = projected_orthonormal_pair(n, k, RandomSource(20), size=m)
    frame = orthogonal_frames(n, 2, RandomSource(21), size=m)
    fu, fv = frame[:, 0, :k], frame[:, 1, :k]
    for a, b in ((u, fu), (v, fv)):
        assert stats.ks_2samp(np.sum(a**2, axis=1), np.sum(b**2, axis=1)).pvalue > 0.01
    assert stats.ks_2samp(np.sum(u * v, axis=1), np.sum(fu * fv, axis=1)).pvalue > 0.01


def test_projected_pair_full_dimension_is_orthonormal():
    u, v = projected_orthonormal_pair(5, 5, RandomSource(22), size=10)
    np.testing.assert_allclose(np.sum(u * v, axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 40), data=st.data(), seed=st.integers(0, 2**32))
def test_frames_orthonormal_property(n, data, seed):
    k = data.draw(st.integers(1, n))
    y = orthogonal_frames(n, k, RandomSource(seed), size=3)
    gram = np.einsum("bin,bjn->bij", y, y)
    assert np.max(np.abs(gram - np.eye(k))) <= 1e-10

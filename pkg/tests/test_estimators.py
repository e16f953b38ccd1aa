import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from traceest.analysis import run_trials, sample_estimates
from traceest.estimators import (
    Configuration,
    InfeasibleConfiguration,
    LinearEstimator,
    angle_matrix,
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
from traceest.oracle import DenseSymmetric, Diagonal, Rotated, identity
from traceest.sampler import RandomSource, haar_orthogonal_matrix
from traceest.specs import parse_matrix, standard_family

SWAP = DenseSymmetric(np.array([[0.0, 1.0], [1.0, 0.0]]) / math.sqrt(2))


def circle_variance():
    """Var of 2 cos^2(phi) for phi uniform, by quadrature."""
    f = lambda phi: (2 * math.cos(phi) ** 2 - 1) ** 2 / (2 * math.pi)
    return integrate.quad(f, 0, 2 * math.pi)[0]


def test_result_metadata():
    res = estimate_rademacher(identity(3), 4, RandomSource(11, 2))
    assert res.queries_used == 4
    assert res.seed_provenance == (11, 2)


def test_rademacher_exact_on_diagonal():
    A = Diagonal([3.0, -1.0, 0.5])
    vals = rademacher(3).estimate_many(A, RandomSource(0), 1000)
    assert np.all(vals == A.trace())


def test_rademacher_swap_enumeration():
    # exhaustive: x in {+-1}^2 gives x^T A x = +-sqrt(2) equally often
    outcomes = [SWAP.quadratic(np.array(s, dtype=float)) for s in itertools.product((-1, 1), repeat=2)]
    np.testing.assert_allclose(sorted(outcomes), [-math.sqrt(2)] * 2 + [math.sqrt(2)] * 2)
    vals = rademacher(1).estimate_many(SWAP, RandomSource(1), 10**4)
    np.testing.assert_allclose(np.abs(vals), math.sqrt(2))
    assert abs(np.mean(vals > 0) - 0.5) <= 0.01
    rep = run_trials(rademacher(1), SWAP, 10**6, RandomSource(2))
    assert abs(rep.empirical_variance - 2) <= 0.05


def test_gaussian_examples():
    rep = run_trials(gaussian(1), Diagonal([1.0]), 10**6, RandomSource(3))
    assert abs(rep.empirical_mean - 1) <= 0.01
    assert abs(rep.empirical_variance - 2) <= 0.05
    assert np.all(gaussian(2).estimate_many(Diagonal(np.zeros(4)), RandomSource(4), 100) == 0)
    rep = run_trials(gaussian(4), Diagonal([1.0, 0.0]), 10**6, RandomSource(5))
    assert abs(rep.empirical_variance - 0.5) <= 0.02


def test_single_call_wrappers():
    A = Diagonal([1.0, 2.0, 3.0])
    rng = RandomSource(6)
    assert estimate_gaussian(A, 2, rng).queries_used == 2
    assert math.isclose(estimate_unit_vector(identity(5), 3, rng).value, 5.0)
    assert math.isclose(estimate_orthogonal(A, 3, rng).value, 6.0)
    with pytest.raises(ValueError):
        estimate_orthogonal(A, 4, rng)
    est = configured([(1.0, math.pi / 2, [1.5, 1.5])])
    assert estimate_configured(A, est, rng).queries_used == 2
    with pytest.raises(ValueError):
        estimate_configured(A, gaussian(2), rng)


def test_unit_vector_examples():
    assert np.allclose(unit_vector(3).estimate_many(identity(6), RandomSource(7), 100), 6.0)
    A = Diagonal([1.0, 0.0])
    rep = run_trials(unit_vector(1), A, 10**6, RandomSource(8))
    oracle = circle_variance()
    assert math.isclose(oracle, 0.5, rel_tol=1e-12)
    assert abs(rep.empirical_mean - 1) <= 0.01
    assert abs(rep.empirical_variance - oracle) <= 0.02


def test_orthogonal_examples():
    A = parse_matrix("offdiag:6")
    vals = orthogonal(6).estimate_many(A, RandomSource(9), 500)
    assert np.max(np.abs(vals - A.trace())) <= 1e-9
    rep = run_trials(orthogonal(1), Diagonal([1.0, 0.0]), 10**6, RandomSource(10))
    assert abs(rep.empirical_variance - circle_variance()) <= 0.02
    P1 = parse_matrix("planted-p1:16")
    rep = run_trials(orthogonal(8), P1, 10**6, RandomSource(11))
    assert abs(rep.empirical_mean - 3 / math.sqrt(5)) <= 0.01


def test_orthogonal_rejects_k_above_n():
    with pytest.raises(ValueError):
        orthogonal(5).estimate_many(identity(4), RandomSource(0), 1)


def test_configured_orthogonal_matches_orthogonal():
    A = parse_matrix("planted-p1:8")
    est = configured([(1.0, math.pi / 2, [8 / 3] * 3)])
    a = sample_estimates(est, A, 10**5, RandomSource(12))
    b = sample_estimates(orthogonal(3), A, 10**5, RandomSource(13))
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_coincident_queries_are_worse():
    A = Diagonal([1.0, 0.0, 0.0, 0.0])
    same = run_trials(configured([(1.0, 0.0, [2.0, 2.0])]), A, 10**6, RandomSource(14))
    ortho = run_trials(configured([(1.0, math.pi / 2, [2.0, 2.0])]), A, 10**6, RandomSource(15))
    sigma = math.hypot(same.stderr_variance, ortho.stderr_variance)
    assert same.empirical_variance - ortho.empirical_variance > 5 * sigma


def test_mixture_is_unbiased():
    A = parse_matrix("rotated:diag-spike:4:3")
    est = configured([(0.5, math.pi / 2, [2.0, 2.0]), (0.5, math.pi / 2, [4.0, 0.0])])
    est.check_unbiased(4)
    rep = run_trials(est, A, 2 * 10**5, RandomSource(16))
    assert abs(rep.empirical_mean - A.trace()) <= 3 * rep.stderr_mean


def test_configured_validation():
    with pytest.raises(InfeasibleConfiguration):
        configured([(1.0, [np.pi, np.pi, np.pi], [1.0, 1.0, 1.0])])
    with pytest.raises(ValueError):
        configured([(0.5, np.pi / 2, [2.0, 2.0])])
    with pytest.raises(ValueError):
        configured([(1.0, 4.0, [2.0, 2.0])])
    biased = configured([(1.0, np.pi / 2, [1.0, 1.0])])
    with pytest.raises(ValueError, match="biased"):
        biased.check_unbiased(4)
    with pytest.raises(ValueError):
        LinearEstimator("bogus", 1)


def test_angle_matrix_forms():
    full = angle_matrix(3, [0.1, 0.2, 0.3])
    assert full[0, 1] == 0.1 and full[2, 0] == 0.2 and full[2, 1] == 0.3
    np.testing.assert_array_equal(angle_matrix(3, full), full)
    assert np.all(angle_matrix(2, 1.0)[[0, 1], [1, 0]] == 1.0)


def test_rotation_by_identity_is_a_no_op():
    A = parse_matrix("offdiag:5")
    base = rademacher(2)
    rot = rotate_estimator(base, np.eye(5))
    assert base.estimate(A, RandomSource(17)).value == rot.estimate(A, RandomSource(17)).value


def test_rotated_gaussian_law_unchanged():
    A = parse_matrix("planted-p1:6")
    Q = haar_orthogonal_matrix(6, RandomSource(18))
    a = sample_estimates(gaussian(2), A, 10**5, RandomSource(19))
    b = sample_estimates(rotate_estimator(gaussian(2), Q), A, 10**5, RandomSource(20))
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_rotated_rademacher_sees_conjugated_matrix():
    c = math.cos(math.pi / 4)
    Q = np.array([[c, -c], [c, c]])
    rot = run_trials(rotate_estimator(rademacher(1), Q), SWAP, 10**6, RandomSource(21))
    # queries Q x on A are queries x on Q^T A Q
    conj = run_trials(rademacher(1), Rotated(SWAP, Q), 10**6, RandomSource(22))
    sigma = math.hypot(rot.stderr_variance, conj.stderr_variance)
    assert abs(rot.empirical_variance - conj.empirical_variance) <= 3 * sigma + 1e-12


def test_rotations_compose():
    Q1 = haar_orthogonal_matrix(4, RandomSource(23))
    Q2 = haar_orthogonal_matrix(4, RandomSource(24))
    est = rotate_estimator(rotate_estimator(gaussian(1), Q1), Q2)
    np.testing.assert_allclose(est.rotation, Q2 @ Q1)
    with pytest.raises(ValueError):
        rotate_estimator(gaussian(1), np.ones((4, 4)))


def test_symmetrized_orthogonal_matches_orthogonal():
    A = parse_matrix("offdiag:6")
    a = sample_estimates(symmetrize_estimator(orthogonal(2)), A, 10**5, RandomSource(25))
    b = sample_estimates(orthogonal(2), A, 10**5, RandomSource(26))
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_symmetrized_rademacher_invariance_and_control():
    A = Diagonal([1.0, 0.0])
    B = Rotated(A, haar_orthogonal_matrix(2, RandomSource(27)))
    sym = symmetrize_estimator(rademacher(1))
    a = sample_estimates(sym, A, 10**5, RandomSource(28))
    b = sample_estimates(sym, B, 10**5, RandomSource(29))
    assert stats.ks_2samp(a, b).pvalue > 0.01
    # without symmetrization the two laws differ sharply
    a0 = sample_estimates(rademacher(1), A, 10**4, RandomSource(30))
    b0 = sample_estimates(rademacher(1), B, 10**4, RandomSource(31))
    assert stats.ks_2samp(a0, b0).pvalue < 1e-6


def test_symmetrized_gaussian_not_worse():
    family = standard_family(8)
    worst = 0.0
    for i, A in enumerate(family.values()):
        rep = run_trials(symmetrize_estimator(gaussian(1)), A, 10**5, RandomSource(32).child(i))
        worst = max(worst, rep.empirical_variance - 3 * rep.stderr_variance)
    assert worst <= 2.0


def test_symmetrize_absorbs_rotation():
    sym = symmetrize_estimator(gaussian(1))
    assert rotate_estimator(sym, np.eye(3)) is sym
    assert sym.label == "sym(gaussian)[k=1]"


@pytest.mark.parametrize("make", [rademacher, gaussian, unit_vector, orthogonal])
def test_unbiased_on_family(make):
    for i, (name, A) in enumerate(standard_family(16).items()):
        rep = run_trials(make(4), A, 2 * 10**5, RandomSource(33).child(i), name)
        assert abs(rep.empirical_mean - A.trace()) <= 4 * rep.stderr_mean + 1e-12, name


@pytest.mark.parametrize("make", [rademacher, gaussian, unit_vector, orthogonal])
def test_rotation_preserves_variance(make):
    A = parse_matrix("planted-p1:6")
    Q = haar_orthogonal_matrix(6, RandomSource(34))
    rot = run_trials(rotate_estimator(make(2), Q), A, 2 * 10**5, RandomSource(35))
    conj = run_trials(make(2), Rotated(A, Q), 2 * 10**5, RandomSource(36))
    sigma = math.hypot(rot.stderr_variance, conj.stderr_variance)
    assert abs(rot.empirical_variance - conj.empirical_variance) <= 3 * sigma + 1e-12


@settings(max_examples=30, deadline=None)
@given(n=st.integers(3, 12), k=st.integers(2, 4), seed=st.integers(0, 2**32))
def test_configured_queries_realize_angles(n, k, seed):
    # angles taken from actual unit vectors are always realizable
    rng = RandomSource(seed)
    v = rng.gen.standard_normal((k, min(k, n)))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    angles = np.arccos(np.clip(v @ v.T, -1, 1))
    c = Configuration(1.0, angles, np.full(k, n / k))
    est = LinearEstimator("configured", k, (c,))
    x, w = est.sample_queries(n, rng, 5)
    gram = np.einsum("bin,bjn->bij", x, x)
    np.testing.assert_allclose(gram, np.broadcast_to(np.cos(c.angles), gram.shape), atol=1e-9)
    np.testing.assert_allclose(w.sum(axis=1), n)

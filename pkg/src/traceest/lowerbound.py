"""Distinguishing games behind the query lower bounds.

Game 5 (variance bound): a Haar-random orthonormal pair (u, v) carries
``A1 = (u u^T + 2 v v^T)/sqrt(5)`` or the slightly perturbed ``A2`` of equal
Frobenius norm.  Game 6 ((eps, delta) bound): ``A1 = u u^T`` versus
``A2 = (1 + 3 eps) u u^T``.

With k orthonormal strong queries the responses are the first k
coordinates of the planted vectors (after rotating the queries to e_1..e_k).
For k << n these are close to i.i.d. Gaussians with variance 1/n, and the
Gaussian surrogate gives closed-form optimal tests and success ceilings.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize, stats

from .analysis import crossing_radius_sq, proportion_interval, scale_family_tv
from .estimators import LinearEstimator
from .oracle import ImplicitMatrix, PlantedRank
from .sampler import (
    RandomSource,
    orthogonal_frames,
    projected_orthonormal_pair,
    projected_sphere_coordinates,
    uniform_unit_vector,
)

SQRT5 = math.sqrt(5.0)
EPS_MAX = 1.0 / 3.0


class Hypothesis(enum.IntEnum):
    P1 = 1
    P2 = 2


def _check_epsilon(epsilon: float, allow_zero: bool = False) -> float:
    lo_ok = epsilon >= 0 if allow_zero else epsilon > 0
    if not (lo_ok and epsilon < EPS_MAX):
        raise ValueError(f"epsilon in (0, 1/3) required, got {epsilon}")
    return float(epsilon)


@dataclass(frozen=True)
class GameParams:
    """Perturbation constants of the rank-2 game."""

    epsilon: float

    def __post_init__(self):
        _check_epsilon(self.epsilon, allow_zero=True)

    @property
    def norm_constant(self) -> float:
        return math.sqrt(5.0 * (1.0 + self.epsilon**2))

    @property
    def eps1(self) -> float:
        return (1 + 2 * self.epsilon) / math.sqrt(1 + self.epsilon**2) - 1

    @property
    def eps2(self) -> float:
        return 2 - (2 - self.epsilon) / math.sqrt(1 + self.epsilon**2)

    @property
    def eps3(self) -> float:
        return self.eps1 - self.eps2

    def coefficients(self, which: Hypothesis) -> tuple[float, float]:
        """Planted (alpha, beta) so that ``A = alpha u u^T + beta v v^T``."""
        if Hypothesis(which) is Hypothesis.P1:
            return 1 / SQRT5, 2 / SQRT5
        return (1 + self.eps1) / SQRT5, (2 - self.eps2) / SQRT5

    @property
    def threshold(self) -> float:
        """Decision point between the two traces: (3 + eps3/2)/sqrt(5)."""
        return (3 + 0.5 * self.eps3) / SQRT5

    @property
    def variance_budget(self) -> float:
        """Estimator variance for which the threshold test succeeds w.p. >= 2/3."""
        return self.eps3**2 / 60


@dataclass(frozen=True, eq=False)
class PlantedPair:
    u: np.ndarray
    alpha: float
    v: np.ndarray | None = None
    beta: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("planted coefficients must be nonnegative")
        if abs(np.linalg.norm(self.u) - 1) > 1e-10:
            raise ValueError("u must be a unit vector")
        if self.v is not None:
            if abs(np.linalg.norm(self.v) - 1) > 1e-10 or abs(self.u @ self.v) > 1e-10:
                raise ValueError("(u, v) must be orthonormal")

    @property
    def n(self) -> int:
        return self.u.size

    @property
    def rank(self) -> int:
        return 1 if self.v is None else 2

    def matrix(self) -> PlantedRank:
        if self.v is None:
            return PlantedRank([self.alpha], self.u[None, :])
        return PlantedRank([self.alpha, self.beta], np.stack([self.u, self.v]))


def _unit(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(np.linalg.norm(x, axis=-1) - 1) > 1e-9):
        raise ValueError("strong queries must be unit vectors")
    return x


def sample_game5(epsilon: float, n: int, which: Hypothesis, rng: RandomSource) -> tuple[PlantedRank, PlantedPair]:
    _check_epsilon(epsilon)
    if n < 2:
        raise ValueError("n >= 2 required")
    alpha, beta = GameParams(epsilon).coefficients(which)
    u, v = orthogonal_frames(n, 2, rng)
    pair = PlantedPair(u, alpha, v, beta)
    return pair.matrix(), pair


def sample_game6(epsilon: float, n: int, which: Hypothesis, rng: RandomSource) -> tuple[PlantedRank, PlantedPair]:
    _check_epsilon(epsilon)
    if n < 1:
        raise ValueError("n >= 1 required")
    tau = 1.0 if Hypothesis(which) is Hypothesis.P1 else 1 + 3 * epsilon
    pair = PlantedPair(uniform_unit_vector(n, rng), tau)
    return pair.matrix(), pair


def strong_query(pair: PlantedPair, x) -> tuple:
    """Projections of the scaled planted vectors ``sqrt(alpha) u`` and ``sqrt(beta) v`` on x."""
    x = _unit(x)
    pu = math.sqrt(pair.alpha) * (x @ pair.u)
    pv = 0.0 * pu if pair.v is None else math.sqrt(pair.beta) * (x @ pair.v)
    return pu, pv


def scaled_projection_query(pair: PlantedPair, x):
    """Rank-1 oracle: ``trace(A) * <u, x>``."""
    if pair.rank != 1:
        raise ValueError("scaled projection oracle is defined for rank-1 pairs only")
    x = _unit(x)
    return pair.alpha * (x @ pair.u)


# -- estimator-based distinguisher ------------------------------------------------


@dataclass(frozen=True)
class NoisyTraceOracle:
    """Stand-in estimator: the true trace plus N(0, variance) noise."""

    variance: float
    k: int = 1

    @property
    def label(self) -> str:
        return f"noisy-trace[var={self.variance:g}]"

    def estimate_many(self, A: ImplicitMatrix, rng: RandomSource, size: int) -> np.ndarray:
        return A.trace() + math.sqrt(self.variance) * rng.gen.standard_normal(size)


def variance_distinguisher(h, A: ImplicitMatrix, epsilon: float, rng: RandomSource) -> Hypothesis:
    """Guess the game-5 hypothesis by thresholding one trace estimate."""
    value = float(h.estimate_many(A, rng, 1)[0])
    return Hypothesis.P1 if value <= GameParams(epsilon).threshold else Hypothesis.P2


@dataclass(frozen=True)
class GameResult:
    game: int
    n: int
    k: int
    epsilon: float
    trials: int
    successes: int
    analytic_ceiling: float
    distinguisher: str = "lr"
    seed: int = 0
    delta: float | None = None

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    @property
    def stderr(self) -> float:
        p = self.success_rate
        return math.sqrt(p * (1 - p) / self.trials)

    @property
    def interval(self):
        return proportion_interval(self.successes, self.trials)

    def row(self) -> dict:
        return {
            "game": self.game,
            "n": self.n,
            "k": self.k,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "trials": self.trials,
            "success_rate": self.success_rate,
            "stderr": self.stderr,
            "analytic_ceiling": self.analytic_ceiling,
            "seed": self.seed,
            "distinguisher": self.distinguisher,
        }


GAME_COLUMNS = ("game", "n", "k", "epsilon", "delta", "trials", "success_rate", "stderr", "analytic_ceiling", "seed")


def play_variance_game(h, epsilon: float, n: int, rounds: int, rng: RandomSource) -> GameResult:
    """Fair hypothesis draw, game-5 matrix, one estimate, threshold decision; repeated."""
    _check_epsilon(epsilon)
    wins = 0
    for r in range(rounds):
        sub = rng.child(r)
        truth = Hypothesis.P2 if sub.gen.random() < 0.5 else Hypothesis.P1
        A, _ = sample_game5(epsilon, n, truth, sub)
        wins += variance_distinguisher(h, A, epsilon, sub) == truth
    # Chebyshev floor for an estimator within the variance budget
    return GameResult(5, n, getattr(h, "k", 1), epsilon, rounds, int(wins), 2 / 3,
                      getattr(h, "label", "estimator"), rng.seed)


# -- likelihood-ratio tests on Gaussian surrogates ------------------------------------


def game6_scales(epsilon: float, n: int) -> tuple[float, float]:
    """Surrogate standard deviations of a game-6 response under P1 and P2."""
    return 1 / math.sqrt(n), (1 + 3 * epsilon) / math.sqrt(n)


@dataclass(frozen=True)
class ScaleLRTest:
    """Optimal test of N(0, s0^2)^k vs N(0, s1^2)^k: P2 iff |z|^2 >= crossing radius^2 (s1 > s0)."""

    sigma0: float
    sigma1: float

    def __post_init__(self):
        if self.sigma0 == self.sigma1:
            raise ValueError("equal scales: nothing to distinguish")

    def decide(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        k = z.shape[-1]
        energy = np.sum(z * z, axis=-1)
        if k == 0:
            r2 = 0.0
        else:
            r2 = crossing_radius_sq(self.sigma0, self.sigma1, k)
        wider = energy >= r2
        return wider if self.sigma1 > self.sigma0 else ~wider

    def success(self, k: int) -> float:
        if k == 0:
            return 0.5
        return 0.5 + 0.5 * scale_family_tv(self.sigma0, self.sigma1, k)


def lr_distinguisher(sample, variance_ratio: float, base_variance: float = 1.0) -> Hypothesis:
    """Decide between N(0, v)^k (P1) and N(0, ratio * v)^k (P2) from one sample."""
    if variance_ratio <= 0:
        raise ValueError("variance ratio must be positive")
    s0 = math.sqrt(base_variance)
    test = ScaleLRTest(s0, s0 * math.sqrt(variance_ratio))
    return Hypothesis.P2 if bool(test.decide(np.asarray(sample, dtype=float))) else Hypothesis.P1


def _mean_abs_rule(s0: float, s1: float) -> Callable[[np.ndarray], np.ndarray]:
    cut = 0.5 * (s0 + s1) * math.sqrt(2 / math.pi)

    def decide(z):
        if z.shape[-1] == 0:
            return np.ones(z.shape[:-1], dtype=bool)
        return np.mean(np.abs(z), axis=-1) >= cut

    return decide


def _max_coordinate_rule(s0: float, s1: float) -> Callable[[np.ndarray], np.ndarray]:
    def cdf(t, s, k):
        return (2 * stats.norm.cdf(t / s) - 1) ** k

    def decide(z):
        k = z.shape[-1]
        if k == 0:
            return np.ones(z.shape[:-1], dtype=bool)
        # equal-error cut: P1(M > t) = P2(M <= t)
        t = optimize.brentq(lambda t: (1 - cdf(t, s0, k)) - cdf(t, s1, k), 1e-12 * s0, 50 * s1)
        return np.max(np.abs(z), axis=-1) >= t

    return decide


def _first_half_rule(s0: float, s1: float) -> Callable[[np.ndarray], np.ndarray]:
    test = ScaleLRTest(s0, s1)

    def decide(z):
        return test.decide(z[..., : (z.shape[-1] + 1) // 2])

    return decide


def game6_distinguishers(epsilon: float, n: int) -> dict[str, Callable[[np.ndarray], np.ndarray]]:
    """Decision rules on k game-6 responses; True means 'P2'."""
    s0, s1 = game6_scales(epsilon, n)
    return {
        "lr": ScaleLRTest(s0, s1).decide,
        "mean-abs": _mean_abs_rule(s0, s1),
        "max-coordinate": _max_coordinate_rule(s0, s1),
        "first-half-energy": _first_half_rule(s0, s1),
    }


@dataclass(frozen=True)
class Game5LRTest:
    """LR test on (u-responses, v-responses) under the Gaussian surrogate.

    The log-likelihood ratio is ``w_u |z_u|^2 + w_v |z_v|^2 - c``, a single
    linear cut in the two energies.
    """

    epsilon: float
    n: int

    def variances(self, which: Hypothesis) -> tuple[float, float]:
        a, b = GameParams(self.epsilon).coefficients(which)
        return a / self.n, b / self.n

    def weights(self, k: int) -> tuple[float, float, float]:
        a1, b1 = self.variances(Hypothesis.P1)
        a2, b2 = self.variances(Hypothesis.P2)
        wu = 1 / a1 - 1 / a2
        wv = 1 / b1 - 1 / b2
        c = k * math.log(a2 * b2 / (a1 * b1))
        return wu, wv, c

    def decide(self, zu: np.ndarray, zv: np.ndarray) -> np.ndarray:
        k = zu.shape[-1]
        wu, wv, c = self.weights(k)
        return wu * np.sum(zu * zu, axis=-1) + wv * np.sum(zv * zv, axis=-1) >= c

    def tv(self, k: int) -> float:
        """Surrogate TV = P2(accept P2) - P1(accept P2), by 1-D quadrature."""
        if k == 0:
            return 0.0
        wu, wv, c = self.weights(k)

        def accept(which):
            a, b = (s * self.n for s in self.variances(which))
            # statistic = wu*a*X + wv*b*Y with X, Y ~ chi2_k (scaled by 1/n cancels in c/n)
            cu, cv, cc = wu * a, wv * b, c * self.n
            f = lambda y: stats.chi2.pdf(y, k) * stats.chi2.sf((cc - cv * y) / cu, k)
            hi = stats.chi2.isf(1e-14, k)
            val, _ = integrate.quad(f, 0, hi, limit=200, points=[k])
            return val

        return float(accept(Hypothesis.P2) - accept(Hypothesis.P1))


# -- strong-query games ------------------------------------------------------------


def _responses(game: int, epsilon: float, n: int, k: int, truth: np.ndarray, rng: RandomSource, method: str):
    """Strong-query responses for a batch of rounds (one hypothesis per round)."""
    rounds = truth.size
    if game == 6:
        tau = np.where(truth == Hypothesis.P2, 1 + 3 * epsilon, 1.0)
        if method == "reduced":
            coords = projected_sphere_coordinates(n, k, rng, size=rounds)
        else:
            u = uniform_unit_vector(n, rng, size=rounds)
            x = orthogonal_frames(n, k, rng, size=rounds) if k else np.zeros((rounds, 0, n))
            coords = np.einsum("bkn,bn->bk", x, u)
        return (tau[:, None] * coords,)
    params = GameParams(epsilon)
    ab = np.array([params.coefficients(Hypothesis.P1), params.coefficients(Hypothesis.P2)])
    coef = ab[(truth == Hypothesis.P2).astype(int)]
    if method == "reduced":
        cu, cv = projected_orthonormal_pair(n, k, rng, size=rounds)
    else:
        frame = orthogonal_frames(n, 2, rng, size=rounds)
        x = orthogonal_frames(n, k, rng, size=rounds) if k else np.zeros((rounds, 0, n))
        cu = np.einsum("bkn,bn->bk", x, frame[:, 0])
        cv = np.einsum("bkn,bn->bk", x, frame[:, 1])
    return np.sqrt(coef[:, :1]) * cu, np.sqrt(coef[:, 1:]) * cv


def analytic_ceiling(game: int, epsilon: float, n: int, k: int) -> float:
    """½ + ½ TV of the Gaussian surrogate pair for k strong queries."""
    if k == 0:
        return 0.5
    if game == 6:
        s0, s1 = game6_scales(epsilon, n)
        return 0.5 + 0.5 * scale_family_tv(s0, s1, k)
    return 0.5 + 0.5 * Game5LRTest(epsilon, n).tv(k)


def strong_query_game(
    epsilon: float,
    n: int,
    k: int,
    game: int,
    trials: int,
    rng: RandomSource,
    method: str = "reduced",
    distinguishers: dict | None = None,
    batch: int = 2**15,
) -> dict[str, GameResult]:
    """Play the strong-query game and score each distinguisher on the same rounds.

    ``method="full"`` draws the planted vectors and k orthonormal queries in
    R^n explicitly; ``"reduced"`` samples the first k coordinates of the
    planted vectors directly, which has exactly the same law.
    """
    _check_epsilon(epsilon)
    if game not in (5, 6):
        raise ValueError("game must be 5 or 6")
    if not 0 <= k <= n:
        raise ValueError(f"0 <= k <= n required (k={k}, n={n})")
    if method not in ("reduced", "full"):
        raise ValueError("method must be 'reduced' or 'full'")
    if distinguishers is None:
        if game == 6:
            distinguishers = game6_distinguishers(epsilon, n)
        else:
            test = Game5LRTest(epsilon, n)
            distinguishers = {"lr": test.decide}
    wins = dict.fromkeys(distinguishers, 0)
    if method == "full":
        batch = max(1, min(batch, 2**22 // max(1, (k + 2) * n)))
    done, chunk = 0, 0
    while done < trials:
        size = min(batch, trials - done)
        sub = rng.child(chunk)
        truth = np.where(sub.gen.random(size) < 0.5, Hypothesis.P2, Hypothesis.P1)
        resp = _responses(game, epsilon, n, k, truth, sub, method)
        for name, rule in distinguishers.items():
            says_p2 = np.asarray(rule(*resp), dtype=bool)
            wins[name] += int(np.count_nonzero(says_p2 == (truth == Hypothesis.P2)))
        done += size
        chunk += 1
    ceiling = analytic_ceiling(game, epsilon, n, k)
    return {
        name: GameResult(game, n, k, epsilon, trials, w, ceiling, name, rng.seed)
        for name, w in wins.items()
    }


def estimator_game6(
    est: LinearEstimator,
    epsilon: float,
    n: int,
    trials: int,
    rng: RandomSource,
    batch: int | None = None,
) -> GameResult:
    """Game 6 against a trace estimator using ordinary quadratic queries.

    The estimator output is thresholded at ``1 + epsilon``, the reduction that
    turns an (eps, delta)-estimator into a distinguisher.
    """
    _check_epsilon(epsilon)
    if batch is None:
        batch = max(1, 2**22 // est.floats_per_trial(n))
    wins, done, chunk = 0, 0, 0
    while done < trials:
        size = min(batch, trials - done)
        sub = rng.child(chunk)
        truth = np.where(sub.gen.random(size) < 0.5, Hypothesis.P2, Hypothesis.P1)
        tau = np.where(truth == Hypothesis.P2, 1 + 3 * epsilon, 1.0)
        u = uniform_unit_vector(n, sub, size=size)
        x, w = est.sample_queries(n, sub, size)
        proj = np.einsum("bkn,bn->bk", x, u)
        values = tau * np.sum(w * proj * proj, axis=-1)
        says_p2 = values > 1 + epsilon
        wins += int(np.count_nonzero(says_p2 == (truth == Hypothesis.P2)))
        done += size
        chunk += 1
    ceiling = analytic_ceiling(6, epsilon, n, est.k)
    return GameResult(6, n, est.k, epsilon, trials, wins, ceiling, est.label, rng.seed)


# -- query complexity ---------------------------------------------------------------


@dataclass(frozen=True)
class KStar:
    epsilon: float
    delta: float
    k_star: int
    curve: np.ndarray  # success probability for k = 1..k_star


def success_curve(epsilon: float, ks) -> np.ndarray:
    s0, s1 = game6_scales(epsilon, 1)
    return np.array([0.5 + 0.5 * scale_family_tv(s0, s1, int(k)) for k in ks])


def empirical_query_complexity(epsilon: float, delta: float, game: int = 6, k_max: int = 10**7) -> KStar:
    """Smallest k whose surrogate success ½ + ½ TV reaches ``1 - delta`` (game 6)."""
    if game != 6:
        raise ValueError("query complexity is defined for game 6")
    _check_epsilon(epsilon)
    if not 0 < delta < 0.5:
        raise ValueError("delta in (0, 1/2) required")
    target = 1 - delta
    ok = lambda k: success_curve(epsilon, [k])[0] >= target
    hi = 1
    while not ok(hi):
        hi *= 2
        if hi > k_max:
            raise RuntimeError(f"k_star exceeds {k_max}")
    lo = hi // 2  # ok(lo) is False unless hi == 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return KStar(epsilon, delta, hi, success_curve(epsilon, range(1, hi + 1)))

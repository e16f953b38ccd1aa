"""Monte Carlo evaluation of estimators and the probability toolbox.

Trials are split into fixed-size chunks, each drawn from its own child
stream of the caller's :class:`~traceest.sampler.RandomSource`.  The chunk
layout depends only on the trial count and problem size, never on the
number of workers, so reports are reproducible bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import stats

from .estimators import BATCH_FLOATS, LinearEstimator
from .oracle import Diagonal, ImplicitMatrix, diagonal_sum_of_squares
from .sampler import RandomSource

MAX_CHUNK = 2**16

REPORT_COLUMNS = (
    "estimator_id",
    "matrix_id",
    "n",
    "k",
    "trials",
    "seed",
    "mean",
    "variance",
    "stderr_mean",
    "stderr_var",
    "success_rate",
    "epsilon",
)


@dataclass(frozen=True)
class ExperimentReport:
    estimator_id: str
    matrix_id: str
    n: int
    k: int
    trials: int
    seed: int
    empirical_mean: float
    empirical_variance: float
    stderr_mean: float
    stderr_variance: float
    success_rate: float | None = None
    epsilon: float | None = None
    stream_id: int = 0

    def __post_init__(self):
        if self.trials < 2:
            raise ValueError("a report needs at least 2 trials")
        if self.empirical_variance < 0:
            raise ValueError("negative variance")
        if self.success_rate is not None and not 0 <= self.success_rate <= 1:
            raise ValueError("success_rate outside [0, 1]")

    def row(self) -> dict:
        return {
            "estimator_id": self.estimator_id,
            "matrix_id": self.matrix_id,
            "n": self.n,
            "k": self.k,
            "trials": self.trials,
            "seed": self.seed,
            "mean": self.empirical_mean,
            "variance": self.empirical_variance,
            "stderr_mean": self.stderr_mean,
            "stderr_var": self.stderr_variance,
            "success_rate": self.success_rate,
            "epsilon": self.epsilon,
        }


def write_csv(rows, columns, stream) -> None:
    """Deterministic CSV: fixed column order, ``repr`` floats, blank for None."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(["" if row[c] is None else _fmt(row[c]) for c in columns])


def write_json(rows, columns, stream) -> None:
    json.dump([{c: row[c] for c in columns} for row in rows], stream, indent=2)
    stream.write("\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    write_csv([r.row() for r in reports], REPORT_COLUMNS, buf)
    return buf.getvalue()


# -- sampling ---------------------------------------------------------------


def chunk_sizes(trials: int, floats_per_trial: int) -> list[int]:
    chunk = max(1, min(MAX_CHUNK, BATCH_FLOATS // max(1, floats_per_trial)))
    full, rest = divmod(trials, chunk)
    return [chunk] * full + ([rest] if rest else [])


def _estimate_chunk(args):
    est, A, rng, size = args
    return est.estimate_many(A, rng, size)


def sample_estimates(
    est: LinearEstimator,
    A: ImplicitMatrix,
    trials: int,
    rng: RandomSource,
    workers: int = 1,
) -> np.ndarray:
    """``trials`` independent outputs of ``est`` on ``A``; chunk i uses ``rng.child(i)``."""
    est.check_unbiased(A.n)
    sizes = chunk_sizes(trials, est.floats_per_trial(A.n))
    jobs = [(est, A, rng.child(i), s) for i, s in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_estimate_chunk, jobs))
    else:
        parts = [_estimate_chunk(j) for j in jobs]
    return np.concatenate(parts) if parts else np.empty(0)


def summarize(values: np.ndarray, center: float) -> dict:
    """Mean, variance about ``center`` and their standard errors.

    The variance is ``mean((h - center)^2)``: with the centre known this is
    already unbiased, so no Bessel correction applies.  Its standard error
    comes from the fourth moment of the deviations.
    """
    values = np.asarray(values, dtype=float)
    m = values.size
    dev = values - center
    sq = dev * dev
    var = float(np.mean(sq))
    fourth = float(np.mean(sq * sq))
    return {
        "mean": float(np.mean(values)),
        "variance": var,
        "stderr_mean": float(np.std(values, ddof=1) / math.sqrt(m)),
        "stderr_variance": math.sqrt(max(fourth - var * var, 0.0) / m),
    }


def run_trials(
    est: LinearEstimator,
    A: ImplicitMatrix,
    trials: int,
    rng: RandomSource,
    matrix_id: str = "A",
    workers: int = 1,
    values: np.ndarray | None = None,
) -> ExperimentReport:
    """Per-matrix variance ``E[(h(A) - trace A)^2]`` by simulation."""
    if trials < 2:
        raise ValueError("trials >= 2 required")
    if values is None:
        values = sample_estimates(est, A, trials, rng, workers)
    s = summarize(values, A.trace())
    return ExperimentReport(
        estimator_id=est.label,
        matrix_id=matrix_id,
        n=A.n,
        k=est.k,
        trials=trials,
        seed=rng.seed,
        empirical_mean=s["mean"],
        empirical_variance=s["variance"],
        stderr_mean=s["stderr_mean"],
        stderr_variance=s["stderr_variance"],
        stream_id=rng.stream_id,
    )


def analytic_variance(kind: str, A: ImplicitMatrix, k: int) -> float:
    """Closed-form per-matrix variance of the Gaussian or Rademacher estimator."""
    if k < 1:
        raise ValueError("k >= 1 required")
    frob_sq = A.frobenius_norm() ** 2
    if kind == "gaussian":
        return 2.0 * frob_sq / k
    if kind == "rademacher":
        # a diagonal matrix has no off-diagonal mass; skip the cancelling subtraction
        off = 0.0 if isinstance(A, Diagonal) else max(frob_sq - diagonal_sum_of_squares(A), 0.0)
        return 2.0 * off / k
    raise ValueError(f"no closed form for {kind!r}; use sphere_variance for unit/orthogonal")


def sphere_variance(kind: str, n: int, k: int, trace: float, frob_sq: float) -> float:
    """Per-matrix variance of the unit-vector and orthogonal estimators.

    Both follow from ``E[(u^T A u)^2] = (tr^2 + 2 |A|_F^2) / (n (n + 2))`` for
    u uniform on the sphere.  For orthogonal queries the values over a full
    frame sum to ``tr A``, so k of them behave like a without-replacement
    sample and pick up the finite-population factor ``(n - k) / (n - 1)``.
    """
    single = n * (trace**2 + 2.0 * frob_sq) / (n + 2) - trace**2
    if kind == "unit":
        return single / k
    if kind == "orthogonal":
        if k > n:
            raise ValueError("k <= n required")
        return 0.0 if n == 1 else single * (n - k) / (k * (n - 1))
    raise ValueError(f"unknown kind {kind!r}")


@dataclass(frozen=True)
class WorstCase:
    variance: float
    matrix_id: str
    reports: tuple[ExperimentReport, ...] = field(repr=False)

    @property
    def argmax(self) -> ExperimentReport:
        return next(r for r in self.reports if r.matrix_id == self.matrix_id)


def worst_case_variance(
    est: LinearEstimator,
    family: Mapping[str, ImplicitMatrix],
    trials: int,
    rng: RandomSource,
    workers: int = 1,
) -> WorstCase:
    """Largest per-matrix empirical variance over a unit-Frobenius family.

    A finite family only gives a lower proxy for the supremum over all
    matrices; the argmax matrix id is reported alongside.
    """
    if not family:
        raise ValueError("matrix family is empty")
    reports = []
    for i, (name, A) in enumerate(family.items()):
        if abs(A.frobenius_norm() - 1.0) > 1e-9:
            raise ValueError(f"family member {name!r} has Frobenius norm {A.frobenius_norm()}, not 1")
        reports.append(run_trials(est, A, trials, rng.child(i), name, workers))
    top = max(reports, key=lambda r: r.empirical_variance)
    return WorstCase(top.empirical_variance, top.matrix_id, tuple(reports))


# -- success rates ------------------------------------------------------------


@dataclass(frozen=True)
class SuccessRate:
    successes: int
    trials: int
    low: float
    high: float

    @property
    def rate(self) -> float:
        return self.successes / self.trials

    @property
    def radius(self) -> float:
        return max(self.rate - self.low, self.high - self.rate)

    @property
    def stderr(self) -> float:
        p = self.rate
        return math.sqrt(p * (1 - p) / self.trials)


def proportion_interval(successes: int, trials: int, level: float = 0.95) -> SuccessRate:
    """Normal-approximation interval, switching to Wilson when either count is below 30."""
    if trials < 1:
        raise ValueError("trials >= 1 required")
    z = stats.norm.ppf(0.5 + level / 2)
    p = successes / trials
    if min(successes, trials - successes) < 30:
        denom = 1 + z * z / trials
        centre = (p + z * z / (2 * trials)) / denom
        half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
        low, high = centre - half, centre + half
        # Wilson bounds are exactly 0 / 1 at the extremes
        low = 0.0 if successes == 0 else low
        high = 1.0 if successes == trials else high
    else:
        half = z * math.sqrt(p * (1 - p) / trials)
        low, high = p - half, p + half
    return SuccessRate(successes, trials, max(0.0, low), min(1.0, high))


def eps_delta_success(
    est: LinearEstimator,
    A: ImplicitMatrix,
    epsilon: float,
    trials: int,
    rng: RandomSource,
    workers: int = 1,
    values: np.ndarray | None = None,
) -> SuccessRate:
    """Fraction of trials with ``|h(A) - tr A| <= epsilon * tr A``."""
    tr = A.trace()
    if not tr > 0:
        raise ValueError(f"multiplicative guarantee needs trace(A) > 0, got {tr}")
    if not epsilon > 0:
        raise ValueError("epsilon > 0 required")
    if values is None:
        values = sample_estimates(est, A, trials, rng, workers)
    hits = int(np.count_nonzero(np.abs(values - tr) <= epsilon * tr))
    return proportion_interval(hits, values.size)


# -- Gaussian divergences ------------------------------------------------------


def _positive(name, a) -> np.ndarray:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if np.any(~(a > 0)):
        raise ValueError(f"{name} must have positive diagonal entries")
    return a


def kl_zero_mean_gaussians(sigma0, sigma1) -> float:
    """KL(N(0, diag sigma0) || N(0, diag sigma1)); arguments are variances."""
    s0 = _positive("sigma0", sigma0)
    s1 = _positive("sigma1", sigma1)
    if s0.shape != s1.shape:
        raise ValueError("covariances must have the same dimension")
    ratio = s0 / s1
    return float(0.5 * np.sum(ratio - 1.0 - np.log(ratio)))


def pinsker_tv_upper(kl: float) -> float:
    """Upper bound ``sqrt(kl / 2)`` on total variation."""
    if kl < 0:
        raise ValueError("KL divergence cannot be negative")
    return math.sqrt(kl / 2.0)


def crossing_radius_sq(sigma0: float, sigma1: float, k: int) -> float:
    """Squared radius where the N(0, s0^2)^k and N(0, s1^2)^k densities cross."""
    if sigma0 == sigma1:
        raise ValueError("densities coincide; no crossing radius")
    return k * math.log(sigma1**2 / sigma0**2) / (sigma0**-2 - sigma1**-2)


def scale_family_tv(sigma0: float, sigma1: float, k: int) -> float:
    """Exact TV between N(0, sigma0^2 I_k) and N(0, sigma1^2 I_k).

    The likelihood ratio is monotone in |z|^2, so the optimal region is a
    ball and TV is a difference of two chi-square CDFs at the crossing radius.
    """
    if not (sigma0 > 0 and sigma1 > 0):
        raise ValueError("standard deviations must be positive")
    if k < 1:
        raise ValueError("k >= 1 required")
    if sigma0 == sigma1:
        return 0.0
    r2 = crossing_radius_sq(sigma0, sigma1, k)
    lo, hi = sorted((sigma0, sigma1))
    # mass inside the ball is larger for the narrower distribution
    return float(stats.chi2.cdf(r2 / lo**2, k) - stats.chi2.cdf(r2 / hi**2, k))


@dataclass(frozen=True)
class TailCheck:
    k: int
    t: float
    trials: int
    empirical_upper: float
    empirical_lower: float
    bound: float

    def holds(self, sigmas: float = 3.0) -> bool:
        slack_u = sigmas * math.sqrt(self.bound * (1 - self.bound) / self.trials)
        return self.empirical_upper <= self.bound + slack_u and self.empirical_lower <= self.bound + slack_u


def chi_square_tail_check(k: int, t: float, trials: int, rng: RandomSource) -> TailCheck:
    """Monte Carlo of both chi-square tails against ``exp(-t^2)``.

    Upper: ``P(X > k + 2 sqrt(k) t + 2 t^2)``; lower: ``P(X < k - 2 sqrt(k) t)``.
    """
    if k < 1 or t < 0:
        raise ValueError("k >= 1 and t >= 0 required")
    if trials < 10**4:
        raise ValueError("trials >= 1e4 required")
    x = rng.gen.chisquare(k, size=trials)
    upper = float(np.mean(x > k + 2 * math.sqrt(k) * t + 2 * t * t))
    lower = float(np.mean(x < k - 2 * math.sqrt(k) * t))
    return TailCheck(k, t, trials, upper, lower, math.exp(-t * t))


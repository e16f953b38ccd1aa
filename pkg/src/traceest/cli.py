"""Command-line experiment driver.

Machine-readable reports go to ``--out`` (or stdout); a one-line human
summary per experiment goes to stderr.  Exit codes: 0 success,
2 validation failure, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .analysis import (
    REPORT_COLUMNS,
    ExperimentReport,
    eps_delta_success,
    run_trials,
    sample_estimates,
    write_csv,
    write_json,
)
from .estimators import symmetrize_estimator
from .lowerbound import (
    GAME_COLUMNS,
    GameParams,
    NoisyTraceOracle,
    estimator_game6,
    play_variance_game,
    strong_query_game,
)
from .oracle import orthogonality_error
from .sampler import RandomSource, haar_orthogonal_matrix
from .specs import SpecError, parse_estimator, parse_matrix

COMMANDS = ("estimate", "bench-variance", "bench-epsdelta", "game", "sweep", "haar-check")
DEFAULT_SEED = 20240607
DEFAULT_N = 10_000
REGIME_K = 100

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3

ESTIMATE_COLUMNS = ("estimator_id", "matrix_id", "n", "k", "seed", "value", "true_trace", "queries_used")
SWEEP_COLUMNS = GAME_COLUMNS + ("distinguisher",)
HAAR_COLUMNS = ("n", "trials", "seed", "max_orthogonality_error", "ks_statistic", "ks_pvalue", "negative_det_fraction")


def _int_list(text: str) -> list[int]:
    """``"1-5,10,20"`` -> [1, 2, 3, 4, 5, 10, 20]."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def _float_list(text: str) -> list[float]:
    return [float(p) for p in str(text).split(",") if p.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="traceest", description="Stochastic trace estimation experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file whose keys mirror the long flags")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--trials", type=int, default=10_000)
    common.add_argument("--out", help="report path (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    est = argparse.ArgumentParser(add_help=False)
    est.add_argument("--matrix", default="diag-spike:16")
    est.add_argument("--estimator", default="orthogonal")
    est.add_argument("--k", type=int, default=1)
    est.add_argument("--symmetrize", action="store_true")

    sub.add_parser("estimate", parents=[common, est], help="one trace estimate")
    sub.add_parser("bench-variance", parents=[common, est], help="empirical variance about the true trace")
    p = sub.add_parser("bench-epsdelta", parents=[common, est], help="(eps, delta) success rate")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=None)

    p = sub.add_parser("game", parents=[common], help="one cell of a distinguishing game")
    p.add_argument("--game", type=int, choices=(5, 6), default=6)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--n", type=int, default=DEFAULT_N)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--estimator", default=None,
                   help="play with a trace estimator instead of strong queries (game 6); "
                        "'noisy' plays game 5 against an oracle at the variance budget")
    p.add_argument("--symmetrize", action="store_true")
    p.add_argument("--method", choices=("reduced", "full"), default="reduced")

    p = sub.add_parser("sweep", parents=[common], help="strong-query game over an (epsilon, k) grid")
    p.add_argument("--game", type=int, choices=(5, 6), default=6)
    p.add_argument("--epsilons", default="0.05,0.1,0.2")
    p.add_argument("--ks", default="1-100")
    p.add_argument("--n", type=int, default=DEFAULT_N)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--method", choices=("reduced", "full"), default="reduced")

    p = sub.add_parser("haar-check", parents=[common], help="orthogonality and marginal-law check of the Haar sampler")
    p.add_argument("--n", type=int, default=8)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    doc = json.loads(Path(args.config).read_text())
    if not isinstance(doc, dict):
        raise SpecError("config file must hold a JSON object")
    # config supplies defaults; explicit flags still win
    sub = parser._subparsers._group_actions[0].choices[args.command]
    sub.set_defaults(**{key.replace("-", "_"): value for key, value in doc.items() if key != "command"})
    return parser.parse_args(argv)


def validate(config) -> list[str]:
    """Every constraint the config violates; empty means the run may proceed."""
    c = vars(config) if isinstance(config, argparse.Namespace) else dict(config)
    problems = []
    command = c.get("command")
    if command not in COMMANDS:
        return [f"command: unknown {command!r}; expected one of {COMMANDS}"]
    trials = c.get("trials", 1)
    minimum = 1 if command in ("estimate", "game", "sweep", "haar-check") else 2
    if not isinstance(trials, int) or trials < minimum:
        problems.append(f"trials: must be an integer >= {minimum}")
    if c.get("workers", 1) < 1:
        problems.append("workers: must be >= 1")
    if not 0 <= c.get("seed", 0) < 2**64:
        problems.append("seed: must be a 64-bit unsigned integer")
    eps = c.get("epsilon")
    if command in ("game", "sweep"):
        grid = [eps] if command == "game" else _safe(lambda: _float_list(c.get("epsilons", "")), problems, "epsilons")
        for e in grid or []:
            if not 0 < e < 1 / 3:
                problems.append(f"epsilon: {e} violates epsilon ∈ (0, 1/3)")
        n = c.get("n", DEFAULT_N)
        ks = [c.get("k", 0)] if command == "game" else _safe(lambda: _int_list(c.get("ks", "")), problems, "ks")
        if n < 2:
            problems.append("n: must be >= 2")
        for k in ks or []:
            if not 0 <= k <= n:
                problems.append(f"k: {k} violates 0 ≤ k ≤ n (k ≤ n required)")
        if command == "game" and c.get("estimator") == "noisy" and c.get("game") != 5:
            problems.append("estimator: the noisy variance-budget oracle plays game 5 only")
        if command == "game" and c.get("estimator") not in (None, "noisy"):
            if c.get("game") != 6:
                problems.append("estimator: trace-estimator play is defined for game 6 only")
            problems.extend(_estimator_problems(c, n))
    elif command == "bench-epsdelta":
        if eps is None or not eps > 0:
            problems.append("epsilon: must be > 0")
        delta = c.get("delta")
        if delta is not None and not 0 < delta < 1:
            problems.append("delta: must lie in (0, 1)")
    elif command == "haar-check":
        if c.get("n", 0) < 2:
            problems.append("n: must be >= 2")
    if command in ("estimate", "bench-variance", "bench-epsdelta"):
        try:
            A = parse_matrix(c.get("matrix", ""))
        except (SpecError, ValueError) as exc:
            problems.append(f"matrix: {exc}")
        else:
            problems.extend(_estimator_problems(c, A.n))
            if command == "bench-epsdelta" and not A.trace() > 0:
                problems.append("matrix: (eps, delta) guarantees need trace > 0")
    return problems


def _safe(fn, problems, name):
    try:
        return fn()
    except ValueError as exc:
        problems.append(f"{name}: cannot parse ({exc})")
        return None


def _estimator_problems(c: dict, n: int) -> list[str]:
    k = c.get("k")
    if k is None or k < 1:
        return ["k: must be >= 1"]
    try:
        est = parse_estimator(c.get("estimator", ""), k)
    except (SpecError, ValueError) as exc:
        return [f"estimator: {exc}"]
    if est.kind == "orthogonal" and est.k > n:
        return [f"k: {est.k} > n = {n}; k ≤ n required for orthogonal queries"]
    try:
        est.check_unbiased(n)
    except ValueError as exc:
        return [f"estimator: {exc}"]
    return []


# -- commands -----------------------------------------------------------------


def _estimator(args):
    est = parse_estimator(args.estimator, args.k)
    return symmetrize_estimator(est) if args.symmetrize else est


def _cmd_estimate(args):
    A = parse_matrix(args.matrix)
    est = _estimator(args)
    res = est.estimate(A, RandomSource(args.seed))
    row = {"estimator_id": est.label, "matrix_id": args.matrix, "n": A.n, "k": est.k, "seed": args.seed,
           "value": res.value, "true_trace": A.trace(), "queries_used": res.queries_used}
    summary = f"{est.label} on {args.matrix}: estimate {res.value:.6g} (trace {A.trace():.6g})"
    return [row], ESTIMATE_COLUMNS, summary


def _cmd_bench_variance(args):
    A = parse_matrix(args.matrix)
    est = _estimator(args)
    report = run_trials(est, A, args.trials, RandomSource(args.seed), args.matrix, args.workers)
    summary = (f"{est.label} on {args.matrix}: variance {report.empirical_variance:.6g} "
               f"± {report.stderr_variance:.2g} over {args.trials} trials")
    return [report.row()], REPORT_COLUMNS, summary


def _cmd_bench_epsdelta(args):
    A = parse_matrix(args.matrix)
    est = _estimator(args)
    rng = RandomSource(args.seed)
    values = sample_estimates(est, A, args.trials, rng, args.workers)
    base = run_trials(est, A, args.trials, rng, args.matrix, values=values)
    rate = eps_delta_success(est, A, args.epsilon, args.trials, rng, values=values)
    report = ExperimentReport(**{**base.__dict__, "success_rate": rate.rate, "epsilon": args.epsilon})
    summary = f"{est.label} on {args.matrix}: P(|h - tr| <= {args.epsilon} tr) = {rate.rate:.4f} ± {rate.stderr:.2g}"
    if args.delta is not None:
        verdict = "meets" if rate.rate >= 1 - args.delta else "misses"
        summary += f", {verdict} 1 - delta = {1 - args.delta:g}"
    return [report.row()], REPORT_COLUMNS, summary


def _regime_warning(n, ks):
    if any(k > REGIME_K or k * k > n for k in ks):
        print(f"warning: k up to {max(ks)} with n = {n} leaves the k << n regime; "
              "the Gaussian-surrogate ceiling is only approximate", file=sys.stderr)


def _cmd_game(args):
    rng = RandomSource(args.seed)
    if args.estimator == "noisy":
        h = NoisyTraceOracle(GameParams(args.epsilon).variance_budget)
        results = [play_variance_game(h, args.epsilon, args.n, args.trials, rng)]
    elif args.estimator is not None:
        est = _estimator(args)
        results = [estimator_game6(est, args.epsilon, args.n, args.trials, rng)]
    else:
        _regime_warning(args.n, [args.k])
        results = list(strong_query_game(args.epsilon, args.n, args.k, args.game, args.trials, rng,
                                         method=args.method).values())
    rows = [{**r.row(), "delta": args.delta} for r in results]
    best = max(results, key=lambda r: r.success_rate)
    summary = (f"game {args.game}, eps={args.epsilon}, n={args.n}, k={best.k}: best success "
               f"{best.success_rate:.4f} ({best.distinguisher}), ceiling {best.analytic_ceiling:.4f}")
    return rows, SWEEP_COLUMNS, summary


def sweep_rows(game, epsilons, ks, n, trials, seed, method="reduced", delta=None):
    """Rows in (epsilon, k, distinguisher) order; cell i uses child stream i."""
    rng = RandomSource(seed)
    rows, cell = [], 0
    for eps in epsilons:
        for k in ks:
            results = strong_query_game(eps, n, k, game, trials, rng.child(cell), method=method)
            rows.extend({**r.row(), "seed": seed, "delta": delta} for r in results.values())
            cell += 1
    return rows


def _cmd_sweep(args):
    epsilons, ks = _float_list(args.epsilons), _int_list(args.ks)
    _regime_warning(args.n, ks)
    rows = sweep_rows(args.game, epsilons, ks, args.n, args.trials, args.seed, args.method, args.delta)
    over = sum(r["success_rate"] > r["analytic_ceiling"] + 3 * r["stderr"] for r in rows)
    summary = f"sweep: {len(rows)} rows, {over} above ceiling + 3 stderr"
    return rows, SWEEP_COLUMNS, summary


def _cmd_haar_check(args):
    n, rng = args.n, RandomSource(args.seed)
    q = haar_orthogonal_matrix(n, rng, size=args.trials)
    err = max(orthogonality_error(m) for m in q[: min(args.trials, 1000)])
    # Q_11^2 ~ Beta(1/2, (n-1)/2) under Haar measure
    ks = stats.kstest(q[:, 0, 0] ** 2, stats.beta(0.5, (n - 1) / 2).cdf)
    neg = float(np.mean(np.linalg.det(q) < 0))
    row = {"n": n, "trials": args.trials, "seed": args.seed, "max_orthogonality_error": err,
           "ks_statistic": float(ks.statistic), "ks_pvalue": float(ks.pvalue), "negative_det_fraction": neg}
    summary = f"haar n={n}: max |Q^T Q - I| = {err:.2e}, KS p = {ks.pvalue:.3f}, det<0 fraction {neg:.3f}"
    return [row], HAAR_COLUMNS, summary


HANDLERS = {
    "estimate": _cmd_estimate,
    "bench-variance": _cmd_bench_variance,
    "bench-epsdelta": _cmd_bench_epsdelta,
    "game": _cmd_game,
    "sweep": _cmd_sweep,
    "haar-check": _cmd_haar_check,
}


def run(args: argparse.Namespace) -> int:
    problems = validate(args)
    if problems:
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
        return EXIT_INVALID
    try:
        rows, columns, summary = HANDLERS[args.command](args)
        buf = io.StringIO()
        (write_json if args.format == "json" else write_csv)(rows, columns, buf)
        if args.out:
            Path(args.out).write_text(buf.getvalue())
        else:
            sys.stdout.write(buf.getvalue())
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, RuntimeError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(summary, file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
    except (OSError, ValueError) as exc:
        print(f"invalid: config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return run(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``smoothgrad <command> [options]``."""

import argparse
import sys

import numpy as np

from .errors import ConfigError, SmoothGradError
from .estimators import ESTIMATORS, EstimatorSpec
from .harness import bench, fidelity_mae, stdout_or, write_csv
from .optimize import (Budget, DescentAborted, DescentRecord, default_jobs, descend, sweep,
                       sweep_grid)
from .problems import PROBLEM_IDS, Epidemics, get_problem, make_reference
from .si import STRATEGIES


def _vector(text):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _point(problem, at, seed):
    if at is None:
        return problem.initial(seed)
    if at.size == 1:
        return np.full(problem.n, at[0])
    if at.size != problem.n:
        raise ConfigError(f"--at has {at.size} values but {problem.name} takes {problem.n}")
    return at


def _problem(args):
    return get_problem(args.problem, steps=args.horizon, rates=args.rates,
                       reference=args.reference)


def _spec(args, problem, kind=None, samples=None, sigma=None):
    kind = kind or args.estimator
    return EstimatorSpec(
        kind=kind,
        sigma=problem.sigma0 if sigma is None else sigma,
        samples=samples if samples is not None else args.samples,
        paths=args.paths,
        strategy=args.strategy,
        threshold=args.threshold,
        delta=args.delta,
    )


def _add_problem(p):
    p.add_argument("--problem", required=True,
                   help=f"problem id: {', '.join(PROBLEM_IDS)}")
    p.add_argument("--horizon", type=int, help="traffic: number of simulated steps (default d)")
    p.add_argument("--rates", help="hotel: product table CSV")
    p.add_argument("--reference", help="epidemics: reference trajectory CSV")
    p.add_argument("--seed", type=int, default=0)


def _add_estimator(p, required=True):
    p.add_argument("--estimator", required=required, choices=ESTIMATORS)
    p.add_argument("--sigma", type=float, help="smoothing scale (default: problem's)")
    p.add_argument("--samples", type=int, help="sampling estimators: sample count")
    p.add_argument("--paths", type=int, help="dgsi: maximum tracked paths")
    p.add_argument("--strategy", choices=STRATEGIES, help="dgsi: restriction strategy")
    p.add_argument("--threshold", type=float, help="dgsi: path weight threshold")
    p.add_argument("--delta", type=float, help="dgo: margin window half-width")


def _add_out(p):
    p.add_argument("--out", help="CSV output path (default: stdout)")


def build_parser():
    ap = argparse.ArgumentParser(prog="smoothgrad", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="one expectation/gradient estimate")
    _add_problem(p)
    _add_estimator(p)
    p.add_argument("--at", type=_vector, help="point: one value per input, or one for all")
    _add_out(p)

    p = sub.add_parser("optimize", help="Adam descent; writes one record per step")
    _add_problem(p)
    _add_estimator(p)
    p.add_argument("--lr", type=float, help="learning rate (default: problem's)")
    p.add_argument("--steps", type=int)
    p.add_argument("--seconds", type=float, help="wall-clock budget")
    p.add_argument("--microreps", type=int, default=1)
    p.add_argument("--timing", action="store_true",
                   help="record real wall-clock times (output is then not reproducible)")
    _add_out(p)

    p = sub.add_parser("fidelity", help="per-dimension MAE against a PGO baseline")
    _add_problem(p)
    _add_estimator(p)
    p.add_argument("--baseline-samples", type=int, default=100_000)
    p.add_argument("--baseline-seed", type=int,
                   help="baseline perturbation seed (default: independent of --seed)")
    p.add_argument("--dims", type=int)
    p.add_argument("--grid", type=int, default=10, help="grid points per dimension")
    p.add_argument("--range", type=float, dest="half_width",
                   help="grid half-width around the point (default: problem's)")
    p.add_argument("--at", type=_vector)
    _add_out(p)

    p = sub.add_parser("sweep", help="hyperparameter grid of descents")
    _add_problem(p)
    _add_estimator(p)
    p.add_argument("--sigma0", type=float)
    p.add_argument("--lr0", type=float)
    p.add_argument("--sizes", type=_ints, help="samples (or dgsi paths) levels")
    p.add_argument("--strategies", type=lambda s: s.split(","), help="dgsi strategy levels")
    p.add_argument("--macroreps", type=int, default=5)
    p.add_argument("--steps", type=int)
    p.add_argument("--seconds", type=float)
    p.add_argument("--microreps", type=int, default=1)
    p.add_argument("--jobs", type=int, help="parallel workers (default: $SMOOTHGRAD_JOBS or 1)")
    _add_out(p)

    p = sub.add_parser("bench", help="wall time per estimate and slowdown over crisp")
    _add_problem(p)
    _add_estimator(p)
    p.add_argument("--repeats", type=int, default=3)
    _add_out(p)

    p = sub.add_parser("make-reference", help="write an epidemics reference trajectory")
    p.add_argument("--seed", type=int, help="program seed (default: the problem's)")
    p.add_argument("--out", required=True)
    return ap


def cmd_estimate(args):
    prob = _problem(args)
    spec = _spec(args, prob, sigma=args.sigma)
    x = _point(prob, args.at, args.seed)
    pseed = args.seed if prob.stochastic else prob.eval_seeds[0]
    res = spec.estimate(prob, x, seed=args.seed, program_seed=pseed)
    print(f"expectation {res.expectation!r}")
    print("gradient " + " ".join(repr(float(g)) for g in res.gradient))
    if args.out:
        rows = [("expectation", "", res.expectation)]
        rows += [("gradient", i, g) for i, g in enumerate(res.gradient)]
        if res.stderr is not None:
            rows += [("stderr", i, s) for i, s in enumerate(res.stderr)]
        write_csv(rows, args.out, ("kind", "dim", "value"))


def _budget(args):
    return Budget(steps=args.steps, seconds=args.seconds)


def cmd_optimize(args):
    prob = _problem(args)
    spec = _spec(args, prob, sigma=args.sigma)
    lr = prob.lr0 if args.lr is None else args.lr
    try:
        recs = descend(prob, spec, lr, _budget(args), args.seed,
                       microreps=args.microreps, timing=args.timing)
    except DescentAborted as e:
        write_csv(e.records, stdout_or(args.out), DescentRecord.CSV_FIELDS)
        raise
    write_csv(recs, stdout_or(args.out), DescentRecord.CSV_FIELDS)


def cmd_fidelity(args):
    prob = _problem(args)
    spec = _spec(args, prob, sigma=args.sigma)
    base = EstimatorSpec("pgo", sigma=spec.sigma, samples=args.baseline_samples)
    point = None if args.at is None else _point(prob, args.at, args.seed)
    rep = fidelity_mae(prob, spec, base, dims=args.dims, count=args.grid,
                       half_width=args.half_width, point=point, seed=args.seed,
                       baseline_seed=args.baseline_seed)
    write_csv(rep.rows, stdout_or(args.out))


def cmd_sweep(args):
    prob = _problem(args)
    spec = _spec(args, prob, sigma=args.sigma)
    cells = sweep_grid(spec, prob.sigma0 if args.sigma0 is None else args.sigma0,
                       prob.lr0 if args.lr0 is None else args.lr0,
                       sizes=args.sizes, strategies=args.strategies)
    jobs = default_jobs() if args.jobs is None else args.jobs
    rows, best = sweep(prob, cells, args.macroreps, _budget(args), args.seed,
                       microreps=args.microreps, jobs=jobs)
    write_csv(rows, stdout_or(args.out))
    r = rows[best]
    print(f"best: {r.label} sigma={r.sigma!r} lr={r.lr!r} mean_final={r.mean_final!r}",
          file=sys.stderr)


def cmd_bench(args):
    prob = _problem(args)
    spec = _spec(args, prob, sigma=args.sigma)
    row = bench(prob, spec, repeats=args.repeats, seed=args.seed)
    write_csv([row], stdout_or(args.out))


def cmd_make_reference(args):
    make_reference(Epidemics(), seed=args.seed, path=args.out)


COMMANDS = {
    "estimate": cmd_estimate,
    "optimize": cmd_optimize,
    "fidelity": cmd_fidelity,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
    "make-reference": cmd_make_reference,
}


def main(argv=None):
    """Run one command; returns the exit status (0 ok, 1 runtime error, 2 bad configuration)."""
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (SmoothGradError, OSError, ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

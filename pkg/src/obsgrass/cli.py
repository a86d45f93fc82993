"""Command-line interface: benchmarks, Monte Carlo validation, distances,
and continual-learning runs.

Subcommands
-----------
bench-sylvester   Time the diagonal closed-form Gram route vs the dense solve.
bench-distance    Time the trace-form similarity vs classical angle pipelines.
mc-validate       Correlate the trace-form similarity with weight drift.
distance          Subspace distance between two systems stored as JSON files.
cl-run            Sequential continual-learning experiment from a run config.

Every subcommand accepts ``--seed`` (determinism; timing fields excepted),
``--out`` (directory for artifact files), and ``--format csv|json`` for the
stdout rendering.  ``OBSGRASS_THREADS`` caps Monte Carlo parallelism; it
defaults to 1 and never changes numerical results.

Exit codes: 0 success; 1 input or configuration error; 2 benchmark
assertion failure; 3 numerical-conditioning failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .bench import (
    BENCH_CSV_HEADER,
    cmd_bench_distance,
    cmd_bench_sylvester,
)
from .errors import (
    BenchmarkAssertionError,
    ConfigError,
    DegenerateKernelError,
    DegenerateTraceError,
    DimensionMismatchError,
    DivisionNearOneError,
    IllConditionedGramError,
    InfiniteDistanceError,
    NonFiniteError,
    NoUniqueSolutionError,
    ObsGrassError,
    RankDeficientError,
    ShapeMismatchError,
    UnknownMetricError,
    UnknownSolverError,
)
from .grassmann import METRICS, ssm_distance
from .metrics import METRICS_CSV_HEADER, metrics_csv
from .montecarlo import mc_validate
from .ssm import read_ssm
from .training import default_run_config, load_run_config, run_experiment

MC_CSV_HEADER = "mean_pearson,std_pearson,mean_pvalue,iterations,degenerate"

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_BENCH = 2
EXIT_CONDITIONING = 3

_CONDITIONING_ERRORS = (
    IllConditionedGramError,
    RankDeficientError,
    NoUniqueSolutionError,
    DivisionNearOneError,
    DegenerateTraceError,
    InfiniteDistanceError,
    NonFiniteError,
    DegenerateKernelError,
)
_INPUT_ERRORS = (
    ConfigError,
    DimensionMismatchError,
    ShapeMismatchError,
    UnknownMetricError,
    UnknownSolverError,
)


def _threads() -> int:
    raw = os.environ.get("OBSGRASS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"OBSGRASS_THREADS must be an integer, got {raw!r}") from None


def _emit_records(records, fmt: str, out_dir, filename: str):
    if fmt == "json":
        text = json.dumps([r.to_dict() for r in records], indent=2)
    else:
        text = "\n".join([BENCH_CSV_HEADER] + [r.csv_row() for r in records])
    print(text)
    if out_dir is not None:
        path = Path(out_dir)
        path.mkdir(parents=True, exist_ok=True)
        suffix = "json" if fmt == "json" else "csv"
        (path / f"{filename}.{suffix}").write_text(text + "\n")


def _run_bench_sylvester(args) -> int:
    try:
        n_values = [int(tok) for tok in args.n_values.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"bad --n-values {args.n_values!r}; expected e.g. 2,4,8,16") from None
    records = cmd_bench_sylvester(n_values, iterations=args.iterations, seed=args.seed)
    _emit_records(records, args.format, args.out, "bench_sylvester")
    return EXIT_OK


def _run_bench_distance(args) -> int:
    records = cmd_bench_distance(n=args.n, iterations=args.iterations, seed=args.seed)
    _emit_records(records, args.format, args.out, "bench_distance")
    return EXIT_OK


def _run_mc_validate(args) -> int:
    result = mc_validate(
        iterations=args.iterations,
        n=args.n,
        noise_levels=args.noise_levels,
        seed=args.seed,
        threads=_threads(),
    )
    d = result.to_dict()
    if args.format == "json":
        text = json.dumps(d, indent=2)
    else:
        text = MC_CSV_HEADER + "\n" + ",".join(str(d[k]) for k in MC_CSV_HEADER.split(","))
    print(text)
    if args.out is not None:
        path = Path(args.out)
        path.mkdir(parents=True, exist_ok=True)
        suffix = "json" if args.format == "json" else "csv"
        (path / f"mc_validate.{suffix}").write_text(text + "\n")
    return EXIT_OK


def _run_distance(args) -> int:
    try:
        s1 = read_ssm(args.file1)
        s2 = read_ssm(args.file2)
    except OSError as exc:
        print(f"error: cannot read input file: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        result = ssm_distance(s1, s2, args.metric)
    except (IllConditionedGramError, DegenerateTraceError) as exc:
        print(
            f"error: {exc}\nhint: retry with --metric simplified, which avoids "
            "the ill-conditioned trace form",
            file=sys.stderr,
        )
        return EXIT_CONDITIONING
    print(f"{result.value:.12g}")
    return EXIT_OK


def _run_cl_run(args) -> int:
    config = load_run_config(args.config) if args.config else default_run_config()
    if args.seed is not None:
        config["seed"] = args.seed
    out_dir = args.out if args.out is not None else "obsgrass_out"
    result = run_experiment(config, out_dir=out_dir)
    print(metrics_csv(result["metrics"]).rstrip("\n"))
    print(f"artifacts written to {out_dir}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="obsgrass",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="RNG seed (default 0; for cl-run, overrides the config seed)")
    common.add_argument("--out", type=str, default=None,
                        help="directory to write artifact files into")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="stdout/artifact rendering (default csv)")

    p = sub.add_parser(
        "bench-sylvester", parents=[common],
        help="time gram_diagonal vs the dense Kronecker solve",
        epilog=f"CSV schema: {BENCH_CSV_HEADER}",
    )
    p.add_argument("--n-values", type=str, default="2,4,8,16",
                   help="comma-separated state sizes, each in [2, 64]")
    p.add_argument("--iterations", type=int, default=1000,
                   help="timed calls per solver per n (>= 100)")
    p.set_defaults(func=_run_bench_sylvester)

    p = sub.add_parser(
        "bench-distance", parents=[common],
        help="time the trace-form similarity vs classical angle pipelines",
        epilog=f"CSV schema: {BENCH_CSV_HEADER}",
    )
    p.add_argument("--n", type=int, default=100, help="state size (default 100)")
    p.add_argument("--iterations", type=int, default=100,
                   help="timed calls per metric (default 100)")
    p.set_defaults(func=_run_bench_distance)

    p = sub.add_parser(
        "mc-validate", parents=[common],
        help="correlate the trace-form similarity with weight drift",
        epilog=f"CSV schema: {MC_CSV_HEADER}",
    )
    p.add_argument("--iterations", type=int, default=10000,
                   help="Monte Carlo iterations (default 10000)")
    p.add_argument("--n", type=int, default=16, help="state size (default 16)")
    p.add_argument("--noise-levels", type=int, default=100,
                   help="drift snapshots per iteration (default 100)")
    p.set_defaults(func=_run_mc_validate)

    p = sub.add_parser(
        "distance", parents=[common],
        help="subspace distance between two systems stored as JSON files",
    )
    p.add_argument("file1", type=str)
    p.add_argument("file2", type=str)
    p.add_argument("--metric", choices=METRICS, default="simplified")
    p.set_defaults(func=_run_distance)

    p = sub.add_parser(
        "cl-run", parents=[common],
        help="sequential continual-learning run from a JSON config",
        epilog=(
            "Artifacts: accuracy.csv (task_k,task_j,acc), metrics.csv "
            f"({METRICS_CSV_HEADER}), checkpoint_task<k>.json, and ckd.csv "
            "(state,layer,task,ckd) when the config enables drift analysis."
        ),
    )
    p.add_argument("config", nargs="?", default=None,
                   help="run-config JSON path (default: bundled tuned config)")
    p.set_defaults(func=_run_cl_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None and args.command != "cl-run":
        args.seed = 0
    try:
        return args.func(args)
    except BenchmarkAssertionError as exc:
        print(f"benchmark assertion failed: {exc}", file=sys.stderr)
        return EXIT_BENCH
    except _CONDITIONING_ERRORS as exc:
        print(f"numerical-conditioning failure: {exc}", file=sys.stderr)
        return EXIT_CONDITIONING
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ObsGrassError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

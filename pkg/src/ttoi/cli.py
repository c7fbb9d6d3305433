"""Command-line entry point: ``ttoi <command> ...``.

Exit codes: 0 success, 2 bad arguments, 3 malformed input file, 4 numeric
failure. ``TTOI_SEED`` in the environment overrides ``--seed``.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import io, markov, simlab
from .rankselect import select_ranks
from .rng import generator
from .tensor_core import DenseTensor
from .tt import ttoi

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_NUMERIC = 4


class UsageError(Exception):
    """Arguments that parse but do not fit together."""


def _ints(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if any(v < 1 for v in values):
        raise argparse.ArgumentTypeError(f"values must be positive, got {text!r}")
    return values


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _seed(args) -> int:
    env = os.environ.get("TTOI_SEED")
    if env is None or env.strip() == "":
        return args.seed
    try:
        seed = int(env)
    except ValueError:
        raise UsageError(f"TTOI_SEED must be an integer, got {env!r}") from None
    if seed < 0:
        raise UsageError("TTOI_SEED must be non-negative")
    return seed


def _check_arity(name: str, values, d: int) -> None:
    if len(values) != d - 1:
        raise UsageError(f"{name} needs {d - 1} comma-separated values for an order-{d} tensor, got {len(values)}")


def _open_out(path):
    if path is None or path == "-":
        return _Stdout()
    return open(path, "w", encoding="utf-8", newline="")


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()
        return False


def cmd_decompose(args) -> int:
    y = io.read_tensor(args.input)
    if y.order < 2:
        raise UsageError("decompose needs a tensor of order >= 2")
    _check_arity("--ranks", args.ranks, y.order)
    cores, estimate, diag = ttoi(y, args.ranks, epsilon=args.eps, t_max=args.iters)
    if args.output_cores:
        out = Path(args.output_cores)
        out.mkdir(parents=True, exist_ok=True)
        for k, core in enumerate([cores.core_first, *cores.cores_mid, cores.core_last], start=1):
            io.write_tensor(out / f"core_{k}.tns", DenseTensor.from_array(core))
    if args.output_estimate:
        io.write_tensor(args.output_estimate, estimate)
    if args.diagnostics:
        io.write_csv(sys.stdout, io.TRACE_HEADER, io.trace_rows(diag.objective_trace))
    for flag in diag.flags:
        print(f"warning: {flag}", file=sys.stderr)
    return EXIT_OK


def cmd_select_ranks(args) -> int:
    y = io.read_tensor(args.input)
    if y.order < 2:
        raise UsageError("select-ranks needs a tensor of order >= 2")
    r_max = args.rmax
    if len(r_max) == 1:
        r_max = r_max * (y.order - 1)
    _check_arity("--rmax", r_max, y.order)
    res = select_ranks(y, r_max, strategy=args.strategy, epsilon=args.eps, t_max=args.iters)
    if args.log:
        io.write_csv(
            sys.stderr,
            ("ranks", "score"),
            ((",".join(map(str, r)), s) for r, s in res.search_log),
        )
    print(",".join(str(r) for r in res.ranks))
    return EXIT_OK


def cmd_spiked(args) -> int:
    d = len(args.dims)
    if d < 2:
        raise UsageError("--dims needs at least two modes")
    _check_arity("--ranks", args.ranks, d)
    levels = args.sweep if args.sweep else (args.level,)
    seed = _seed(args)
    configs = [
        simlab.SpikedModelConfig(args.dims, args.ranks, args.noise, lvl, seed, args.reps)
        for lvl in levels
    ]
    if args.select:
        recs = simlab.run_rank_selection_sweep(configs, r_max=args.rmax)
        header, rows = io.selection_rows(recs, timing=not args.no_timing)
    else:
        recs = simlab.run_spiked_sweep(configs, args.methods)
        if args.summary:
            header, rows = io.summary_rows(recs)
        else:
            header, rows = io.record_rows(recs, timing=not args.no_timing)
    with _open_out(args.output) as fh:
        io.write_csv(fh, header, rows)
    return EXIT_OK


def cmd_markov(args) -> int:
    p, d = args.states, args.order + 1
    ranks = args.ranks
    _check_arity("--ranks", ranks, d)
    seed = _seed(args)
    if args.sweep:
        recs = simlab.run_markov_sweep(
            p, d, ranks, args.sweep, args.reps, seed=seed,
            mode="generative" if args.generative_n else "trajectory", t_max=args.iters,
        )
        if args.summary:
            header, rows = io.summary_rows(recs)
        else:
            header, rows = io.record_rows(recs, timing=not args.no_timing)
        with _open_out(args.output) as fh:
            io.write_csv(fh, header, rows)
        return EXIT_OK
    truth = None
    if args.trajectory:
        traj = io.read_trajectory(args.trajectory, p)
        if len(traj) < d - 1:
            raise UsageError(f"trajectory has {len(traj)} states; order {args.order} needs {d - 1}")
        p_emp = markov.empirical_from_trajectory(traj, p, d)
    else:
        model_ranks = args.model_ranks or ranks
        _check_arity("--model-ranks", model_ranks, d)
        model = markov.generate_aggregatable(p, d, model_ranks, generator(seed, 0))
        truth = model.transition
        p_emp = markov.empirical_generative(model, args.generative_n, generator(seed, 1))
    p_hat = markov.estimate_transition(p_emp, ranks, t_max=args.iters)
    if args.output_empirical:
        io.write_tensor(args.output_empirical, p_emp)
    if args.output_estimate:
        io.write_tensor(args.output_estimate, p_hat)
    emp_rows = p_emp.data.reshape(-1, p, order="F")
    hat_rows = p_hat.data.reshape(-1, p, order="F")
    true_rows = None if truth is None else truth.data.reshape(-1, p, order="F")
    prefixes = np.array(np.unravel_index(np.arange(emp_rows.shape[0]), (p,) * (d - 1), order="F")).T + 1
    rows = []
    for row, prefix in enumerate(prefixes):
        label = "-".join(str(int(s)) for s in prefix)
        for nxt in range(p):
            rows.append((
                label,
                nxt + 1,
                emp_rows[row, nxt],
                hat_rows[row, nxt],
                None if true_rows is None else true_rows[row, nxt],
            ))
    with _open_out(args.output) as fh:
        io.write_csv(fh, ("prefix", "next", "empirical", "estimate", "truth"), rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ttoi", description="Tensor-train orthogonal iteration tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="fit TT cores to a tensor file")
    p.add_argument("--input", required=True)
    p.add_argument("--ranks", required=True, type=_ints)
    p.add_argument("--iters", type=int, default=10, help="maximum updates after TT-SVD (default 10)")
    p.add_argument("--eps", type=float, default=None, help="increment tolerance (default 1e-6 ||Y||^2)")
    p.add_argument("--output-cores", help="directory for core_1.tns ... core_d.tns")
    p.add_argument("--output-estimate")
    p.add_argument("--diagnostics", action="store_true", help="print the objective trace as CSV")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("select-ranks", help="choose TT-ranks by the information criterion")
    p.add_argument("--input", required=True)
    p.add_argument("--rmax", required=True, type=_ints, help="one bound or one per rank")
    p.add_argument("--strategy", choices=("auto", "exhaustive", "greedy"), default="auto")
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--log", action="store_true", help="write the search log as CSV to stderr")
    p.set_defaults(func=cmd_select_ranks)

    p = sub.add_parser("spiked", help="Monte-Carlo runs on the spiked TT model")
    p.add_argument("--dims", required=True, type=_ints)
    p.add_argument("--ranks", required=True, type=_ints)
    p.add_argument("--noise", choices=simlab.NOISE_FAMILIES, default="gaussian")
    p.add_argument("--level", type=float, default=1.0, help="sigma, or b for uniform noise")
    p.add_argument("--sweep", type=_floats, help="comma-separated noise levels (overrides --level)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--methods", type=lambda s: tuple(s.split(",")), default=("ttsvd", "ttoi1", "ttoi2"))
    p.add_argument("--select", action="store_true", help="run rank selection instead of fixed-rank methods")
    p.add_argument("--rmax", type=_ints, help="search box for --select (default true ranks + 1)")
    p.add_argument("--summary", action="store_true", help="one row per cell and method")
    p.add_argument("--no-timing", action="store_true", help="leave wall_ms empty")
    p.add_argument("--output", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_spiked)

    p = sub.add_parser("markov", help="estimate a high-order transition tensor")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--trajectory", help="file of 1-based states, one per line")
    src.add_argument("--generative-n", type=int, help="draws per prefix from a random chain")
    p.add_argument("--states", required=True, type=int)
    p.add_argument("--order", required=True, type=int, help="chain order d - 1")
    p.add_argument("--ranks", required=True, type=_ints)
    p.add_argument("--model-ranks", type=_ints, help="ranks of the random chain (default --ranks)")
    p.add_argument("--iters", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sweep", type=_ints, help="lengths (or draws per prefix) for a Monte-Carlo sweep")
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--summary", action="store_true")
    p.add_argument("--no-timing", action="store_true")
    p.add_argument("--output-empirical")
    p.add_argument("--output-estimate")
    p.add_argument("--output", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_markov)
    return parser


def _validate(args) -> None:
    for name in ("iters", "reps"):
        if getattr(args, name, 0) is not None and getattr(args, name, 0) < 0:
            raise UsageError(f"--{name} must be non-negative")
    if getattr(args, "reps", 1) == 0:
        raise UsageError("--reps must be positive")
    if getattr(args, "seed", 0) < 0:
        raise UsageError("--seed must be non-negative")
    if args.command == "markov":
        if args.states < 1 or args.order < 1:
            raise UsageError("--states and --order must be positive")
        if args.generative_n is not None and args.generative_n < 1:
            raise UsageError("--generative-n must be positive")
        if args.trajectory and args.sweep:
            raise UsageError("--sweep simulates its own data; drop --trajectory")
        if not (args.sweep or args.trajectory or args.generative_n):
            raise UsageError("give --trajectory, --generative-n or --sweep")
    if args.command == "spiked" and args.methods:
        bad = [m for m in args.methods if m not in simlab.SPIKED_METHODS]
        if bad:
            raise UsageError(f"unknown methods {bad}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        _validate(args)
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ttoi: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except io.FormatError as exc:
        print(f"ttoi: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"ttoi: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"ttoi: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main_exit() -> None:
    sys.exit(main())

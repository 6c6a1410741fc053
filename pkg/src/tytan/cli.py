"""Command-line entry point: ``tytan <subcommand> ...``.

Exit status is 0 on success, 1 on domain or I/O errors and 2 on usage errors.
Payloads go to stdout (or ``--out``); timing and diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .activations import (ActivationKind, ActivationSpec, PostOp, SweepResult,
                          convergence_threshold, make_grid, sweep_error)
from .engine import EngineRun, predict_cycles, run_engine
from .errors import TytanError
from .nn import Dataset, NetworkModel, bundled_paths
from .search import SearchConfig, run_approximator
from .series import MAX_TERMS, CoefficientTable, Precision, SeriesKind, gen_coefficients

log = logging.getLogger("tytan")


class CliError(TytanError):
    pass


def term_range(text: str) -> list[int]:
    """Parse ``a..b`` (inclusive) or a single integer."""
    try:
        if ".." in text:
            lo, hi = (int(p) for p in text.split("..", 1))
        else:
            lo = hi = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or A..B, got {text!r}") from None
    if not 1 <= lo <= hi <= MAX_TERMS:
        raise argparse.ArgumentTypeError(f"term range must satisfy 1 <= A <= B <= {MAX_TERMS}")
    return list(range(lo, hi + 1))


def activation_list(text: str) -> list[ActivationSpec]:
    names = [n.strip() for n in text.split(",") if n.strip()]
    if names == ["all"]:
        names = [k.value for k in ActivationKind]
    try:
        return [ActivationSpec(ActivationKind(n.lower())) for n in names]
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown activation in {text!r}") from None


def float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def worker_count() -> int:
    raw = os.environ.get("TYTAN_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise CliError(f"TYTAN_THREADS must be an integer, got {raw!r}") from None
    return n if n > 0 else (os.cpu_count() or 1)


def _require_file(path: Optional[Path]) -> None:
    if path is not None and not path.is_file():
        raise CliError(f"no such file: {path}")


# -- subcommands --------------------------------------------------------------


def cmd_gen_coeffs(args) -> str:
    return gen_coefficients(SeriesKind(args.kind), args.terms).to_json() + "\n"


def cmd_sweep(args) -> str:
    precision = Precision(args.precision)
    jobs = [(spec, n) for spec in args.activation for n in args.terms]
    make_grid(args.lo, args.hi, args.step)

    def one(job) -> SweepResult:
        spec, n = job
        return sweep_error(spec, n, args.lo, args.hi, args.step, precision, args.literal_eq6)

    with ThreadPoolExecutor(worker_count()) as pool:
        results = list(pool.map(one, jobs))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SweepResult.CSV_HEADER)
    for r in results:
        writer.writerow(r.csv_row())
    return out.getvalue()


def cmd_threshold(args) -> str:
    precision = Precision(args.precision)
    lines = []
    for spec in args.activation:
        n = convergence_threshold(spec, args.tol, args.n_max, precision, args.literal_eq6)
        lines.append(f"{spec.kind.value},{n if n is not None else 'not_converged'}")
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> str:
    precision = Precision(args.precision)
    if args.coeffs is not None:
        table = CoefficientTable.from_json(args.coeffs.read_text())
    else:
        table = gen_coefficients(SeriesKind.EXP, args.terms)
    if args.values is not None:
        inputs = args.values
    else:
        inputs = [float(v) for v in np.linspace(args.lo, args.hi, args.inputs)]
    if args.activation == "identity":
        spec, op = None, PostOp.IDENTITY
    else:
        spec = ActivationSpec(ActivationKind(args.activation))
        op = spec.post_op
    result = run_engine(EngineRun(inputs, table, op, spec, precision, args.trace, args.literal_eq6))
    summary = {
        "activation": args.activation,
        "n_terms": table.n_terms,
        "precision": precision.value,
        "inputs": inputs,
        "outputs": result.outputs,
        "cycles": result.report.to_dict(),
    }
    if not args.trace:
        return json.dumps(summary, indent=2) + "\n"
    sys.stderr.write(json.dumps(summary["cycles"]) + "\n")
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["step", "state", "accumulator"])
    for entry in result.trace:
        writer.writerow([entry.step, entry.state.value, repr(entry.accumulator)])
    return out.getvalue()


def cmd_predict_cycles(args) -> str:
    report = predict_cycles(args.inputs, args.terms, args.buffers)
    if args.json:
        return json.dumps(report.to_dict()) + "\n"
    return f"{report.total}\n"


def cmd_search(args) -> str:
    model = NetworkModel.load(args.model)
    data = Dataset.load(args.data)
    config = SearchConfig(
        deviation_budget=args.budget,
        lower_limit=args.lower_limit,
        upper_limit_tol=args.upper_tol,
        max_recursion_depth=args.max_depth,
        eval_subset_size=args.subset,
        precision=Precision(args.precision),
        literal=args.literal_eq6,
    )
    plan = run_approximator(model, data, config, workers=worker_count())
    if plan.over_budget:
        log.warning("budget %r not met: deviation %r", plan.budget, plan.deviation_achieved)
    return plan.to_json()


def cmd_report(args) -> str:
    """Regroup a sweep CSV into per-activation (n_terms, max_abs_err) series."""
    rows = list(csv.DictReader(io.StringIO(args.input.read_text())))
    missing = {"activation", "n_terms", "max_abs_err"} - set(rows[0] if rows else ())
    if missing:
        raise CliError(f"{args.input}: not a sweep CSV (missing {sorted(missing)})")
    series: dict[str, list[tuple[int, str]]] = {}
    for row in rows:
        series.setdefault(row["activation"], []).append((int(row["n_terms"]), row["max_abs_err"]))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["activation", "n_terms", "max_abs_err"])
    for name, points in series.items():
        for n, err in sorted(points):
            writer.writerow([name, n, repr(float(err))])
    return out.getvalue()


# -- parser -------------------------------------------------------------------


def _global_options(parser: argparse.ArgumentParser, defaults: bool) -> None:
    # subparsers repeat the global flags with suppressed defaults so that
    # "tytan --precision single sweep" and "tytan sweep --precision single" agree
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    parser.add_argument("--precision", choices=[p.value for p in Precision], default=d("double"))
    parser.add_argument("--out", type=Path, default=d(None), help="write the result here instead of stdout")
    parser.add_argument("--trace", action="store_true", default=d(False), help="emit the engine FSM trace as CSV")
    parser.add_argument("--literal-eq6", action="store_true", default=d(False),
                        help="use the printed Swish/GELU/Softplus forms and unfolded series arguments")
    parser.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tytan", description=__doc__.splitlines()[0])
    _global_options(parser, defaults=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, defaults=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-coeffs", parents=[common], help="write a Taylor coefficient table")
    p.add_argument("--kind", choices=[k.value for k in SeriesKind], default="exp")
    p.add_argument("--terms", type=int, required=True)
    p.set_defaults(func=cmd_gen_coeffs)

    p = sub.add_parser("sweep", parents=[common], help="error sweep against the exact activation")
    p.add_argument("--activation", type=activation_list, required=True, help="name, comma list or 'all'")
    p.add_argument("--terms", type=term_range, required=True, help="N or A..B")
    p.add_argument("--lo", type=float, default=-5.0)
    p.add_argument("--hi", type=float, default=5.0)
    p.add_argument("--step", type=float, default=0.01)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("threshold", parents=[common], help="smallest converged series length")
    p.add_argument("--activation", type=activation_list, required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--n-max", type=int, default=MAX_TERMS)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("simulate", parents=[common], help="run the cycle-level engine")
    p.add_argument("--activation", default="tanh",
                   choices=["identity"] + [k.value for k in ActivationKind])
    p.add_argument("--terms", type=int, default=30)
    p.add_argument("--coeffs", type=Path, help="coefficient table JSON (overrides --terms)")
    p.add_argument("--inputs", type=int, default=30, help="number of evenly spaced inputs")
    p.add_argument("--lo", type=float, default=-5.0)
    p.add_argument("--hi", type=float, default=5.0)
    p.add_argument("--values", type=float_list, help="comma-separated explicit inputs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("predict-cycles", parents=[common], help="closed-form cycle count")
    p.add_argument("--inputs", type=int, required=True)
    p.add_argument("--terms", type=int, required=True)
    p.add_argument("--buffers", action="store_true", help="include input-buffer fill cycles")
    p.add_argument("--json", action="store_true", help="print the full cycle report")
    p.set_defaults(func=cmd_predict_cycles)

    bundled_model, bundled_data = bundled_paths()
    p = sub.add_parser("search", parents=[common], help="per-layer series length search")
    p.add_argument("--model", type=Path, default=bundled_model)
    p.add_argument("--data", type=Path, default=bundled_data)
    p.add_argument("--budget", type=float, default=0.01)
    p.add_argument("--lower-limit", type=int, default=1)
    p.add_argument("--upper-tol", type=float, default=1e-6)
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--subset", type=int, default=None)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("report", parents=[common], help="regroup a sweep CSV into plot series")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    log.propagate = False
    try:
        for attr in ("model", "data", "coeffs", "input"):
            _require_file(getattr(args, attr, None))
        if args.out is not None and not args.out.parent.is_dir():
            raise CliError(f"output directory does not exist: {args.out.parent}")
        start = time.perf_counter()
        payload = args.func(args)
        log.info("%s finished in %.3f s", args.command, time.perf_counter() - start)
        if args.out is not None:
            args.out.write_text(payload)
        else:
            sys.stdout.write(payload)
    except (TytanError, OSError, json.JSONDecodeError) as exc:
        print(f"tytan: error: {exc}", file=sys.stderr)
        return 1
    finally:
        log.removeHandler(handler)
    return 0


if __name__ == "__main__":
    sys.exit(main())

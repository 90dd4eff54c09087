"""Command-line front end: ``urnbandit {simulate,plan,boundaries,validate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import jsonschema

from ..errors import CalibrationError, PlanningError, SpecError, UrnBanditError
from ..sequential import SpendingFunction, compute_boundaries, plan_design
from .emit import emit, fmt, write_rows
from .engine import resolve_threads
from .figures import render_all
from .metrics import run_scenario
from .scenario import load_scenarios, validate_document

log = logging.getLogger("urnbandit")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _fractions(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="urnbandit", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run a scenario file and write CSVs and figures")
    s.add_argument("scenario", type=Path)
    s.add_argument("--seed", type=int)
    s.add_argument("--reps", type=int)
    s.add_argument("--out-dir", type=Path, default=Path("results"))
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--trace", action="store_true", help="per-round CSV for replication 0 of the first cell")
    s.add_argument("--no-figures", action="store_true")

    pl = sub.add_parser("plan", help="print a sequential design as CSV")
    pl.add_argument("--alpha", type=float, default=0.05)
    pl.add_argument("--power", type=float, default=0.9)
    pl.add_argument("--delta", type=float, required=True)
    pl.add_argument("--looks", type=int, default=10)
    pl.add_argument("--spending", default="obf", choices=["pocock", "obf", "power", "hsd"])
    pl.add_argument("--param", type=float)
    pl.add_argument("--fractions", type=_fractions)

    b = sub.add_parser("boundaries", help="boundary table for a spending function")
    b.add_argument("--fractions", type=_fractions, required=True)
    b.add_argument("--alpha", type=float, default=0.05)
    b.add_argument("--spending", default="obf", choices=["pocock", "obf", "power", "hsd"])
    b.add_argument("--param", type=float)

    v = sub.add_parser("validate", help="schema-check a scenario file")
    v.add_argument("scenario", type=Path)
    return p


def _print_csv(header, rows) -> None:
    print(",".join(header))
    for r in rows:
        print(",".join(fmt(r[c]) for c in header))


def cmd_simulate(args) -> int:
    overrides = {"seed": args.seed, "reps": args.reps}
    scenarios = load_scenarios(args.scenario, overrides)
    threads = resolve_threads(args.threads)
    trace_rows: list[dict] = []
    results = []
    for k, sc in enumerate(scenarios):
        log.info("running %s (%d reps)", sc.label, sc.reps)
        cb = trace_rows.append if (args.trace and k == 0) else None
        results.extend(run_scenario(sc, threads, cb))
    written = emit(results, args.out_dir)
    if trace_rows:
        written.append(write_rows(args.out_dir / "trace.csv", list(trace_rows[0]), trace_rows))
    if not args.no_figures:
        written.extend(render_all(args.out_dir))
    for path in written:
        print(path)
    return 0


def cmd_plan(args) -> int:
    d = plan_design(args.alpha, args.power, args.delta, args.looks, args.spending, args.param,
                    args.fractions)
    print(f"# alpha={fmt(d.alpha)} power={fmt(1 - d.eta)} delta={fmt(d.delta)} "
          f"spending={d.spending.family} I_max={fmt(d.i_max)} L={fmt(d.inflation)} "
          f"I_max_inflated={fmt(d.i_max_inflated)}")
    rows = [{"look": j + 1, "fraction": t, "cumulative_alpha": a, "boundary": c,
             "information": t * d.i_max_inflated}
            for j, (t, a, c) in enumerate(zip(d.fractions, d.cumulative_alpha, d.boundaries))]
    _print_csv(["look", "fraction", "information", "cumulative_alpha", "boundary"], rows)
    return 0


def cmd_boundaries(args) -> int:
    sf = SpendingFunction(args.spending, args.alpha, args.param)
    table = compute_boundaries(args.fractions, sf)
    rows = [{"look": j + 1, "fraction": t, "cumulative_alpha": a, "increment": i, "boundary": c,
             "exit_probability": e}
            for j, (t, a, i, c, e) in enumerate(zip(table.fractions, table.cumulative_alpha,
                                                    table.increments, table.boundaries,
                                                    table.exit_probabilities))]
    _print_csv(["look", "fraction", "cumulative_alpha", "increment", "boundary",
                "exit_probability"], rows)
    return 0


def cmd_validate(args) -> int:
    with open(args.scenario, encoding="utf-8") as fh:
        data = json.load(fh)
    validate_document(data)
    scenarios = load_scenarios(data)
    print(f"{args.scenario}: ok ({len(scenarios)} scenario{'s' if len(scenarios) != 1 else ''})")
    return 0


COMMANDS = {"simulate": cmd_simulate, "plan": cmd_plan, "boundaries": cmd_boundaries,
            "validate": cmd_validate}


def main(argv=None) -> int:
    """Exit codes: 0 success, 1 usage or input error, 2 runtime failure."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args)
    except (FileNotFoundError, json.JSONDecodeError, jsonschema.ValidationError,
            SpecError, PlanningError, CalibrationError) as exc:
        msg = exc.message if isinstance(exc, jsonschema.ValidationError) else str(exc)
        print(f"urnbandit: input error: {msg}", file=sys.stderr)
        return 1
    except (OSError, UrnBanditError) as exc:
        print(f"urnbandit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Exit codes: 0 when every check passes, 1 when any check fails (or is
inconclusive), 2 for input or configuration errors.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import sys
import warnings

import numpy as np

from . import __version__
from .scenario import ScenarioError, Scenario, emit, load_scenario, normalized_text, run, validate, PASS

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _write(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_check(args) -> int:
    sc = load_scenario(args.scenario)
    fmt = args.format or sc.raw.get("output", {}).get("format", "summary")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = run(sc, jobs=args.jobs, seed_override=args.seed_override)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    _write(emit(report, fmt), args.out)
    return EXIT_OK if report.overall == PASS else EXIT_FAIL


def _sweep_values(args) -> list:
    if args.values:
        return [float(v) for v in args.values.split(",") if v.strip()]
    lo, hi, n = args.range.split(":")
    return list(np.linspace(float(lo), float(hi), int(n)))


def _cmd_sweep(args) -> int:
    """Re-run one check with one scalar parameter varied; CSV output."""
    sc = load_scenario(args.scenario)
    checks = sc.checks
    idx = None
    for i, c in enumerate(checks):
        if str(i) == args.check or c.get("label") == args.check:
            idx = i
            break
    if idx is None:
        raise ScenarioError(f"no check with index or label {args.check!r}", "/checks")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([args.param, "verdict", "worst_margin", "tolerance", "samples"])
    worst = PASS
    for v in _sweep_values(args):
        raw = copy.deepcopy(sc.raw)
        check = raw["checks"][idx]
        check.setdefault("params", {})[args.param] = v
        raw["checks"] = [check]
        validate(raw)
        sub = Scenario(raw, sc.text, sc.base, sc.source)
        rep = run(sub, seed_override=args.seed_override).to_dict(timings=False)["checks"][0]
        w.writerow([repr(float(v)), rep["verdict"], rep["worst_margin"], rep["tolerance"], rep["samples"]])
        if rep["verdict"] != PASS:
            worst = rep["verdict"]
    _write(buf.getvalue(), args.out)
    return EXIT_OK if worst == PASS else EXIT_FAIL


def _cmd_fmt(args) -> int:
    sc = load_scenario(args.scenario)
    _write(normalized_text(sc), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="logconcave", description="Verify log-concavity inequalities on grids.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp, fmt=True):
        sp.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
        sp.add_argument("--out", help="write output here instead of stdout")
        sp.add_argument("--seed-override", type=int, default=None, help="replace every check seed")
        if fmt:
            sp.add_argument("--format", choices=["json", "csv", "summary"], default=None)
            sp.add_argument("--jobs", type=int, default=1, help="worker threads")

    common(sub.add_parser("check", help="run a scenario"))
    sw = sub.add_parser("sweep", help="vary one scalar parameter of one check")
    common(sw, fmt=False)
    sw.add_argument("--check", required=True, help="check index (0-based) or label")
    sw.add_argument("--param", required=True, help="parameter name, e.g. delta or tau")
    group = sw.add_mutually_exclusive_group(required=True)
    group.add_argument("--values", help="comma-separated values")
    group.add_argument("--range", help="lo:hi:n")
    fm = sub.add_parser("fmt", help="validate and print the normalised scenario")
    fm.add_argument("--scenario", required=True)
    fm.add_argument("--out")
    sub.add_parser("version", help="print the toolkit version")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code not in (0, None) else EXIT_OK
    try:
        if args.verb == "version":
            print(__version__)
            return EXIT_OK
        if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
            raise ScenarioError("--jobs must be >= 1")
        return {"check": _cmd_check, "sweep": _cmd_sweep, "fmt": _cmd_fmt}[args.verb](args)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

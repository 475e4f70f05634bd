"""Command line: run, list-suites, compare."""
import argparse
import logging
import sys

from .runner import ConfigError, ReportError, compare, load_config, load_report, run
from .suites import list_suites

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="tamedcalc", description="Vector calculus verification on tamed model spaces.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the configured suites across the refinement ladder")
    r.add_argument("config")
    r.add_argument("--output-dir")
    r.add_argument("--seed", type=int)
    r.add_argument("--levels", help="comma-separated refinement ladder, e.g. 1,2,3")
    r.add_argument("--suite", action="append", help="suite to run (repeatable; overrides the config)")
    sub.add_parser("list-suites", help="list the verification suites")
    c = sub.add_parser("compare", help="compare two reports")
    c.add_argument("report_a")
    c.add_argument("report_b")
    return p


def _cmd_run(args):
    try:
        config = load_config(args.config)
        if args.output_dir:
            config.output_dir = args.output_dir
        if args.seed is not None:
            config.seed = args.seed
        if args.levels:
            try:
                config.ladder = [int(v) for v in args.levels.split(",") if v.strip()]
            except ValueError:
                raise ConfigError(f"--levels: expected integers, got {args.levels!r}") from None
        if args.suite:
            config.suites = list(args.suite)
        config.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        report = run(config)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for fam in report["families"]:
        status = "PASS" if fam["passed"] else "FAIL"
        orders = fam.get("orders")
        extra = "" if not orders else "  orders " + " ".join("-" if o is None else f"{o:.2f}" for o in orders)
        print(f"{status}  {fam['suite']:<13} {fam['shape']:<10} {fam['family']:<40} {fam['verdict']}{extra}")
    s = report["summary"]
    print(f"{s['families'] - s['failed_families']}/{s['families']} families passed; "
          f"report written to {config.output_dir}")
    return EXIT_OK if s["passed"] else EXIT_FAIL


def _cmd_list():
    for name, desc in list_suites():
        print(f"{name:<13} {desc}")
    return EXIT_OK


def _cmd_compare(args):
    try:
        a, b = load_report(args.report_a), load_report(args.report_b)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ReportError as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    diff = compare(a, b)
    for r in diff["rows"]:
        change = r.get("relative_change")
        ch = "" if change is None else f"{change:+.3g}"
        print(f"{r['status']:<10} {r['suite']:<13} {r['shape']:<10} L{r['level']} {r['family']:<40} {ch}")
    print(f"{len(diff['rows'])} changed rows, {diff['regressions']} regressions, {diff['added']} added")
    return EXIT_FAIL if diff["regressions"] else EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "list-suites":
        return _cmd_list()
    return _cmd_compare(args)


if __name__ == "__main__":
    sys.exit(main())

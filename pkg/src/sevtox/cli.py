"""Command-line front end.

Exit codes: 0 success, 1 method or runtime failure, 2 usage or parse failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .analysis import EXACT_MODES, METHODS, analyze
from .contrasts import parse_contrast_csv
from .permutation import DEFAULT_B
from .simulation import ConfigError, estimate_error_rates, parse_config, stderr_progress
from .tabular import (
    ParseError,
    collapse,
    expand_table,
    parse_long_csv,
    parse_table_csv,
    write_long_csv,
    write_table_csv,
)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _csv_list(cast):
    def parse(text: str):
        try:
            return [cast(x) for x in text.replace(" ", "").split(",") if x]
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid list {text!r}") from None
    return parse


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def load_dataset(path: str, fmt: str):
    text = _read(path)
    if fmt == "table":
        return expand_table(parse_table_csv(text))
    return parse_long_csv(text)


def _write(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def cmd_analyze(args) -> int:
    d = load_dataset(args.input, args.format)
    if args.control is not None:
        d = d.reorder_control(args.control)
    if args.doses is not None:
        if len(args.doses) != d.k:
            raise UsageError(f"--doses needs {d.k} values, got {len(args.doses)}")
        d = d.with_doses(args.doses)
    if args.method == "tukeytrend" and d.doses is None:
        raise UsageError("tukeytrend requires --doses or a dose column in the input")

    contrast = args.contrast
    if contrast.startswith("custom="):
        if args.method in ("releff", "tukeytrend"):
            raise UsageError(f"{args.method} does not accept custom contrasts")
        try:
            contrast = parse_contrast_csv(_read(contrast[len("custom="):]), d.group_sizes())
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    elif contrast not in ("dunnett", "williams"):
        raise UsageError("--contrast must be dunnett, williams or custom=FILE")

    try:
        report = analyze(
            d, args.method, contrast=contrast, alternative=args.alternative,
            cutpoints=args.cutpoints, include_raw_score=args.include_raw_score,
            nperm=args.nperm, seed=args.seed, exact=args.exact, alpha=args.alpha,
            threads=args.threads,
        )
    except ValueError as exc:
        # out-of-range cutpoints and similar are caller mistakes
        if args.cutpoints is not None and "cutpoint" in str(exc):
            raise UsageError(str(exc)) from None
        raise
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _write(report.to_json() if args.output_format == "json" else report.to_csv(), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        cfg = parse_config(_read(args.config))
    except ConfigError as exc:
        raise UsageError(f"invalid config: {exc}") from None
    rep = estimate_error_rates(cfg, threads=args.threads, progress=stderr_progress(cfg.nsim))
    text = rep.to_csv() if args.out and args.out.endswith(".csv") else rep.to_json()
    _write(text, args.out)
    return EXIT_OK


def cmd_tabulate(args) -> int:
    text = _read(args.input)
    if args.from_ == "long":
        d = parse_long_csv(text)
    else:
        d = expand_table(parse_table_csv(text))
    out = write_table_csv(collapse(d)) if args.to == "table" else write_long_csv(d)
    _write(out, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sevtox", description="Multiple contrast tests for graded severity data.")
    sub = p.add_subparsers(dest="command", required=True)
    threads = dict(type=int, default=os.cpu_count() or 1, help="worker threads (results do not depend on this)")

    a = sub.add_parser("analyze", help="test a dataset")
    a.add_argument("--input", required=True)
    a.add_argument("--format", choices=("long", "table"), default="long")
    a.add_argument("--method", choices=METHODS, default="perm-maxmax")
    a.add_argument("--contrast", default="dunnett", help="dunnett, williams or custom=FILE")
    a.add_argument("--alternative", choices=("greater", "less", "two-sided"), default="greater")
    a.add_argument("--cutpoints", type=_csv_list(int))
    a.add_argument("--include-raw-score", action="store_true")
    a.add_argument("--nperm", type=int, default=DEFAULT_B)
    a.add_argument("--seed", type=int)
    a.add_argument("--exact", choices=tuple(EXACT_MODES), default="auto")
    a.add_argument("--alpha", type=float, default=0.05)
    a.add_argument("--doses", type=_csv_list(float))
    a.add_argument("--control", help="label of the control group (default: first group)")
    a.add_argument("--output-format", choices=("json", "csv"), default="json")
    a.add_argument("--output", help="write the report here instead of stdout")
    a.add_argument("--threads", **threads)
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="estimate FWER or power by simulation")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="report file (.csv for CSV, JSON otherwise; default stdout)")
    s.add_argument("--threads", **threads)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("tabulate", help="convert between long and table CSV")
    t.add_argument("--input", required=True)
    t.add_argument("--from", dest="from_", choices=("long", "table"), required=True)
    t.add_argument("--to", choices=("long", "table"), required=True)
    t.add_argument("--output")
    t.set_defaults(func=cmd_tabulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    if getattr(args, "nperm", 1) < 1:
        parser.error("--nperm must be >= 1")
    if not 0 < getattr(args, "alpha", 0.5) < 1:
        parser.error("--alpha must lie in (0, 1)")
    try:
        return args.func(args)
    except (UsageError, ParseError) as exc:
        print(f"sevtox: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any method failure maps to exit 1
        print(f"sevtox: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

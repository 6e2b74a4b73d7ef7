"""Command line: ``hepatic-lsfem run <config>`` and ``hepatic-lsfem report <csv>``."""

from __future__ import annotations

import argparse
import csv
import math
import sys
import traceback
from pathlib import Path

from .config import ConfigError, parse_config
from .scenario import CSV_COLUMNS, eoc, run_scenario


class ReportError(ValueError):
    pass


def read_history_csv(path) -> list:
    """Rows of a convergence CSV as dicts of numbers; raises :class:`ReportError` if malformed."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ReportError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise ReportError(f"{path}: empty file")
    header = rows[0]
    if tuple(header[:len(CSV_COLUMNS)]) != CSV_COLUMNS or len(header) > len(CSV_COLUMNS) + 1:
        raise ReportError(f"{path}: unexpected header {','.join(header)}")
    out = []
    for k, row in enumerate(rows[1:], 2):
        if len(row) != len(header):
            raise ReportError(f"{path}:{k}: expected {len(header)} fields, got {len(row)}")
        try:
            rec = {c: (int(v) if c in ("level", "triangles", "dofs", "solve_iters") else float(v))
                   for c, v in zip(CSV_COLUMNS, row)}
        except ValueError as exc:
            raise ReportError(f"{path}:{k}: {exc}") from None
        out.append(rec)
    if not out:
        raise ReportError(f"{path}: no data rows")
    return out


def format_report(rows: list) -> str:
    rates = eoc([r["functional"] for r in rows], [r["dofs"] for r in rows])
    head = f"{'level':>5} {'triangles':>9} {'dofs':>8} {'functional':>12} {'eoc':>7} " \
           f"{'est. max':>11} {'iface share':>11} {'iters':>6}"
    lines = [head, "-" * len(head)]
    for r, e in zip(rows, rates):
        lines.append(f"{r['level']:>5d} {r['triangles']:>9d} {r['dofs']:>8d} {r['functional']:>12.4e} "
                     f"{'' if e is None else format(e, '.3f'):>7} {r['estimator_max']:>11.3e} "
                     f"{r['interface_share']:>11.4f} {r['solve_iters']:>6d}")
    return "\n".join(lines)


def write_gnuplot(rows: list, path) -> Path:
    """Whitespace-separated columns with a ``#`` header; missing EOC values are ``nan``."""
    rates = eoc([r["functional"] for r in rows], [r["dofs"] for r in rows])
    cols = list(CSV_COLUMNS) + ["eoc"]
    lines = ["# " + " ".join(cols)]
    for r, e in zip(rows, rates):
        vals = [repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in CSV_COLUMNS]
        lines.append(" ".join(vals + ["nan" if e is None else repr(e)]))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def _provenance(exc: BaseException) -> str:
    """Package module in which the innermost frame of the exception chain was raised."""
    while exc.__cause__ is not None:
        exc = exc.__cause__
    frames = traceback.extract_tb(exc.__traceback__)
    for fr in reversed(frames):
        p = Path(fr.filename)
        if p.parent.name == __package__:
            return p.stem
    return "unknown"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hepatic-lsfem",
                                 description="Least-squares Stokes-Darcy solver for hepatic perfusion scenarios.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario from a configuration file")
    run.add_argument("config")
    run.add_argument("--output-dir", help="directory for all outputs (overrides [output] directory)")
    run.add_argument("--levels", type=int, help="number of adaptive levels")
    run.add_argument("--theta", type=float, help="bulk marking fraction in (0, 1]")
    run.add_argument("--uniform", action="store_true", default=None, help="refine every triangle")
    rep = sub.add_parser("report", help="tabulate a convergence CSV and write gnuplot data")
    rep.add_argument("csv")
    rep.add_argument("--output", help="gnuplot data file (default: CSV path with .dat suffix)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        try:
            cfg = parse_config(args.config, levels=args.levels, theta=args.theta,
                               uniform=args.uniform, output_dir=args.output_dir)
        except ConfigError as exc:
            print(exc, file=sys.stderr)
            return 2
        try:
            result = run_scenario(cfg)
        except Exception as exc:  # report and exit nonzero, naming the failing module
            print(f"error in {_provenance(exc)}: {exc}", file=sys.stderr)
            return 1
        fin = result.summary["finest"]
        print(f"{cfg.kind}: {len(result.history)} level(s), finest {fin['triangles']} triangles, "
              f"F = {fin['functional']:.4e}; outputs in {result.output_dir}")
        return 0
    try:
        rows = read_history_csv(args.csv)
    except ReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(format_report(rows))
    out = write_gnuplot(rows, args.output or Path(args.csv).with_suffix(".dat"))
    print(f"gnuplot data: {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

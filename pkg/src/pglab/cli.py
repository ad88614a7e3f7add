"""Command-line front end.

Verbs:
  run <scenario>          execute a scenario file (or built-in name)
  verify --level L        run the acceptance suite (quick or full)
  norms <snapshot> ...    norms of a stored field (--space besov:s,p,r etc.)
  split <csv> ...         interval splitting of a time series from CSV

All floating-point output uses 17 significant digits so values round-trip.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np


def _num(tok: str) -> float:
    """Parse a number, accepting fractions like 4/3 and 'inf'."""
    tok = tok.strip()
    if tok.lower() in ("inf", "infinity"):
        return float("inf")
    if "/" in tok:
        return float(Fraction(tok))
    return float(tok)


def _cmd_run(args) -> int:
    from . import harness

    path = Path(args.scenario)
    if path.exists():
        sc = harness.load_scenario(path)
    else:
        try:
            sc = harness.builtin_scenario(args.scenario)
        except harness.ScenarioError:
            print(f"error: no scenario file or built-in named '{args.scenario}'",
                  file=sys.stderr)
            return 1
    res = harness.run_scenario(sc, output_dir=args.output_dir)
    if res.output_dir is not None:
        print(f"wrote {res.output_dir}")
    print(res.message)
    return res.exit_code


def _cmd_verify(args) -> int:
    from .acceptance import run_all

    return run_all(level=args.level)


def _cmd_norms(args) -> int:
    from . import besov, lorentz
    from .field import load_field, lp_norm
    from .harness import fmt17

    f = load_field(args.snapshot)
    for spec in args.space:
        kind, _, rest = spec.partition(":")
        vals = [_num(t) for t in rest.split(",")] if rest else []
        if kind == "lp" and len(vals) == 1:
            out = lp_norm(f, vals[0])
        elif kind == "lorentz" and len(vals) == 2:
            out = lorentz.lorentz_norm(f, lorentz.LorentzExponents(*vals))
        elif kind == "besov" and len(vals) == 3:
            out = besov.besov_norm(f, *vals)
        else:
            print(f"error: bad space spec '{spec}' "
                  "(use lp:p, lorentz:p,r or besov:s,p,r)", file=sys.stderr)
            return 1
        print(f"{spec} = {fmt17(out)}")
    return 0


def _cmd_split(args) -> int:
    from .diagnostics import split_intervals
    from .field import TimeSeries
    from .harness import fmt17

    times, values = [], []
    for line in Path(args.csv).read_text().splitlines():
        cells = line.split(",")
        if len(cells) < 2:
            continue
        try:
            t, v = float(cells[0]), float(cells[1])
        except ValueError:
            continue  # header row
        times.append(t)
        values.append(v)
    if len(times) < 2:
        print("error: need at least two numeric (time, value) rows", file=sys.stderr)
        return 1
    res = split_intervals(
        TimeSeries(np.array(times), np.array(values)), args.eta, q=args.q, r=args.r
    )
    print(f"K = {res.K}")
    print(f"eta = {fmt17(res.eta)}")
    print("breakpoints = " + " ".join(fmt17(b) for b in res.breakpoints))
    print("interval_norms = " + " ".join(fmt17(v) for v in res.per_interval_norms))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pglab",
        description="numerical laboratory for pressureless viscous gas flows",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a scenario")
    p.add_argument("scenario", help="scenario file path or built-in name")
    p.add_argument("--output-dir", default=None,
                   help="output root (default: $PGL_OUTPUT_DIR or ./pgl_out)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("norms", help="norms of a stored field snapshot")
    p.add_argument("snapshot")
    p.add_argument("--space", action="append", required=True,
                   help="lp:p | lorentz:p,r | besov:s,p,r (repeatable; fractions ok)")
    p.set_defaults(func=_cmd_norms)

    p = sub.add_parser("split", help="interval splitting of a CSV time series")
    p.add_argument("csv", help="CSV with time,value columns")
    p.add_argument("--eta", type=_num, required=True)
    p.add_argument("--q", type=_num, default=4.0)
    p.add_argument("--r", type=_num, default=1.0)
    p.set_defaults(func=_cmd_split)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

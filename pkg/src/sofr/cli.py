"""Command-line interface: ``sofr simulate``, ``sofr tecator`` and ``sofr test``."""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from .bench import execute, parse_spec_file
from .datagen import RngStream
from .exceptions import SofrError
from .flm import select_basis_dim
from .funcdata import read_csv
from .ggf import ggf_test
from .hr import hr_test
from .ksm import ksm_test
from .mhr import mhr_linearity, mhr_nullity
from .tecator import BONFERRONI_ALPHA, analyze_tecator, parse_tecator, write_cells

AVAILABLE = {"linear": ("ggf", "mhr", "hr"), "null": ("ggf", "mhr", "ksm")}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sofr", description="Hypothesis tests for scalar-on-function regression.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run a size or power study described in a spec file")
    sim.add_argument("--spec", required=True, type=Path)
    sim.add_argument("--out", required=True, type=Path)
    sim.add_argument("--workers", type=int, default=None)

    tec = sub.add_parser("tecator", help="nullity and linearity tests on the Tecator data")
    tec.add_argument("--data", required=True, type=Path)
    tec.add_argument("--out", required=True, type=Path)
    tec.add_argument("--seed", type=int, default=1)
    tec.add_argument("--B", type=int, default=5000)
    tec.add_argument("--n-null", type=int, default=10000)

    test = sub.add_parser("test", help="run one test on a CSV dataset")
    test.add_argument("--data", required=True, type=Path)
    test.add_argument("--method", required=True, choices=("ggf", "mhr", "hr", "ksm"))
    test.add_argument("--hypothesis", required=True, choices=("null", "linear"))
    test.add_argument("--seed", type=int, default=1)
    test.add_argument("--B", type=int, default=500)
    test.add_argument("--n-null", type=int, default=2000)
    test.add_argument("--p", type=int, default=None, help="GGF basis size or HR component count")
    test.add_argument("--pve", type=float, default=0.95, help="KSM variance share")
    return parser


def _simulate(args) -> int:
    spec = parse_spec_file(args.spec)
    path = execute(spec, args.out, args.workers)
    print(path)
    return 0


def _tecator(args) -> int:
    td = parse_tecator(args.data)
    cells = analyze_tecator(td, seed=args.seed, B=args.B, n_null=args.n_null)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "tecator_pvalues.csv"
    write_cells(cells, path)
    for c in cells:
        p = "failed" if c.p_value is None else f"{c.p_value:.4f}{'*' if c.significant else ''}"
        print(f"{c.response:8s} {c.hypothesis} {c.method:4s} {p}")
    print(f"* significant at {BONFERRONI_ALPHA:.4f}; table written to {path}")
    return 0


def _test(args, parser) -> int:
    if args.method not in AVAILABLE[args.hypothesis]:
        parser.error(f"method {args.method} does not test the {args.hypothesis} hypothesis")
    ds = read_csv(args.data)
    rng = RngStream(args.seed)
    hyp = "H01" if args.hypothesis == "linear" else "H02"
    if args.method == "ggf":
        res = ggf_test(ds, hyp, args.B, args.p or select_basis_dim(ds), rng)
    elif args.method == "mhr":
        fn = mhr_linearity if hyp == "H01" else mhr_nullity
        res = fn(ds, args.n_null, rng)
    elif args.method == "hr":
        res = hr_test(ds, args.p or 3)
    else:
        res = ksm_test(ds, pve=args.pve)
    print(
        f"method={res.method} hypothesis={res.hypothesis} statistic={res.statistic:.6g} "
        f"p_value={res.p_value:.6g}"
    )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.command == "simulate":
                return _simulate(args)
            if args.command == "tecator":
                return _tecator(args)
            return _test(args, parser)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (SofrError, OSError, np.linalg.LinAlgError) as exc:
        print(f"sofr: error: {exc}", file=sys.stderr)
        return 1

"""Command-line harness for the derivative, filter, one-step, quench and double-well studies.

Exit codes: 0 on success, 2 for invalid flags, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from . import bench
from .evolution import ConvergenceError
from .hdaf import HdafOverflowError
from .loading import QuenchParams
from .mps import Tolerances
from .operators import GridTooCoarseError

NUMERICAL_FAILURES = (ConvergenceError, HdafOverflowError, GridTooCoarseError, FloatingPointError)

DESK = {"omegaH": 0.1, "n": 14}
FULL_SCALE = {"omegaH": 0.01, "n": 20, "t_final": 158.0}


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _int_range(text: str) -> list[int]:
    if ":" in text:
        lo, hi = (int(v) for v in text.split(":"))
        return list(range(lo, hi + 1))
    return _ints(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, help="number of qubits (default 14, 20 with --paper-scale)")
    common.add_argument("--dt", type=float, default=0.1, help="time step")
    common.add_argument("--t-final", type=float, help="final time (a multiple of dt)")
    common.add_argument("--svd-tol", type=float, default=1e-28)
    common.add_argument("--simplify-tol", type=float, default=1e-28)
    common.add_argument("--max-bond", type=int)
    common.add_argument("--hdaf-M", type=int, default=40)
    common.add_argument("--eps-coef", type=float, default=1e-16)
    common.add_argument("--kinetic", choices=("fd", "hdaf"), default="hdaf")
    common.add_argument("--backend", choices=("mps", "vector"), default="mps")
    common.add_argument("--omega0", type=float, default=1.0)
    common.add_argument("--omegaH", type=float, help="trap frequency after the quench (default 0.1)")
    common.add_argument("--out", type=Path, help="result file (stdout summary only if omitted)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--repeat", type=int, default=1, help="repeat each timed cell")
    common.add_argument("--paper-scale", action="store_true",
                        help="ratio 100, n=20, t_final=158 (hours of run time)")

    parser = argparse.ArgumentParser(prog="qtt-hdaf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derivative-sweep", parents=[common],
                       help="second-derivative error versus qubit count")
    p.add_argument("--M-list", type=_ints, default=[8, 20, 40])
    p.add_argument("--n-range", type=_int_range, default=list(range(4, 19)),
                   help="inclusive range lo:hi or comma list")
    p.add_argument("--mitigation", choices=("on", "off"), default="on")
    p.add_argument("--length", type=float, default=40.0)

    p = sub.add_parser("one-step", parents=[common], help="single step for a range of dt")
    p.add_argument("--methods", type=lambda s: s.split(","), default=None,
                   help="comma list from: " + ",".join(bench.ONE_STEP_METHODS))
    p.add_argument("--dt-list", type=_floats, default=None)
    p.add_argument("--fd-variant", choices=("centered", "smooth9"), default="smooth9")
    p.add_argument("--cg-tol", type=float, default=1e-10)
    p.add_argument("--kinetic-qubits", type=int,
                   help="level at which the HDAF kinetic operator is built before extension")

    sub.add_parser("quench", parents=[common], help="harmonic quench evolution")

    p = sub.add_parser("double-well", parents=[common], help="expansion through a barrier")
    p.add_argument("--u", type=float, default=1.0)
    p.add_argument("--sigma-barrier", type=float, default=1.0)
    p.add_argument("--snapshot-times", type=_floats, default=None)

    p = sub.add_parser("filter-spectrum", parents=[common], help="kernel Fourier spectra")
    p.add_argument("--M-list", type=_ints, default=[0, 8, 20, 40, 60, 80])
    p.add_argument("--points", type=int, default=10_000)
    return parser


def _params(args: argparse.Namespace, **extra) -> QuenchParams:
    omegaH = args.omegaH if args.omegaH is not None else (
        FULL_SCALE["omegaH"] if args.paper_scale else DESK["omegaH"])
    return QuenchParams(omega0=args.omega0, omegaH=omegaH, **extra)


def _n(args: argparse.Namespace, full_n: int = FULL_SCALE["n"]) -> int:
    if args.n is not None:
        return args.n
    return full_n if args.paper_scale else DESK["n"]


def _t_final(args: argparse.Namespace) -> float | None:
    if args.t_final is not None:
        return args.t_final
    return FULL_SCALE["t_final"] if args.paper_scale else None


def _tol(args: argparse.Namespace) -> Tolerances:
    return Tolerances(svd_tol=args.svd_tol, max_bond=args.max_bond, simplify_tol=args.simplify_tol)


def _print_fits(fits: dict) -> None:
    for name, f in fits.items():
        flag = "  (flagged)" if f.flagged else ""
        print(f"{name:>16}: C={f.C:.3e} m={f.m:.3f} r2={f.r_squared:.4f} "
              f"points={f.n_points}{flag}")


def run(args: argparse.Namespace) -> int:
    tol = _tol(args)
    if args.command == "derivative-sweep":
        rows = bench.cmd_derivative_sweep(args.M_list, args.n_range, args.mitigation == "on",
                                          args.length, tol)
        if args.out:
            bench.write_table(args.out, rows, args.format)
        for r in rows:
            print(f"{r['method']:>8} n={r['n']:>2} mitigated={r['mitigated']!s:>5} "
                  f"error={r['error']:.3e}")
        return 0

    if args.command == "filter-spectrum":
        rows, markers = bench.cmd_filter_spectrum(args.M_list, args.points)
        if args.out:
            bench.write_table(args.out, rows, args.format, {"markers": markers})
        for m in markers:
            print(f"M={m['M']:>3} sigma/dx={m['sigma_dx']:.4f} k*dx={m['k_star_dx']:.4f} "
                  f"value(k*)={m['value_at_k_star']:.4f}")
        return 0

    if args.command == "one-step":
        kinetic_methods = bench.ONE_STEP_METHODS if args.kinetic == "hdaf" else bench.FD_METHODS
        methods = args.methods or list(kinetic_methods)
        for m in methods:
            if bench.parse_method(m)[0] not in ("euler", "heun", "rk4", "crank_nicolson",
                                                "arnoldi", "split_step"):
                raise argparse.ArgumentTypeError(f"unknown method {m!r}")
        dts = args.dt_list or list(bench.one_step_dts())
        records, fits = bench.cmd_one_step(
            methods, dts, _n(args, 18), args.kinetic, _params(args), args.hdaf_M, args.eps_coef,
            tol, args.cg_tol, args.repeat, args.kinetic_qubits, args.fd_variant)
        if args.out:
            bench.write_records(args.out, records, fits, args.format)
        _print_fits(fits)
        return 0

    if args.command == "quench":
        params = _params(args)
        writer = bench.RecordWriter(args.out, args.format) if args.out else None
        records, fits = bench.cmd_quench(params, _n(args), args.dt, _t_final(args), args.backend,
                                         args.hdaf_M, args.eps_coef, tol, writer)
        if writer:
            writer.close({"fits": bench.fits_to_dict(fits)})
        last = records[-1]
        print(f"t={last.t:.4f} steps={last.step_index} eps={last.epsilon} "
              f"chi_max={max(r.chi_max for r in records)}")
        _print_fits(fits)
        return 0

    if args.command == "double-well":
        params = _params(args, u=args.u, sigma_barrier=args.sigma_barrier)
        writer = bench.RecordWriter(args.out, args.format) if args.out else None
        records, snaps = bench.cmd_double_well(params, _n(args), args.dt, _t_final(args),
                                               args.snapshot_times, args.hdaf_M, args.eps_coef,
                                               tol, writer)
        if writer:
            writer.close()
        for t, snap in sorted(snaps.items()):
            if args.out:
                stem = args.out.with_suffix("")
                bench.write_snapshot(f"{stem}_snapshot_t{t:.4f}.csv", snap)
            print(f"snapshot t={t:.4f} max density={snap['density'].max():.4e}")
        print(f"chi_max series peak={max(r.chi_max for r in records)} "
              f"final={records[-1].chi_max}")
        return 0
    raise AssertionError(args.command)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.repeat < 1 or (args.dt is not None and not args.dt > 0):
        parser.error("--repeat must be >= 1 and --dt positive")
    try:
        return run(args)
    except NUMERICAL_FAILURES as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, argparse.ArgumentTypeError) as exc:
        print(f"invalid arguments: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

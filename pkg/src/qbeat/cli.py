"""Command-line interface: ``qbeat {freqs,simulate,fit,residuals}``.

Exit codes: 0 success, 2 usage error, 3 parse/validation error,
4 convergence failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .angular import HalfInt
from .beat_model import PulseModel, simulate
from .dataset import BeatDataset, format_dataset, load_dataset, load_table1
from .errors import (
    ConvergenceError,
    DomainError,
    InvalidArgument,
    ParseError,
    ProfileError,
    ValidationError,
)
from .fitting import (
    PARAM_NAMES,
    BeatModel,
    FitConfig,
    FitParams,
    FitResult,
    fit,
    residual_report,
)
from .hyperfine import HyperfineSystem, beat_spectrum

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CONVERGENCE = 4

MAX_TWICE_J = 25  # j <= 25/2

_CS_A, _CS_B = 7.42, 0.14
_GRID_ALIASES = {"A": "A", "B": "B", "dt": "dt_offset", "dt_offset": "dt_offset", "W": "W"}

log = logging.getLogger("qbeat")


class UsageError(Exception):
    pass


def _halfint_arg(text: str) -> HalfInt:
    try:
        h = HalfInt.of(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a half-integer: {text!r}") from None
    if h.twice < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0: {text!r}")
    if h.twice > MAX_TWICE_J:
        raise argparse.ArgumentTypeError(f"{text} exceeds the supported maximum 25/2")
    return h


def _grid_arg(text: str) -> tuple[str, tuple[float, float, float]]:
    """Parse ``NAME=lo:hi[:step]``."""
    name, sep, spec = text.partition("=")
    name = name.strip()
    if not sep or name not in _GRID_ALIASES:
        raise argparse.ArgumentTypeError(f"expected NAME=lo:hi[:step] with NAME in A,B,dt,W; got {text!r}")
    parts = spec.split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid numbers in {text!r}") from None
    if len(nums) == 2:
        lo, hi = nums
        step = 0.0 if lo == hi else (hi - lo)
    elif len(nums) == 3:
        lo, hi, step = nums
    else:
        raise argparse.ArgumentTypeError(f"expected lo:hi or lo:hi:step in {text!r}")
    return _GRID_ALIASES[name], (lo, hi, step)


def _add_system_flags(p: argparse.ArgumentParser, constants: bool = True):
    p.add_argument("--I", type=_halfint_arg, default=HalfInt(7), help="nuclear spin, e.g. 7/2 (default 7/2)")
    p.add_argument("--J", type=_halfint_arg, default=HalfInt(3), help="electronic J, e.g. 3/2 (default 3/2)")
    if constants:
        p.add_argument("--A", type=float, default=None, help=f"magnetic dipole constant, MHz (default {_CS_A})")
        p.add_argument("--B", type=float, default=None,
                       help=f"electric quadrupole constant, MHz (default {_CS_B}, or 0 without a quadrupole)")


def _add_data_flags(p: argparse.ArgumentParser):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--input", "-i", metavar="CSV", help="dataset CSV (index,t_ns,PL_percent,sigma_percent)")
    g.add_argument("--bundled", action="store_true", help="use the bundled Cs 8p 2P3/2 dataset")


def _add_fit_flags(p: argparse.ArgumentParser):
    p.add_argument("--grid", type=_grid_arg, action="append", default=[], metavar="NAME=lo:hi[:step]",
                   help="override a start-grid axis (NAME in A, B, dt, W); repeatable")
    p.add_argument("--n-refine", type=int, default=FitConfig.n_refine,
                   help="number of best grid nodes refined locally")
    p.add_argument("--uncertainty", choices=("profile", "covariance", "none"), default="profile")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qbeat", description="Hyperfine quantum-beat models and fits.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("freqs", help="beat frequencies and amplitudes")
    _add_system_flags(p)
    p.add_argument("--json", action="store_true", help="emit JSON")
    p.add_argument("--out", help="write to file instead of stdout")

    p = sub.add_parser("simulate", help="synthetic dataset in the ingestion CSV format")
    _add_system_flags(p)
    p.add_argument("--W", type=float, default=0.0, help="pulse width, ns")
    p.add_argument("--dt", type=float, default=0.0, help="time offset, ns")
    p.add_argument("--tmin", type=float, default=0.0)
    p.add_argument("--tmax", type=float, default=120.0)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--times", metavar="FILE", help="file with one delay (ns) per line; overrides the grid flags")
    p.add_argument("--table1-grid", action="store_true", help="use the delays of the bundled dataset")
    p.add_argument("--noise", type=float, default=None, help="Gaussian noise sigma, percent")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sigma", type=float, default=1.0,
                   help="sigma_percent written for noiseless output (default 1.0)")
    p.add_argument("--out", help="write CSV to file instead of stdout")

    p = sub.add_parser("fit", help="fit A, B, dt, W to a dataset")
    _add_system_flags(p, constants=False)
    _add_data_flags(p)
    _add_fit_flags(p)
    p.add_argument("--out", help="write the JSON report to file instead of stdout")
    p.add_argument("--plot-dir", help="directory for fit_curve.csv and residuals.csv")
    p.add_argument("--json", action="store_true", help="accepted for symmetry; the report is always JSON")

    p = sub.add_parser("residuals", help="normalized residuals of a dataset")
    _add_system_flags(p)
    _add_data_flags(p)
    _add_fit_flags(p)
    p.add_argument("--W", type=float, default=None, help="pulse width, ns (with --at-params)")
    p.add_argument("--dt", type=float, default=None, help="time offset, ns (with --at-params)")
    p.add_argument("--at-params", action="store_true",
                   help="evaluate at --A/--B/--dt/--W instead of fitting")
    p.add_argument("--json", action="store_true", help="emit JSON instead of CSV")
    p.add_argument("--out", help="write to file instead of stdout")
    return parser


def _system(args) -> HyperfineSystem:
    A = _CS_A if args.A is None else args.A
    if args.B is None:
        B = _CS_B if (args.I.twice >= 2 and args.J.twice >= 2) else 0.0
    else:
        B = args.B
    return HyperfineSystem(args.I, args.J, A, B)


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def _load(args) -> BeatDataset:
    if args.bundled:
        return load_table1()
    if not os.path.exists(args.input):
        raise UsageError(f"input file not found: {args.input}")
    return load_dataset(args.input)


def _fit_config(args) -> FitConfig:
    return FitConfig(grid=dict(args.grid), n_refine=args.n_refine, uncertainty=args.uncertainty)


def spectrum_table(sys_: HyperfineSystem) -> dict:
    spec = beat_spectrum(sys_)
    return {
        "I": str(sys_.I),
        "J": str(sys_.J),
        "A_MHz": float(sys_.A),
        "B_MHz": float(sys_.B),
        "constant": spec.constant,
        "components": [
            {"F": str(c.F), "Fprime": str(c.Fprime), "nu_MHz": c.nu, "amplitude": c.amplitude}
            for c in spec.components
        ],
    }


def cmd_freqs(args) -> int:
    table = spectrum_table(_system(args))
    if args.json:
        _emit(_dump_json(table), args.out)
        return EXIT_OK
    lines = [
        f"I={table['I']} J={table['J']} A={table['A_MHz']:g} MHz B={table['B_MHz']:g} MHz",
        f"constant {table['constant']:.6f}",
        "    F    F'     nu (MHz)  amplitude",
    ]
    for c in table["components"]:
        lines.append(f"{c['F']:>5} {c['Fprime']:>5} {c['nu_MHz']:>12.4f} {c['amplitude']:>10.6f}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _sim_times(args) -> np.ndarray:
    if args.times:
        with open(args.times, encoding="utf-8") as fh:
            vals = [line.strip() for line in fh if line.strip() and not line.lstrip().startswith("#")]
        try:
            return np.array([float(v) for v in vals])
        except ValueError as exc:
            raise ParseError(f"bad delay in {args.times}: {exc}") from None
    if args.table1_grid:
        return load_table1().t
    if args.step <= 0 or args.tmax < args.tmin:
        raise UsageError("need --step > 0 and --tmax >= --tmin")
    n = int(math.floor((args.tmax - args.tmin) / args.step + 1e-9))
    return args.tmin + args.step * np.arange(n + 1)


def cmd_simulate(args) -> int:
    sys_ = _system(args)
    if args.noise is not None and args.noise < 0:
        raise UsageError("--noise must be >= 0")
    if args.sigma <= 0:
        raise UsageError("--sigma must be > 0")
    if args.W < 0:
        raise UsageError("--W must be >= 0")
    times = _sim_times(args)
    noise = None if args.noise is None else args.noise / 100.0
    rows = simulate(sys_, PulseModel(args.W, args.dt), times, noise, args.seed)
    nominal = args.sigma / 100.0
    records = [(k, t, pl, nominal if s is None else s) for k, (t, pl, s) in enumerate(rows, start=1)]
    comments = [
        f"simulated: I={sys_.I} J={sys_.J} A={sys_.A!r} B={sys_.B!r} W={args.W!r} dt={args.dt!r}"
        f" noise_percent={args.noise!r} seed={args.seed!r}",
    ]
    _emit(format_dataset(records, comments), args.out)
    return EXIT_OK


def fit_curve_rows(result: FitResult, sys_: HyperfineSystem, step: float = 0.1):
    """Model curve ``(t_ns, PL_percent)`` sampled from 0 to the last delay."""
    tmax = max(result.t) if result.t else 0.0
    t = np.arange(0.0, tmax + step / 2, step)
    model = BeatModel.for_system(sys_)
    pl = model.polarization(result.params.as_array(), t)
    return list(zip(t.tolist(), (100.0 * pl).tolist()))


def _write_plot_files(result: FitResult, sys_: HyperfineSystem, directory: str):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "fit_curve.csv"), "w", newline="", encoding="utf-8") as fh:
        fh.write("t_ns,PL_percent\n")
        for t, p in fit_curve_rows(result, sys_):
            fh.write(f"{t!r},{p!r}\n")
    with open(os.path.join(directory, "residuals.csv"), "w", newline="", encoding="utf-8") as fh:
        fh.write(_residual_csv(result))


def _residual_csv(result: FitResult) -> str:
    lines = ["index,t_ns,normalized_residual"]
    for i, t, r in residual_report(result).per_point:
        lines.append(f"{i},{t!r},{r!r}")
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    data = _load(args)
    sys_ = HyperfineSystem(args.I, args.J)
    result = fit(data, sys_, _fit_config(args))
    report = result.to_dict()
    if args.plot_dir:
        _write_plot_files(result, sys_, args.plot_dir)
    _emit(_dump_json(report), args.out)
    return EXIT_OK


def _result_at(params: FitParams, data: BeatDataset, sys_: HyperfineSystem) -> FitResult:
    model = BeatModel.for_system(sys_)
    r = (model.polarization(params.as_array(), data.t) - data.pl) / data.sigma
    n = len(data)
    dof = n - len(PARAM_NAMES)
    return FitResult(
        params=params,
        two_sigma={},
        red_chi2=float(r @ r) / dof if dof > 0 else float("nan"),
        residuals=tuple(float(v) for v in r),
        n_points=n,
        n_dof=dof,
        uncertainty_method="none",
        index=tuple(int(i) for i in data.index),
        t=tuple(float(v) for v in data.t),
    )


def cmd_residuals(args) -> int:
    data = _load(args)
    if args.at_params:
        sys_ = _system(args)
        params = FitParams(float(sys_.A), float(sys_.B),
                           0.0 if args.dt is None else args.dt,
                           0.0 if args.W is None else args.W)
        result = _result_at(params, data, HyperfineSystem(args.I, args.J))
    else:
        result = fit(data, HyperfineSystem(args.I, args.J), _fit_config(args))
    rep = residual_report(result)
    if args.json:
        out = {
            "params": result.to_dict()["params"],
            "red_chi2": result.red_chi2,
            "mean": rep.mean,
            "fraction_within_1sigma": rep.fraction_within_1sigma,
            "per_point": [{"index": i, "t_ns": t, "normalized_residual": r} for i, t, r in rep.per_point],
        }
        _emit(_dump_json(out), args.out)
    else:
        _emit(_residual_csv(result), args.out)
    return EXIT_OK


_COMMANDS = {
    "freqs": cmd_freqs,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "residuals": cmd_residuals,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"qbeat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ValidationError) as exc:
        print(f"qbeat: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DomainError, InvalidArgument) as exc:
        print(f"qbeat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, ProfileError) as exc:
        print(f"qbeat: fit failed: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point ``anisosyn``.

Exit codes: 0 success, 2 infeasible, 3 parse or dimension error,
4 solver failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .analysis import analysis_lmi_feasible
from .casestudy import (
    DEFAULT_TS,
    F4E_TABLE,
    GAMMA_INF,
    emit_sigma,
    f4e_model,
    gain_table,
    load_gain,
    load_plant_config,
    load_system,
    run_design,
)
from .errors import (
    AnisosynError,
    DimensionMismatch,
    InvalidArgs,
    InvalidPoint,
    NumericalFailure,
    ParseError,
    SolverFailure,
    UnstableMatrix,
)
from .lti import close_loop, discretize_zoh
from .norms import aniso_norm, h2_norm, hinf_norm
from .synthesis import CclOptions

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_PARSE = 3
EXIT_SOLVER = 4

_STATUS_EXIT = {
    "success": EXIT_OK,
    "infeasible_initial": EXIT_INFEASIBLE,
    "max_iterations": EXIT_INFEASIBLE,
    "failed": EXIT_INFEASIBLE,
    "solver_failure": EXIT_SOLVER,
}


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _positive(text):
    val = float(text)
    if not val > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return val


def _nonneg(text):
    val = float(text)
    if not val >= 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text}")
    return val


def _gamma_list(text):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 4 comma-separated numbers, got {text}")
    if len(vals) != 4 or not all(v > 0 for v in vals):
        raise argparse.ArgumentTypeError("expected 4 positive comma-separated numbers")
    return dict(zip(sorted(F4E_TABLE), vals))


def cmd_norm(args) -> int:
    sys_ = load_system(args.system)
    if args.kind == "h2":
        value = h2_norm(sys_)
    elif args.kind == "hinf":
        value = hinf_norm(sys_)
    else:
        if args.a is None:
            raise InvalidArgs("--a is required for --kind aniso")
        value = aniso_norm(sys_, args.a)
    out = {"kind": args.kind, "value": value}
    if args.kind == "aniso":
        out["a"] = args.a
    print(_dump(out))
    return EXIT_OK


def cmd_analyze(args) -> int:
    plant, _ = load_plant_config(args.plant)
    K = load_gain(args.gain)
    if K.shape != (plant.m_u, plant.p_y):
        raise DimensionMismatch(f"K has shape {K.shape}, expected {(plant.m_u, plant.p_y)}")
    cert = analysis_lmi_feasible(plant, K, args.a, args.gamma)
    out = {
        "feasible": cert.feasible,
        "a": args.a,
        "gamma": args.gamma,
        "certified_bound": cert.bound if cert.feasible else None,
        "q": cert.q if cert.feasible else None,
        "sdp_status": cert.status,
    }
    try:
        cl = close_loop(plant, K)
        out["aniso_norm"] = aniso_norm(cl, args.a)
    except UnstableMatrix:
        out["aniso_norm"] = None
    print(_dump(out))
    return EXIT_OK if cert.feasible else EXIT_INFEASIBLE


def _options(args) -> CclOptions:
    return CclOptions(max_iterations=args.max_iter, damping=args.damping)


def cmd_synthesize(args) -> int:
    plant, Ts = load_plant_config(args.plant)
    mode = "hinf" if math.isinf(args.a) else "aniso"
    report = run_design(plant, mode, None, gamma=args.gamma, a=args.a,
                        Ts=Ts or 1.0, opts=_options(args))
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    print(f"status: {report.status}", file=sys.stderr)
    return _STATUS_EXIT.get(report.status, EXIT_SOLVER)


def cmd_f4e(args) -> int:
    points = sorted(F4E_TABLE) if args.point == "all" else [int(args.point)]
    mode = args.mode.replace("-", "_")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for pt in points:
        plant = discretize_zoh(f4e_model(pt), args.ts)
        report = run_design(plant, mode, pt, gamma_inf=args.gamma_inf, Ts=args.ts,
                            opts=_options(args))
        stem = f"point{pt}_{mode}"
        (out_dir / f"{stem}.json").write_text(report.to_json() + "\n")
        if report.success:
            cl = close_loop(plant, np.array(report.K))
            (out_dir / f"{stem}_sigma.csv").write_text(emit_sigma(cl, Ts=args.ts))
        print(f"point {pt} {mode}: {report.status} gamma={report.gamma_bound:.4g}"
              + (f" aniso={report.achieved_aniso:.4g} hinf={report.achieved_hinf:.4g}"
                 f" |K|={report.gain_norm:.4g}" if report.success else ""))
        reports.append(report)
    suffix = "all" if args.point == "all" else f"point{args.point}"
    (out_dir / f"gains_{mode}_{suffix}.csv").write_text(gain_table(reports))
    codes = [_STATUS_EXIT.get(r.status, EXIT_SOLVER) for r in reports]
    return max(codes)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anisosyn",
        description="Anisotropic-norm analysis and static output-feedback synthesis.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("norm", help="norm of a discrete-time system")
    p.add_argument("--system", required=True, help="JSON with A, B, C, D")
    p.add_argument("--kind", required=True, choices=("h2", "hinf", "aniso"))
    p.add_argument("--a", type=_nonneg, help="mean anisotropy level (aniso only)")
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("analyze", help="certify a gain against an anisotropic bound")
    p.add_argument("--plant", required=True)
    p.add_argument("--gain", required=True, help='JSON {"K": [[...]]} or a bare matrix')
    p.add_argument("--a", required=True, type=_nonneg)
    p.add_argument("--gamma", required=True, type=_positive)
    p.set_defaults(func=cmd_analyze)

    def add_ccl_flags(p):
        p.add_argument("--damping", action="store_true", help="line search on each CCL step")
        p.add_argument("--max-iter", type=int, default=100)

    p = sub.add_parser("synthesize", help="static output-feedback synthesis")
    p.add_argument("--plant", required=True)
    p.add_argument("--a", required=True, type=_nonneg, help="use inf for H-infinity")
    p.add_argument("--gamma", required=True, type=_positive)
    p.add_argument("--out", help="report path (stdout if omitted)")
    add_ccl_flags(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("f4e", help="F4E pitch-loop designs")
    p.add_argument("--point", required=True, choices=("1", "2", "3", "4", "all"))
    p.add_argument("--mode", required=True, choices=("hinf", "aniso", "aniso-subopt"))
    p.add_argument("--ts", type=_positive, default=DEFAULT_TS)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--gamma-inf", type=_gamma_list, default=None,
                   help="override the four H-infinity bounds, e.g. 0.3,0.6,1,0.25 "
                        f"(default {','.join(str(GAMMA_INF[k]) for k in sorted(GAMMA_INF))})")
    add_ccl_flags(p)
    p.set_defaults(func=cmd_f4e)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; report them as parse errors
        return EXIT_PARSE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        # every SDP answer is re-checked exactly, so the solver's own caveat is noise
        warnings.filterwarnings("ignore", message="Solution may be inaccurate")
    try:
        return args.func(args)
    except (ParseError, DimensionMismatch, InvalidPoint, InvalidArgs, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (SolverFailure, NumericalFailure) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except AnisosynError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())

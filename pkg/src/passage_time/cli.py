"""Command line front end: ``passage-time <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import warnings
from pathlib import Path

from . import histories, resonances, shutter, verify
from .units import BarrierConfigError, load_config, reference_barrier

EXIT_OK, EXIT_CHECK_FAILED, EXIT_BAD_INPUT = 0, 1, 2
FAST_GRID_POINTS = 200

log = logging.getLogger("passage_time")


class InputError(Exception):
    pass


def _num(v):
    return f"{float(v):.12e}"


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    log.info("wrote %s", path)


def _setup(args):
    if args.config:
        try:
            cfg = load_config(args.config)
            tol = verify.Tolerances.from_mapping(cfg.tolerances)
        except (BarrierConfigError, ValueError) as exc:
            raise InputError(str(exc)) from None
        b = cfg.barrier
    else:
        b, tol = reference_barrier(), verify.Tolerances()
    if args.grid_points is not None and args.grid_points < 3:
        raise InputError("--grid-points must be >= 3")
    if args.t_max_over_tf is not None and args.t_max_over_tf <= 0.05:
        raise InputError("--t-max-over-tf must exceed 0.05")
    n = args.grid_points or (FAST_GRID_POINTS if args.fast else 2000)
    grid = verify.default_grid(b, n, args.t_max_over_tf or 10.0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return b, tol, grid, out


def cmd_poles(args):
    b, _, _, out = _setup(args)
    n = args.n_poles if args.n_poles is not None else (50 if args.fast else 200)
    if n < 1:
        raise InputError("--n-poles must be >= 1")
    p = resonances.find_poles(b, n)
    rows = []
    for idx, kn, rn in zip(*p.signed()[:3]):
        check = resonances.residue_contour(kn, b)
        rows.append([int(idx), _num(kn.real), _num(kn.imag), _num(rn.real), _num(rn.imag),
                     _num(abs(check - rn) / abs(rn))])
    _write_csv(out / "poles.csv",
               ["n", "Re_kn_per_nm", "Im_kn_per_nm", "Re_rn", "Im_rn", "residue_check_relerr"], rows)
    return EXIT_OK


def _psi_rows(curve, b):
    return [[_num(t), _num(t / b.t_f), _num(v.real), _num(v.imag), _num(a), curve.route]
            for t, v, a in zip(curve.grid, curve.values, curve.normalized)]


PSI_HEADER = ["t_fs", "t_over_tf", "re_psi", "im_psi", "abs2_norm", "route"]
GP_HEADER = ["t_fs", "t_over_tf", "gp", "quad_err_est"]


def cmd_evolve(args):
    b, tol, grid, out = _setup(args)
    x = b.d if args.x is None else args.x
    if x < b.d:
        raise InputError("--x must be >= d")
    routes = shutter.ROUTES if args.route == "both" else (args.route,)
    rows = []
    for route in routes:
        kw = {"tol": tol.pole_truncation} if route == "pole-expansion" else {}
        rows += _psi_rows(shutter.psi_curve(x, grid, b, route=route, **kw), b)
    _write_csv(out / "psi.csv", PSI_HEADER, rows)
    return EXIT_OK


def _gp_rows(grid, values, errors, b):
    return [[_num(t), _num(t / b.t_f), _num(g), _num(e)] for t, g, e in zip(grid, values, errors)]


def cmd_gp(args):
    b, _, grid, out = _setup(args)
    c = histories.gp_curve(grid, b)
    _write_csv(out / "gp.csv", GP_HEADER, _gp_rows(c.grid, c.values, c.errors, b))
    return EXIT_OK


def cmd_verify(args):
    b, tol, grid, out = _setup(args)
    rep = verify.equivalence_report(b, grid, tol)
    psi = rep.curves["psi"]
    _write_csv(out / "psi.csv", PSI_HEADER, _psi_rows(psi, b))
    gp = rep.curves["gp"]
    _write_csv(out / "gp.csv", GP_HEADER, _gp_rows(grid, gp, rep.curves["gp_err"], b))
    (out / "report.txt").write_text(rep.to_text())
    (out / "report.kv").write_text(rep.to_kv())
    sys.stdout.write(rep.to_text())
    return EXIT_OK if rep.passed else EXIT_CHECK_FAILED


def cmd_selftest(args):
    b, tol, _, out = _setup(args)
    # the reference barrier is always used; only the constants come from --config
    rep = verify.selftest(fast=args.fast, units=b.units, tolerances=tol)
    sys.stdout.write(rep.to_text())
    (out / "selftest.kv").write_text(rep.to_kv())
    return EXIT_OK if rep.passed else EXIT_CHECK_FAILED


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value barrier file (default: the GaAs-like example)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--grid-points", type=int, help="number of time points (default 2000)")
    common.add_argument("--t-max-over-tf", type=float, help="grid end in units of t_f (default 10)")
    common.add_argument("--fast", action="store_true", help="smaller grids and sample counts")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="passage-time", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("poles", parents=[common], help="complex poles and residues of T(k)")
    sp.add_argument("--n-poles", type=int)
    sp.set_defaults(func=cmd_poles)
    sp = sub.add_parser("evolve", parents=[common], help="Psi(x, t) on the time grid")
    sp.add_argument("--route", choices=[*shutter.ROUTES, "both"], default="pole-expansion")
    sp.add_argument("--x", type=float, help="observation point in nm (default d)")
    sp.set_defaults(func=cmd_evolve)
    sp = sub.add_parser("gp", parents=[common], help="passage-time function G_p on the time grid")
    sp.set_defaults(func=cmd_gp)
    sp = sub.add_parser("verify", parents=[common], help="equivalence report")
    sp.set_defaults(func=cmd_verify)
    sp = sub.add_parser("selftest", parents=[common], help="oracle checks")
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except InputError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())

"""
Command-line surface: solve / verify / balance / example / export-obj.

Exit codes: 0 success, 1 input error, 2 solver stall (partial outputs are
still written).  PMC_THREADS caps BLAS-level parallelism and must be applied
before numpy is first imported, so this module defers all heavy imports to
run time.
"""

from __future__ import annotations

import argparse
import os
import sys


def _apply_thread_cap():
    cap = os.environ.get("PMC_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, cap)


class _Parser(argparse.ArgumentParser):
    """argparse, but usage errors exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="pmc", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="continuation solve for a target H")
    ps.add_argument("--h-target", required=True, help="scalar HarmonicField JSON")
    ps.add_argument("--L", type=int, default=24)
    ps.add_argument("--tol", type=float, default=1e-8)
    ps.add_argument("--steps", type=int, default=10)
    ps.add_argument("--out-dir", default="pmc_out")

    pv = sub.add_parser("verify", help="verification report for an immersion")
    pv.add_argument("--immersion", required=True, help="3-component field JSON")
    pv.add_argument("--L", type=int, default=48)
    pv.add_argument("--out-dir", default=None)

    pb = sub.add_parser("balance", help="canonical balanced representative")
    pb.add_argument("--h", required=True, help="scalar HarmonicField JSON")
    pb.add_argument("--weight", required=True,
                    help="'round' or a scalar field JSON of dV/dV_round")
    pb.add_argument("--L", type=int, default=24)
    pb.add_argument("--out-dir", default=None)

    pe = sub.add_parser("example", help="explicit minimal-surface families")
    pe.add_argument("--family", required=True, choices=["enneper", "odd", "even"])
    pe.add_argument("--param", required=True,
                    help="t for enneper, integer k for odd/even")
    pe.add_argument("--radius", type=float, default=2.0)
    pe.add_argument("--blowdown", type=float, default=1.0,
                    help="blow-down parameter t for odd/even families")
    pe.add_argument("--out-dir", default="pmc_out")

    po = sub.add_parser("export-obj", help="OBJ mesh of a sphere immersion")
    po.add_argument("--in", dest="infile", required=True)
    po.add_argument("--out", required=True)
    po.add_argument("--L", type=int, default=None)
    return p


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _cmd_solve(args) -> int:
    import numpy as np

    from .serialize import (affine_to_dict, field_to_dict, load_field,
                            write_json, write_manifest)
    from .solver import SolverConfig, solve_pmc

    field = load_field(args.h_target)
    if field.n_components != 1:
        from .errors import InputError

        raise InputError("--h-target must be a scalar (1-component) field")
    config = SolverConfig(degree=args.L, tol=args.tol, steps=args.steps)
    result = solve_pmc(field, config)

    out = _ensure_dir(args.out_dir)
    paths = []
    for name, obj in (
        ("solution.json", field_to_dict(result.field)),
        ("affine.json", affine_to_dict(result.affine)),
        ("report.json", result.report),
    ):
        path = os.path.join(out, name)
        write_json(obj, path)
        paths.append(path)
    write_manifest(
        out, "solve",
        {"L": args.L, "tol": args.tol, "steps": args.steps},
        [args.h_target], paths,
        {"status": result.status,
         "residual_norm": result.state.residual_norm,
         "wall_time": result.wall_time},
    )
    b = result.affine.b
    print(f"status: {result.status}")
    print(f"ell: a={np.linalg.norm(b):.12g} b=({b[0]:.12g}, {b[1]:.12g}, {b[2]:.12g})")
    print(f"final residual: {result.state.residual_norm:.3e}")
    return 0 if result.status == "converged" else 2


def _cmd_verify(args) -> int:
    from .errors import InputError
    from .geometry import ImmersionField, verify
    from .grid import SphericalGrid
    from .serialize import dumps, load_field, write_json, write_manifest

    field = load_field(args.immersion)
    if field.n_components != 3:
        raise InputError("--immersion must be a 3-component field")
    grid = SphericalGrid(max(args.L, field.degree))
    report = verify(ImmersionField(field, grid), grid)
    print(dumps(report))
    if args.out_dir:
        out = _ensure_dir(args.out_dir)
        path = os.path.join(out, "report.json")
        write_json(report, path)
        write_manifest(out, "verify", {"L": args.L}, [args.immersion], [path],
                       {"gauss_identity": report["gauss_identity"]})
    return 0


def _cmd_balance(args) -> int:
    import numpy as np

    from .affine import canonical_representative
    from .errors import InputError
    from .grid import SphericalGrid, analyze, synthesize
    from .serialize import (affine_to_dict, field_to_dict, load_field,
                            write_json, write_manifest)

    h_field = load_field(args.h)
    if h_field.n_components != 1:
        raise InputError("--h must be a scalar field")
    grid = SphericalGrid(max(args.L, h_field.degree))
    H = synthesize(h_field.truncated(grid.L), grid)
    if args.weight == "round":
        weight = np.ones_like(H)
    else:
        w_field = load_field(args.weight)
        if w_field.n_components != 1:
            raise InputError("--weight must be a scalar field or 'round'")
        weight = synthesize(w_field.truncated(grid.L), grid)
    H_rep, ell = canonical_representative(H, weight, grid)
    b = ell.b
    spread = float(np.max(H_rep) - np.min(H_rep))
    print(f"b = ({b[0]:.12g}, {b[1]:.12g}, {b[2]:.12g})")
    if spread < 1e-10:
        print(f"H_rep = {np.mean(H_rep):.12g} (constant)")
    else:
        print(f"H_rep range: [{np.min(H_rep):.12g}, {np.max(H_rep):.12g}]")
    if args.out_dir:
        out = _ensure_dir(args.out_dir)
        paths = []
        for name, obj in (
            ("affine.json", affine_to_dict(ell)),
            ("balanced.json", field_to_dict(analyze(H_rep, grid))),
        ):
            path = os.path.join(out, name)
            write_json(obj, path)
            paths.append(path)
        inputs = [args.h] + ([] if args.weight == "round" else [args.weight])
        write_manifest(out, "balance", {"L": args.L, "weight": args.weight},
                       inputs, paths, {"spread": spread})
    return 0


def _cmd_example(args) -> int:
    from .errors import InputError
    from .planar import DiskGrid, enneper_blowdown, weierstrass_family
    from .serialize import export_obj, write_json, write_manifest

    grid = DiskGrid(args.radius, n_r=96, n_phi=96)
    if args.family == "enneper":
        t = float(args.param)
        surface = enneper_blowdown(t, grid)
        label = f"enneper_t{t:g}"
    else:
        try:
            k = int(args.param)
        except ValueError as err:
            raise InputError("--param must be an integer k for odd/even") from err
        surface = weierstrass_family(args.family, k, grid, t=args.blowdown)
        label = f"{args.family}_k{k}"
    out = _ensure_dir(args.out_dir)
    import numpy as np

    obj_path = os.path.join(out, f"{label}.obj")
    export_obj(surface, obj_path)
    summary = {
        "family": args.family,
        "param": args.param,
        "radius": args.radius,
        "blowdown": args.blowdown,
        "max_abs_H": float(np.nanmax(np.abs(surface.mean_curvature))),
        "max_conformality": float(np.max(np.abs(surface.conformality_residual()))),
    }
    sum_path = os.path.join(out, f"{label}.json")
    write_json(summary, sum_path)
    write_manifest(out, "example",
                   {"family": args.family, "param": args.param,
                    "radius": args.radius, "blowdown": args.blowdown},
                   [], [obj_path, sum_path], summary)
    print(f"wrote {obj_path}")
    return 0


def _cmd_export_obj(args) -> int:
    from .errors import InputError
    from .grid import SphericalGrid
    from .serialize import export_obj, load_field

    field = load_field(args.infile)
    if field.n_components != 3:
        raise InputError("--in must be a 3-component immersion field")
    L = args.L if args.L is not None else max(field.degree, 8)
    export_obj(field, args.out, SphericalGrid(L))
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "verify": _cmd_verify,
    "balance": _cmd_balance,
    "example": _cmd_example,
    "export-obj": _cmd_export_obj,
}


def cli_dispatch(argv) -> int:
    """Parse and run; returns the process exit code."""
    _apply_thread_cap()
    args = _build_parser().parse_args(argv)
    from .errors import ConfigurationError, DataError, InputError

    try:
        return _COMMANDS[args.command](args)
    except (InputError, ConfigurationError, DataError) as err:
        sys.stderr.write(f"error: {err}\n")
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

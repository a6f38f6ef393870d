"""Command-line entry point: run flows, convergence sweeps, mesh generation."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path


from . import io as gio
from .diagnostics import ConvergenceTable, fit_order
from .errors import ConfigError, FlowError, GeomflowError
from .geometry import (
    ShapeSpec,
    exact_distance,
    generate,
    reference_for_shape,
)
from .mesh import mesh_size
from .schemes import run_flow

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2


def _default_jobs():
    try:
        return max(1, int(os.environ.get("GEOMFLOW_JOBS", "1")))
    except ValueError:
        return 1


def _apply_overrides(config_data, overrides):
    """Apply --set key=value pairs (dotted keys reach into sections)."""
    import ast

    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = ast.literal_eval(raw)
        except (ValueError, SyntaxError):
            value = raw
        target = config_data
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = value
    return config_data


def _load_config(path, overrides):
    import tomli

    with open(path, "rb") as fh:
        data = tomli.load(fh)
    if overrides:
        data = _apply_overrides(data, overrides)
    return gio.parse_config(data)


def _build_initial_mesh(run_config):
    if run_config.shape is not None:
        return generate(run_config.shape)
    return gio.read_mesh(run_config.mesh_path)


def cmd_run(args):
    cfg = _load_config(args.config, args.set or [])
    mesh = _build_initial_mesh(cfg)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    frame_formats = [f for f in cfg.formats if f in ("obj", "vtk")]

    def frame_hook(record, m, sol):
        if record.step % cfg.frame_every:
            return
        data = None
        if sol is not None:
            data = {"lambda": sol.lam, "velocity": sol.v,
                    "tangent_deviation": sol.tangential.T}
        for fmt in frame_formats:
            gio.write_mesh(m, outdir / f"{cfg.name}_{record.step:06d}.{fmt}",
                           fmt, point_data=data if fmt == "vtk" else None)

    hooks = [frame_hook] if frame_formats else []
    try:
        result = run_flow(mesh, cfg.scheme, cfg.t_end, hooks=hooks)
    except FlowError as exc:
        gio.write_series(exc.records, outdir / "series.csv")
        print(f"solver failure at step {exc.step}: {exc.cause}", file=sys.stderr)
        return EXIT_SOLVER
    gio.write_series(result.records, outdir / "series.csv")
    last = result.records[-1]
    print(f"{cfg.name}: {result.status} after {result.steps} steps "
          f"(t={last.t:g}, area={last.area:.6g}, energy={last.energy:.6g}, "
          f"edge_ratio={last.edge_ratio:.3g})")
    return EXIT_OK


def _sweep_error(run_config, shape, tau):
    scheme = run_config.scheme
    ref = reference_for_shape(shape, scheme.flow)
    if ref is None:
        raise ConfigError(f"no exact reference for shape {shape.kind!r} "
                          f"under {scheme.flow}")
    mesh = generate(shape)
    from dataclasses import replace

    cfg = replace(scheme, tau=None, tau_schedule=[(0.0, tau)])
    err = [exact_distance(mesh, ref, 0.0)]

    def track(record, m, sol):
        err[0] = max(err[0], exact_distance(m, ref, record.t))

    run_flow(mesh, cfg, run_config.t_end, hooks=[track], record_initial=False)
    return err[0]


def _refine_shape(shape, level):
    params = dict(shape.params)
    if shape.kind in ("circle", "polygon", "half_circle", "grim_reaper"):
        params["n"] = int(params.get("n", 16)) * 2 ** level
    elif shape.kind in ("sphere", "half_sphere"):
        params["refinement"] = int(params.get("refinement", 2)) + level
    elif shape.kind == "box":
        params["mesh_size"] = float(params.get("mesh_size", 0.2)) / 2 ** level
    else:
        raise ConfigError(f"shape {shape.kind!r} has no refinement ladder")
    return ShapeSpec(shape.kind, params)


def cmd_convergence(args):
    cfg = _load_config(args.config, args.set or [])
    if cfg.shape is None:
        raise ConfigError("convergence sweeps need a [shape] section")
    base_tau = cfg.scheme.tau_schedule[0][1]
    jobs = args.jobs or _default_jobs()
    rows = []
    if args.axis == "space":
        shapes = [_refine_shape(cfg.shape, lvl) for lvl in range(args.levels)]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            errs = list(pool.map(lambda s: _sweep_error(cfg, s, base_tau), shapes))
        params = [mesh_size(generate(s)) for s in shapes]
        rows = list(zip(params, errs))
    else:
        taus = [base_tau / 2 ** lvl for lvl in range(args.levels)]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            errs = list(pool.map(lambda t: _sweep_error(cfg, cfg.shape, t), taus))
        rows = list(zip(taus, errs))
    table = ConvergenceTable.from_rows(rows, label=f"{cfg.name} {args.axis}")
    slope, eoc = fit_order(table)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    gio.write_convergence_table(table, slope, outdir / f"convergence_{args.axis}.csv")
    print(f"{args.axis} sweep over {args.levels} levels: fitted order {slope:.3f} "
          f"(pairwise {', '.join(f'{x:.3f}' for x in eoc)})")
    return EXIT_OK


_MESHGEN_SHAPES = {
    "circle": "circle", "half-circle": "half_circle", "polygon": "polygon",
    "grim-reaper": "grim_reaper", "sphere": "sphere", "half-sphere": "half_sphere",
    "torus-perturbed": "torus_perturbed", "dumbbell": "dumbbell", "box": "box",
}


def cmd_meshgen(args):
    kind = _MESHGEN_SHAPES.get(args.shape, args.shape)
    params = {}
    if args.dims:
        if kind != "box":
            raise ConfigError("dimensions apply to box shapes only")
        params["dims"] = args.dims
    if args.level is not None:
        params["refinement" if kind in ("sphere", "half_sphere") else "n"] = args.level
    if args.n is not None:
        params["n"] = args.n
    if args.mesh_size is not None:
        params["mesh_size"] = args.mesh_size
    if args.open_bottom:
        params["open"] = True
    mesh = generate(ShapeSpec(kind, params))
    gio.write_mesh(mesh, args.output)
    print(f"wrote {args.output}: {mesh.n_vertices} vertices, "
          f"{mesh.n_elements} elements ({mesh.boundary_kind})")
    return EXIT_OK


def cmd_experiments(args):
    from .experiments import reproduce

    report = reproduce(args.id, scale=args.scale, output_dir=args.output,
                       jobs=args.jobs or _default_jobs())
    for check in report["checks"]:
        mark = "PASS" if check["passed"] else "FAIL"
        crit = f" [criterion {check['criterion']}]" if "criterion" in check else ""
        print(f"{mark}{crit} {check['name']}")
    print(f"{report['experiment']} ({report['scale']}): "
          f"{'all checks passed' if report['passed'] else 'CHECKS FAILED'}")
    return EXIT_OK if report["passed"] else EXIT_SOLVER


def build_parser():
    parser = argparse.ArgumentParser(
        prog="geomflow",
        description="Curvature-driven surface evolution with parametric finite elements",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured flow")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (dotted keys reach sections)")
    p_run.set_defaults(func=cmd_run)

    p_conv = sub.add_parser("convergence", help="refinement sweep against the exact solution")
    p_conv.add_argument("--config", required=True)
    p_conv.add_argument("--axis", choices=("space", "time"), required=True)
    p_conv.add_argument("--levels", type=int, default=4)
    p_conv.add_argument("--jobs", type=int, default=None)
    p_conv.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_conv.set_defaults(func=cmd_convergence)

    p_mesh = sub.add_parser("meshgen", help="generate an initial mesh file")
    p_mesh.add_argument("shape")
    p_mesh.add_argument("dims", nargs="*", type=float,
                        help="box dimensions (w l h)")
    p_mesh.add_argument("--level", type=int, default=None,
                        help="refinement level / node count")
    p_mesh.add_argument("--n", type=int, default=None)
    p_mesh.add_argument("--mesh-size", type=float, default=None)
    p_mesh.add_argument("--open", dest="open_bottom", action="store_true",
                        help="remove the bottom face (contact-line box)")
    p_mesh.add_argument("-o", "--output", required=True)
    p_mesh.set_defaults(func=cmd_meshgen)

    p_exp = sub.add_parser("experiments", help="run packaged benchmark reproductions")
    exp_sub = p_exp.add_subparsers(dest="action", required=True)
    p_exp_run = exp_sub.add_parser("run")
    p_exp_run.add_argument("id")
    p_exp_run.add_argument("--scale", choices=("desk", "paper"), default="desk")
    p_exp_run.add_argument("--output", default="out")
    p_exp_run.add_argument("--jobs", type=int, default=None)
    p_exp_run.set_defaults(func=cmd_experiments)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GeomflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

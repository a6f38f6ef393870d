"""Run configuration files, mesh readers/writers and time-series CSV output.

Config files are TOML.  Top-level keys mirror :class:`~geomflow.schemes.SchemeConfig`
plus run control (``t_end``, ``output_dir``, ``frame_every``, ``formats``) and
either a ``mesh`` path or a ``[shape]`` table; ``[compensation]`` is optional.
Unknown keys are rejected.

Meshes are written as OBJ (``v``/``l``/``f`` records, 1-based, 17 significant
digits so coordinates round-trip bit-exactly) or legacy ASCII VTK POLYDATA
with optional point data; OBJ and OFF files can be read back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .errors import ConfigError, MeshError
from .geometry import ShapeSpec
from .mesh import CLOSED, OPEN_SUBSTRATE, OPEN_VERTICAL_LINES, Mesh, build_mesh
from .schemes import Compensation, SchemeConfig

_TOP_KEYS = {
    "name", "flow", "geometry", "method", "alpha", "tau", "tau_schedule",
    "sigma", "theta", "conormal_mode", "formulation", "t_degenerate_eps",
    "t_end", "output_dir", "frame_every", "formats", "mesh", "boundary_kind",
}
_SHAPE_KEYS = {
    "kind", "n", "radius", "center", "profile", "power", "a", "y0",
    "refinement", "n_theta", "n_phi", "n_rings", "dims", "mesh_size", "open",
}
_COMP_KEYS = {"t_activate", "reference_area"}
_FORMATS = {"obj", "vtk", "csv"}


@dataclass
class RunConfig:
    """Everything needed to execute one flow run."""

    scheme: SchemeConfig
    t_end: float
    shape: ShapeSpec | None = None
    mesh_path: str | None = None
    boundary_kind: str = CLOSED
    output_dir: str = "out"
    frame_every: int = 1
    formats: tuple = ("csv",)
    name: str = "run"

    def __post_init__(self):
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive")
        if self.frame_every < 1:
            raise ConfigError("frame_every must be >= 1")
        bad = set(self.formats) - _FORMATS
        if bad:
            raise ConfigError(f"unknown output formats: {sorted(bad)}")
        if (self.shape is None) == (self.mesh_path is None):
            raise ConfigError("exactly one of [shape] or mesh path is required")


def _reject_unknown(table, allowed, where):
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {sorted(unknown)}")


def parse_config(data):
    """Build a :class:`RunConfig` from a parsed TOML mapping."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table")
    data = dict(data)
    shape_tbl = data.pop("shape", None)
    comp_tbl = data.pop("compensation", None)
    _reject_unknown(data, _TOP_KEYS, "config")

    comp = None
    if comp_tbl is not None:
        _reject_unknown(comp_tbl, _COMP_KEYS, "[compensation]")
        if "t_activate" not in comp_tbl:
            raise ConfigError("[compensation] needs t_activate")
        comp = Compensation(
            t_activate=float(comp_tbl["t_activate"]),
            reference_area=(float(comp_tbl["reference_area"])
                            if "reference_area" in comp_tbl else None),
        )

    shape = None
    if shape_tbl is not None:
        _reject_unknown(shape_tbl, _SHAPE_KEYS, "[shape]")
        if "kind" not in shape_tbl:
            raise ConfigError("[shape] needs kind")
        params = {k: v for k, v in shape_tbl.items() if k != "kind"}
        shape = ShapeSpec(shape_tbl["kind"], params)

    tau_schedule = data.get("tau_schedule", [])
    if tau_schedule:
        try:
            tau_schedule = [(float(t), float(dt)) for t, dt in tau_schedule]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"tau_schedule must be a list of [t, tau] pairs: {exc}")

    try:
        scheme = SchemeConfig(
            flow=data.get("flow", "mcf"),
            geometry=data.get("geometry", "closed"),
            method=data.get("method", "bgn_mdr"),
            alpha=float(data.get("alpha", 1.0)),
            tau=(float(data["tau"]) if "tau" in data else None),
            tau_schedule=tau_schedule,
            sigma=(float(data["sigma"]) if "sigma" in data else None),
            theta=(float(data["theta"]) if "theta" in data else None),
            compensation=comp,
            conormal_mode=data.get("conormal_mode", "semi_implicit"),
            t_degenerate_eps=float(data.get("t_degenerate_eps", 1e-12)),
            formulation=data.get("formulation", "monolithic"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    formats = data.get("formats", ["csv"])
    if isinstance(formats, str):
        formats = [formats]
    return RunConfig(
        scheme=scheme,
        t_end=float(data.get("t_end", 0.0)),
        shape=shape,
        mesh_path=data.get("mesh"),
        boundary_kind=data.get("boundary_kind", CLOSED),
        output_dir=str(data.get("output_dir", "out")),
        frame_every=int(data.get("frame_every", 1)),
        formats=tuple(formats),
        name=str(data.get("name", "run")),
    )


def read_config(path):
    """Parse and validate a TOML run configuration file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)


# -- mesh writers ----------------------------------------------------------------


def _fmt(x):
    return format(float(x), ".17g")


def write_mesh(mesh, path, fmt=None, point_data=None):
    """Write a mesh as OBJ or legacy-ASCII VTK POLYDATA.

    ``point_data`` is an optional mapping of name -> per-vertex array
    (scalars or d-vectors), emitted for VTK only.
    """
    path = Path(path)
    if fmt is None:
        fmt = path.suffix.lstrip(".").lower()
    if fmt == "obj":
        _write_obj(mesh, path)
    elif fmt == "vtk":
        _write_vtk(mesh, path, point_data or {})
    else:
        raise ValueError(f"unknown mesh format {fmt!r}")


def _points3(mesh):
    v = mesh.vertices
    if mesh.dim == 2:
        return np.column_stack([v, np.zeros(len(v))])
    return v


def _write_obj(mesh, path):
    lines = []
    for p in _points3(mesh):
        lines.append(f"v {_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}")
    tag = "l" if mesh.dim == 2 else "f"
    for el in mesh.elements:
        lines.append(tag + " " + " ".join(str(int(i) + 1) for i in el))
    path.write_text("\n".join(lines) + "\n")


def _write_vtk(mesh, path, point_data):
    v3 = _points3(mesh)
    out = [
        "# vtk DataFile Version 3.0",
        "geomflow frame",
        "ASCII",
        "DATASET POLYDATA",
        f"POINTS {len(v3)} double",
    ]
    for p in v3:
        out.append(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}")
    n_el, per = mesh.n_elements, mesh.dim
    section = "LINES" if mesh.dim == 2 else "POLYGONS"
    out.append(f"{section} {n_el} {n_el * (per + 1)}")
    for el in mesh.elements:
        out.append(f"{per} " + " ".join(str(int(i)) for i in el))
    if point_data:
        out.append(f"POINT_DATA {len(v3)}")
        for name, arr in point_data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 1:
                out.append(f"SCALARS {name} double")
                out.append("LOOKUP_TABLE default")
                out.extend(_fmt(x) for x in arr)
            else:
                out.append(f"VECTORS {name} double")
                for row in arr:
                    vec = list(row) + [0.0] * (3 - len(row))
                    out.append(" ".join(_fmt(x) for x in vec))
    path.write_text("\n".join(out) + "\n")


# -- mesh readers ----------------------------------------------------------------


def read_mesh(path, boundary_kind=None, fmt=None):
    """Read an OBJ or OFF mesh file.

    The boundary kind is inferred (closed vs. substrate) unless given.  OFF
    faces with two vertices are treated as curve segments.
    """
    path = Path(path)
    if fmt is None:
        fmt = path.suffix.lstrip(".").lower()
    if fmt == "obj":
        verts, elems = _read_obj(path)
    elif fmt == "off":
        verts, elems = _read_off(path)
    else:
        raise ValueError(f"unknown mesh format {fmt!r}")
    verts = np.asarray(verts, dtype=float)
    elems = np.asarray(elems, dtype=np.int64)
    if elems.shape[1] == 2 and np.allclose(verts[:, 2], 0.0):
        verts = verts[:, :2]
    if boundary_kind is None:
        boundary_kind = _infer_boundary_kind(verts, elems)
    return build_mesh(verts, elems, boundary_kind)


def _infer_boundary_kind(verts, elems):
    try:
        build_mesh(verts, elems, CLOSED)
        return CLOSED
    except MeshError:
        pass
    for kind in (OPEN_SUBSTRATE, OPEN_VERTICAL_LINES):
        try:
            build_mesh(verts, elems, kind)
            return kind
        except MeshError:
            continue
    raise MeshError("could not infer the boundary kind; pass boundary_kind")


def _read_obj(path):
    verts, elems = [], []
    for ln, raw in enumerate(path.read_text().splitlines(), 1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        if tag == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif tag in ("l", "f"):
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            if tag == "l" and len(idx) > 2:
                elems.extend([a, b] for a, b in zip(idx[:-1], idx[1:]))
            else:
                elems.append(idx)
        elif tag in ("vn", "vt", "o", "g", "s", "mtllib", "usemtl"):
            continue
        else:
            raise MeshError(f"{path}:{ln}: unsupported OBJ record {tag!r}")
    return verts, elems


def _read_off(path):
    tokens = []
    for raw in path.read_text().splitlines():
        body = raw.split("#", 1)[0].strip()
        if body:
            tokens.extend(body.split())
    if not tokens or tokens[0] != "OFF":
        raise MeshError(f"{path}: not an OFF file")
    nv, nf = int(tokens[1]), int(tokens[2])
    pos = 4  # skip the edge count
    verts = []
    for _ in range(nv):
        verts.append([float(x) for x in tokens[pos:pos + 3]])
        pos += 3
    elems = []
    for _ in range(nf):
        cnt = int(tokens[pos])
        elems.append([int(x) for x in tokens[pos + 1:pos + 1 + cnt]])
        pos += 1 + cnt
    return verts, elems


# -- time series -------------------------------------------------------------------

SERIES_HEADER = ("step,t,area,substrate_area,energy,T_norm,c,"
                 "lambda_min,lambda_max,max_edge,min_edge,edge_ratio")


def _cell(x):
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def write_series(records, path):
    """Write diagnostics records as CSV (one row per record, fixed header)."""
    lines = [SERIES_HEADER]
    for r in records:
        lines.append(",".join([
            str(r.step), _cell(r.t), _cell(r.area), _cell(r.substrate_area),
            _cell(r.energy), _cell(r.T_norm), _cell(r.c),
            _cell(r.lambda_min), _cell(r.lambda_max),
            _cell(r.max_edge), _cell(r.min_edge), _cell(r.edge_ratio),
        ]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_convergence_table(table, fitted, path):
    """CSV for a convergence sweep: parameter, error, and the fitted slope."""
    lines = ["parameter,error"]
    for p, e in zip(table.parameters, table.errors):
        lines.append(f"{_cell(p)},{_cell(e)}")
    lines.append(f"# fitted_order,{_cell(fitted)}")
    Path(path).write_text("\n".join(lines) + "\n")

"""Per-step measurements and convergence-order fitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import OPEN_SUBSTRATE, quality_metrics, substrate_area
from .tangential import compute_T_mu


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Scalar measurements of one flow state.

    ``energy`` is the quantity the schemes provably do not increase: the total
    measure for closed geometries, measure minus the wetting term for open
    ones.  ``substrate_area`` is populated for contact-line (3D) runs only.
    """

    step: int
    t: float
    area: float
    energy: float
    T_norm: float
    c: float
    lambda_min: float
    lambda_max: float
    max_edge: float
    min_edge: float
    edge_ratio: float
    min_element_measure: float
    substrate_area: float | None = None
    min_angle: float | None = None


def energy_value(mesh, config):
    """Flow energy of a mesh state under the given configuration."""
    area = mesh.total_measure
    if config.geometry == "closed":
        return area
    sigma = config.contact_cosine()
    if config.geometry == "open2d":
        i, j = mesh.boundary_vertices
        pi, pj = mesh.vertices[i], mesh.vertices[j]
        if mesh.boundary_kind == OPEN_SUBSTRATE:
            x_r, x_l = max(pi[0], pj[0]), min(pi[0], pj[0])
            return area - sigma * (x_r - x_l)
        # vertical guide lines: the wetting term grows with both contact heights
        return area - sigma * (pi[1] + pj[1])
    return area - sigma * substrate_area(mesh)


def measure(mesh, config, step_solution=None, t=0.0, step=0):
    """Populate a :class:`DiagnosticsRecord` for the given state.

    Pure: measuring twice yields identical records.  When ``step_solution``
    is None (initial state) the solver fields are NaN and the tangent norm is
    computed fresh from the mesh.
    """
    q = quality_metrics(mesh)
    if step_solution is not None:
        T_norm = step_solution.tangential.T_norm
        c = step_solution.c
        lam_min = float(np.min(step_solution.lam))
        lam_max = float(np.max(step_solution.lam))
    else:
        T_norm = compute_T_mu(mesh, sigma=config.contact_cosine()).T_norm
        c = float("nan")
        lam_min = float("nan")
        lam_max = float("nan")
    sub = substrate_area(mesh) if config.geometry == "open3d" else None
    return DiagnosticsRecord(
        step=step,
        t=t,
        area=mesh.total_measure,
        energy=energy_value(mesh, config),
        T_norm=T_norm,
        c=c,
        lambda_min=lam_min,
        lambda_max=lam_max,
        max_edge=q.max_edge,
        min_edge=q.min_edge,
        edge_ratio=q.edge_ratio,
        min_element_measure=q.min_element_measure,
        substrate_area=sub,
        min_angle=q.min_angle,
    )


@dataclass(frozen=True)
class ConvergenceTable:
    """Rows of (discretization parameter, error) from a refinement sweep."""

    parameters: tuple
    errors: tuple
    label: str = ""

    @classmethod
    def from_rows(cls, rows, label=""):
        params, errors = zip(*rows)
        return cls(tuple(float(p) for p in params),
                   tuple(float(e) for e in errors), label)


def fit_order(table):
    """Least-squares slope of log(error) against log(parameter).

    Requires at least three rows with strictly decreasing parameters.
    Returns ``(slope, eoc)`` with the pairwise experimental orders
    ``eoc[i] = log(e_i / e_{i+1}) / log(p_i / p_{i+1})``.
    """
    p = np.asarray(table.parameters, dtype=float)
    e = np.asarray(table.errors, dtype=float)
    if len(p) < 3:
        raise ValueError("need at least 3 rows to fit a convergence order")
    if not np.all(np.diff(p) < 0):
        raise ValueError("parameters must be strictly decreasing")
    if np.any(e <= 0):
        raise ValueError("errors must be positive for a log-log fit")
    slope = float(np.polyfit(np.log(p), np.log(e), 1)[0])
    eoc = np.log(e[:-1] / e[1:]) / np.log(p[:-1] / p[1:])
    return slope, [float(x) for x in eoc]

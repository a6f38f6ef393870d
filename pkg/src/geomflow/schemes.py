"""One-step solvers for the geometric flows and the time-stepping driver.

Each step solves a linearly implicit system on the current mesh for the
velocity ``v``, the curvature proxy ``lam`` and (for the tangentially
stabilized method) a scalar multiplier ``c`` that prescribes the velocity
component along ``-T``:

    stiffness(tau*v + id) . eta  = (lam n, eta)^h + c (T, eta)^h  [+ contact terms]
    (v.n, chi)^h + (lam, chi)^h  = 0          (mean curvature flow)
    (v.n, chi)^h + stiffness(lam) . chi = 0   (surface diffusion)
    (v, T)^h + alpha c ||T||     = 0

New vertex positions are ``x + tau*v``.  The baseline method drops the last
equation and the ``c`` coupling.  Open geometries constrain one velocity
component of the boundary nodes (trial and test space), which keeps contact
points on the substrate / guide lines exactly.

For contact lines in 3D the conormal in the boundary line integral is taken
at the midpoint between the old and new positions; the part involving the new
positions is affine in ``v`` and is assembled into the system matrix
("semi_implicit"), which is what makes the wetting energy provably
non-increasing.  The fully explicit variant ("explicit") keeps the whole term
on the right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from . import diagnostics
from .errors import (
    ConfigError,
    FlowError,
    MeshError,
    SingularMatrix,
    SolverError,
)
from .linalg import SolveReport, factorized_spd, solve, solve_rank_one_update
from .mesh import Mesh, OPEN_SUBSTRATE, boundary_edge_data, stiffness_matrix
from .tangential import boundary_functional, compute_T_mu, total_functional

FLOWS = ("mcf", "sd")
GEOMETRIES = ("closed", "open2d", "open3d")
METHODS = ("bgn_mdr", "bgn")
CONORMAL_MODES = ("semi_implicit", "explicit")
FORMULATIONS = ("monolithic", "reduced")


@dataclass(frozen=True)
class Compensation:
    """Late-time rescaling of the c-equation (shrinking-surface runs).

    Once ``t >= t_activate`` the c-term is multiplied by
    ``sqrt(area / reference_area)``; the reference is captured at activation
    when not given explicitly.
    """

    t_activate: float
    reference_area: float | None = None


@dataclass
class SchemeConfig:
    """Flow, geometry and method selection plus all step parameters."""

    flow: str
    geometry: str
    method: str = "bgn_mdr"
    alpha: float = 1.0
    tau: float | None = None
    tau_schedule: list = field(default_factory=list)  # [(t_switch, tau), ...]
    sigma: float | None = None
    theta: float | None = None
    compensation: Compensation | None = None
    conormal_mode: str = "semi_implicit"
    t_degenerate_eps: float = 1e-12
    formulation: str = "monolithic"
    solver: str = "direct_lu"

    def __post_init__(self):
        if self.flow not in FLOWS:
            raise ConfigError(f"flow must be one of {FLOWS}, got {self.flow!r}")
        if self.geometry not in GEOMETRIES:
            raise ConfigError(f"geometry must be one of {GEOMETRIES}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.conormal_mode not in CONORMAL_MODES:
            raise ConfigError(f"conormal_mode must be one of {CONORMAL_MODES}")
        if self.formulation not in FORMULATIONS:
            raise ConfigError(f"formulation must be one of {FORMULATIONS}")
        if self.formulation == "reduced" and self.flow != "mcf":
            raise ConfigError("the reduced formulation applies to mean curvature flow only")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.tau is not None and not self.tau_schedule:
            self.tau_schedule = [(0.0, float(self.tau))]
        if not self.tau_schedule:
            raise ConfigError("either tau or tau_schedule is required")
        self.tau_schedule = [(float(t), float(dt)) for t, dt in self.tau_schedule]
        if self.tau_schedule[0][0] != 0.0:
            raise ConfigError("tau_schedule must start at t=0")
        times = [t for t, _ in self.tau_schedule]
        if sorted(times) != times:
            raise ConfigError("tau_schedule switch times must be increasing")
        if any(dt <= 0 for _, dt in self.tau_schedule):
            raise ConfigError("time steps must be positive")
        if self.sigma is not None and abs(self.sigma) > 1.0:
            raise ConfigError("|sigma| must be <= 1")
        if self.sigma is not None and self.theta is not None:
            if abs(self.sigma - np.cos(self.theta)) > 1e-12:
                raise ConfigError("sigma and theta are inconsistent (sigma = cos theta)")
        if self.geometry != "closed" and self.contact_cosine() is None:
            raise ConfigError("open geometries need sigma or theta")
        if self.compensation is not None and self.compensation.t_activate < 0:
            raise ConfigError("compensation t_activate must be >= 0")

    def contact_cosine(self):
        if self.sigma is not None:
            return float(self.sigma)
        if self.theta is not None:
            return float(np.cos(self.theta))
        return None

    def tau_at(self, t):
        """Step size in force at time t (last switch with t_switch <= t)."""
        current = self.tau_schedule[0][1]
        for t_switch, dt in self.tau_schedule:
            if t >= t_switch - 1e-14:
                current = dt
        return current


@dataclass(frozen=True)
class StepSolution:
    """Velocity, curvature proxy and multiplier of one accepted time step."""

    v: np.ndarray
    lam: np.ndarray
    c: float
    tau: float
    new_positions: np.ndarray
    solve_report: SolveReport
    tangential: object


@dataclass
class FlowResult:
    """Trajectory of diagnostics records plus the final mesh and stop status."""

    records: list
    mesh: Mesh
    status: str = "completed"  # or "quality_floor"
    steps: int = 0
    message: str = ""


def _check_geometry(mesh, config):
    if config.geometry == "closed" and not mesh.is_closed:
        raise ConfigError("config says closed but the mesh has a boundary")
    if config.geometry != "closed" and mesh.is_closed:
        raise ConfigError("config says open but the mesh is closed")
    if config.geometry == "open2d" and mesh.dim != 2:
        raise ConfigError("open2d needs a curve mesh")
    if config.geometry == "open3d" and mesh.dim != 3:
        raise ConfigError("open3d needs a surface mesh")


def _free_velocity_dofs(mesh, geometry):
    J, d = mesh.n_vertices, mesh.dim
    mask = np.ones(J * d, dtype=bool)
    if geometry == "closed":
        return np.flatnonzero(mask)
    bidx = mesh.boundary_vertices
    if geometry == "open2d":
        comp = 1 if mesh.boundary_kind == OPEN_SUBSTRATE else 0
    else:
        comp = 2
    mask[np.asarray(bidx) * d + comp] = False
    return np.flatnonzero(mask)


def _normal_coupling_matrix(mesh, nu):
    """N with (N lam)[j*d+c] = lam_j * nu_j[c]; N^T v gives (v.n, chi)^h stencils."""
    J, d = mesh.n_vertices, mesh.dim
    rows = np.arange(J * d)
    cols = np.repeat(np.arange(J), d)
    return sparse.coo_matrix((nu.reshape(-1), (rows, cols)), shape=(J * d, J)).tocsr()


def _semi_implicit_conormal_matrix(mesh, cos_theta, tau):
    """Boundary-edge coupling from the midpoint conormal (z rows untouched)."""
    J, d = mesh.n_vertices, mesh.dim
    idx, _, _ = boundary_edge_data(mesh)
    gamma = cos_theta * tau / 4.0
    rows, cols, vals = [], [], []
    nb = len(idx)
    for i in range(nb):
        a, b = int(idx[i]), int(idx[(i + 1) % nb])
        for p in (a, b):
            # [(v_b - v_a) x e3] . eta_p  =  (v_b - v_a)_y eta_p_x - (v_b - v_a)_x eta_p_y
            rows += [p * d + 0, p * d + 0, p * d + 1, p * d + 1]
            cols += [b * d + 1, a * d + 1, b * d + 0, a * d + 0]
            vals += [gamma, -gamma, -gamma, gamma]
    return sparse.coo_matrix((vals, (rows, cols)), shape=(J * d, J * d)).tocsr()


def _step_engine(mesh, config, tau, tan=None, alpha_scale=1.0):
    """Assemble and solve one step of the configured scheme."""
    _check_geometry(mesh, config)
    J, d = mesh.n_vertices, mesh.dim
    sigma = config.contact_cosine()

    if tan is None:
        tan = compute_T_mu(mesh, sigma=sigma)

    K = stiffness_matrix(mesh)
    Kd = sparse.kron(K, sparse.identity(d, format="csr"), format="csr")
    L_lap = K @ mesh.vertices
    N = _normal_coupling_matrix(mesh, tan.nu)
    omega = tan.omega
    t_vec = (omega[:, None] * tan.T).reshape(-1)

    rhs_v = (-L_lap).reshape(-1).copy()
    A_vv = tau * Kd

    if config.geometry != "closed":
        bf = boundary_functional(mesh, sigma)
        rhs_v += bf.scheme_rhs.reshape(-1)
        if config.geometry == "open3d" and config.conormal_mode == "semi_implicit":
            # midpoint conormal = old conormal + (tau/2) (d_s v) x e3: the v part
            # couples boundary nodes pairwise and goes into the matrix
            A_vv = A_vv - _semi_implicit_conormal_matrix(mesh, sigma, tau)

    free = _free_velocity_dofs(mesh, config.geometry)
    A_vv = A_vv.tocsr()[free][:, free]
    N_f = N[free]
    t_f = t_vec[free]
    rhs_f = rhs_v[free]

    area = mesh.total_measure
    with_c = (config.method == "bgn_mdr"
              and tan.T_norm > config.t_degenerate_eps * np.sqrt(area))
    alpha_eff = config.alpha * alpha_scale

    if config.formulation == "reduced" and config.flow == "mcf":
        v_free, report, c = _solve_reduced_mcf(
            A_vv, N_f, t_f, rhs_f, omega, free, with_c, alpha_eff, tan, J, d)
        v = np.zeros(J * d)
        v[free] = v_free
        v = v.reshape(J, d)
        lam = -np.einsum("ij,ij->i", tan.nu, v) / omega
    else:
        if config.flow == "mcf":
            B = sparse.diags(omega)
        else:
            B = K
        blocks = [[A_vv, -N_f], [N_f.T, B]]
        rhs = [rhs_f, np.zeros(J)]
        if with_c:
            t_col = sparse.csr_matrix(t_f[:, None])
            zero_col = sparse.csr_matrix((J, 1))
            blocks[0].append(-t_col)
            blocks[1].append(zero_col)
            blocks.append([t_col.T, zero_col.T,
                           sparse.csr_matrix([[alpha_eff * tan.T_norm]])])
            rhs.append(np.zeros(1))
        A = sparse.bmat(blocks, format="csc")
        b = np.concatenate(rhs)
        try:
            x, report = solve(A, b, method=config.solver)
        except SingularMatrix as exc:
            raise _annotate_singular(exc, config) from exc
        nf = len(free)
        v = np.zeros(J * d)
        v[free] = x[:nf]
        v = v.reshape(J, d)
        lam = x[nf:nf + J]
        c = float(x[nf + J]) if with_c else 0.0

    new_positions = mesh.vertices + tau * v
    return StepSolution(v=v, lam=lam, c=c, tau=tau, new_positions=new_positions,
                        solve_report=report, tangential=tan)


def _solve_reduced_mcf(A_vv, N_f, t_f, rhs_f, omega, free, with_c, alpha_eff, tan, J, d):
    """Velocity-only form: eliminate lam nodewise, c by a rank-one update."""
    P = N_f @ sparse.diags(1.0 / omega) @ N_f.T
    A0 = (A_vv + P).tocsc()
    try:
        lu = factorized_spd(A0)
        if with_c:
            u = t_f / np.sqrt(alpha_eff * tan.T_norm)
            v_free = solve_rank_one_update(lu, u, rhs_f)
        else:
            v_free = lu.solve(rhs_f)
    except SingularMatrix:
        raise
    resid = float(np.linalg.norm(A0 @ v_free
                                 + (t_f * (t_f @ v_free) / (alpha_eff * tan.T_norm)
                                    if with_c else 0.0)
                                 - rhs_f))
    report = SolveReport(residual_norm=resid, iterations=0, method="direct_lu")
    c = float(-(t_f @ v_free) / (alpha_eff * tan.T_norm)) if with_c else 0.0
    return v_free, report, c


def _annotate_singular(exc, config):
    hints = ["check element nondegeneracy and that vertex normals span R^d"]
    if config.geometry == "open3d" and config.conormal_mode == "semi_implicit":
        hints.append("the midpoint conormal coupling can defeat solvability; "
                     "retry with conormal_mode='explicit'")
    return SingularMatrix(f"{exc} ({'; '.join(hints)})")


# -- public one-step entry points ------------------------------------------------


def _public_step(mesh, config, flow, geometry, t=0.0):
    if config.flow != flow or config.geometry != geometry:
        raise ConfigError(
            f"config is for {config.flow}/{config.geometry}, expected {flow}/{geometry}")
    alpha_scale = 1.0
    comp = config.compensation
    if comp is not None and t >= comp.t_activate and comp.reference_area:
        alpha_scale = float(np.sqrt(mesh.total_measure / comp.reference_area))
    return _step_engine(mesh, config, config.tau_at(t), alpha_scale=alpha_scale)


def step_mcf_closed(mesh, config, t=0.0):
    """One mean curvature flow step on a closed curve or surface."""
    return _public_step(mesh, config, "mcf", "closed", t)


def step_sd_closed(mesh, config, t=0.0):
    """One surface diffusion step on a closed curve or surface."""
    return _public_step(mesh, config, "sd", "closed", t)


def step_mcf_open2d(mesh, config, t=0.0):
    """One mean curvature flow step on an open curve with moving contact points."""
    return _public_step(mesh, config, "mcf", "open2d", t)


def step_sd_open2d(mesh, config, t=0.0):
    """One surface diffusion step on an open curve with moving contact points."""
    return _public_step(mesh, config, "sd", "open2d", t)


def step_mcf_open3d(mesh, config, t=0.0):
    """One mean curvature flow step on an open surface with a moving contact line."""
    return _public_step(mesh, config, "mcf", "open3d", t)


def step_sd_open3d(mesh, config, t=0.0):
    """One surface diffusion step on an open surface with a moving contact line."""
    return _public_step(mesh, config, "sd", "open3d", t)


def step_bgn(mesh, config, t=0.0):
    """One step of the baseline method (no tangential constraint equation)."""
    if config.method != "bgn":
        config = replace(config, method="bgn")
    return _step_engine(mesh, config, config.tau_at(t))


def substrate_increment(mesh, v, tau):
    """Boundary line integral of the midpoint conormal against the displacement.

    Evaluates the lumped integral of n_mid . (tau v) over the contact loop,
    where n_mid is built from the averaged old/new arc-length tangents; this
    equals the change of the wetted substrate area exactly.
    """
    idx, lengths, tangents = boundary_edge_data(mesh)
    nb = len(idx)
    disp = tau * np.asarray(v)[idx]
    total = 0.0
    pts_new = mesh.vertices[idx] + disp
    for i in range(nb):
        j = (i + 1) % nb
        e_old = mesh.vertices[idx[j]] - mesh.vertices[idx[i]]
        e_new = pts_new[j] - pts_new[i]
        half_sum = 0.5 * (e_old + e_new)  # |e| * n_mid before the cross product
        n_scaled = np.array([half_sum[1], -half_sum[0], 0.0])
        total += n_scaled @ (0.5 * (disp[i] + disp[j]))
    return float(total)


# -- time loop ---------------------------------------------------------------------


def run_flow(mesh, config, t_end, hooks=(), quality_floor=1e-14,
             record_initial=True, max_steps=None):
    """Iterate steps until t_end, a quality-floor stop, or a step failure.

    Tangential data is recomputed from each new mesh; diagnostics records are
    produced per step (plus one for the initial state) and passed to each hook
    as ``hook(record, mesh, step_solution)``.  Step failures raise
    :class:`FlowError` carrying the records so far; a mesh hitting the quality
    floor stops the run cleanly with ``status='quality_floor'``.
    """
    if t_end <= 0:
        raise ConfigError("t_end must be positive")
    records = []
    sigma = config.contact_cosine()
    comp = config.compensation
    comp_ref = comp.reference_area if comp is not None else None
    t = 0.0
    m = 0
    if record_initial:
        records.append(diagnostics.measure(mesh, config, None, t=0.0, step=0))
        for hook in hooks:
            hook(records[-1], mesh, None)
    while t < t_end - 1e-14:
        tau = min(config.tau_at(t), t_end - t)
        area_prev = mesh.total_measure
        alpha_scale = 1.0
        if comp is not None and t >= comp.t_activate - 1e-14:
            if comp_ref is None:
                comp_ref = area_prev
            alpha_scale = float(np.sqrt(area_prev / comp_ref))
        try:
            tan = compute_T_mu(mesh, sigma=sigma)
            sol = _step_engine(mesh, config, tau, tan=tan, alpha_scale=alpha_scale)
            new_mesh = mesh.moved(sol.new_positions)
        except (SolverError, MeshError) as exc:
            raise FlowError(m + 1, records, exc) from exc
        m += 1
        t += tau
        mesh = new_mesh
        records.append(diagnostics.measure(mesh, config, sol, t=t, step=m))
        for hook in hooks:
            hook(records[-1], mesh, sol)
        if mesh.element_measures.min() < quality_floor:
            return FlowResult(records, mesh, status="quality_floor", steps=m,
                              message=f"minimum element measure below {quality_floor:g}")
        if max_steps is not None and m >= max_steps:
            break
    return FlowResult(records, mesh, status="completed", steps=m)

"""Parametric finite element solver for curvature-driven surface evolution.

Closed and open curves/surfaces evolve under mean curvature flow or surface
diffusion with a tangentially stabilized, energy-stable linearly implicit
method (plus the classic baseline for comparison).  See ``demos/`` for
narrative walkthroughs and ``geomflow.experiments`` for the packaged
benchmark reproductions.
"""

from .diagnostics import ConvergenceTable, DiagnosticsRecord, fit_order, measure
from .errors import (
    ConfigError,
    DegenerateElement,
    FlowError,
    GeomflowError,
    InconsistentOrientation,
    MeshError,
    NonConvergence,
    NonManifold,
    NonSimpleBoundary,
    NotOpenMesh,
    SingularMatrix,
    VanishingVertexNormal,
)
from .geometry import ExactReference, ShapeSpec, exact_distance, generate
from .mesh import (
    CLOSED,
    OPEN_SUBSTRATE,
    OPEN_VERTICAL_LINES,
    ElementScaled,
    Mesh,
    QualityReport,
    VertexField,
    averaged_vertex_normals,
    boundary_loop,
    build_mesh,
    element_normals,
    lumped_inner_product,
    lumped_weights,
    mesh_size,
    quality_metrics,
    stiffness_action,
    stiffness_matrix,
    substrate_area,
    validate_mesh,
)
from .schemes import (
    Compensation,
    FlowResult,
    SchemeConfig,
    StepSolution,
    run_flow,
    step_bgn,
    step_mcf_closed,
    step_mcf_open2d,
    step_mcf_open3d,
    step_sd_closed,
    step_sd_open2d,
    step_sd_open3d,
    substrate_increment,
)
from .tangential import (
    BoundaryFunctional,
    TangentialData,
    boundary_functional,
    compute_T_mu,
    laplacian_functional,
    riesz_representative,
)

__version__ = "0.1.0"

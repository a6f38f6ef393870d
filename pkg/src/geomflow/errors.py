"""Exception types shared across the package."""


class GeomflowError(Exception):
    """Base class for all package errors."""


class MeshError(GeomflowError):
    """Base class for mesh construction and validation errors."""


class DegenerateElement(MeshError):
    """An element has measure <= 0 (violates the nondegeneracy assumption)."""

    def __init__(self, index, measure=None):
        self.index = index
        self.measure = measure
        msg = f"element {index} is degenerate"
        if measure is not None:
            msg += f" (measure {measure:g})"
        super().__init__(msg)


class InconsistentOrientation(MeshError):
    """Element orientations do not agree across the mesh."""


class NonManifold(MeshError):
    """An edge (d=3) or vertex (d=2) is shared by more than two elements."""


class NotOpenMesh(MeshError):
    """Operation requires an open mesh but the mesh is closed (or vice versa)."""


class NonSimpleBoundary(MeshError):
    """The mesh boundary is not a single simple loop / pair of endpoints."""


class BoundaryNotOnSubstrate(MeshError):
    """Boundary vertices do not lie on the substrate within tolerance."""


class VanishingVertexNormal(GeomflowError):
    """The area-weighted vertex normal is numerically zero at some node.

    Signals that the spanning condition on the vertex normals fails locally,
    so the per-node tangent split is not defined there.
    """

    def __init__(self, index, norm=None):
        self.index = index
        self.norm = norm
        super().__init__(f"vertex normal vanishes at node {index}")


class SolverError(GeomflowError):
    """Base class for linear solver failures."""


class SingularMatrix(SolverError):
    """Direct factorization found a pivot below threshold."""


class NonConvergence(SolverError):
    """Iterative solver did not reach the requested tolerance."""


class ConfigError(GeomflowError):
    """Invalid or inconsistent run configuration."""


class FlowError(GeomflowError):
    """A time step failed; carries the step index and diagnostics so far.

    Attributes
    ----------
    step : int
        1-based index of the failing step.
    records : list
        Diagnostics records accumulated before the failure.
    """

    def __init__(self, step, records, cause):
        self.step = step
        self.records = records
        self.cause = cause
        super().__init__(f"flow failed at step {step}: {cause}")

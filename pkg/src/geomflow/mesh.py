"""Simplicial curve/surface meshes and the lumped finite element toolbox.

A mesh is a (d-1)-dimensional simplicial complex embedded in R^d: an oriented
polyline for d=2, an oriented triangle mesh for d=3.  All fields live in the
piecewise-linear nodal space on the mesh; quadrature is vertex-lumped.  Meshes
are immutable after construction and every operation here is pure.

Orientation convention (fixed throughout the package): normals point outward.
For curves the edge normal is (-t_y, t_x) for unit tangent t, so closed curves
are ordered clockwise and open curves left-to-right; triangles are ordered
counterclockwise seen from outside; boundary loops of open surfaces run
counterclockwise seen from +z.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import (
    BoundaryNotOnSubstrate,
    DegenerateElement,
    InconsistentOrientation,
    MeshError,
    NonManifold,
    NonSimpleBoundary,
    NotOpenMesh,
    VanishingVertexNormal,
)

# boundary_kind values
CLOSED = "closed"
OPEN_SUBSTRATE = "open_substrate_z0"
OPEN_VERTICAL_LINES = "open_vertical_lines"

BOUNDARY_KINDS = (CLOSED, OPEN_SUBSTRATE, OPEN_VERTICAL_LINES)

SUBSTRATE_TOL = 1e-12
VERTEX_NORMAL_EPS = 1e-12


@dataclass(frozen=True)
class VertexField:
    """Nodal coefficients of a piecewise-linear field.

    ``values`` has shape (n_vertices,) for scalars (arity 1) or
    (n_vertices, d) for vector fields (arity d).
    """

    values: np.ndarray
    arity: int

    @classmethod
    def of(cls, mesh, values):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            arity = 1
        elif values.ndim == 2:
            arity = values.shape[1]
        else:
            raise ValueError("vertex field must be 1- or 2-dimensional")
        if values.shape[0] != mesh.n_vertices:
            raise ValueError(
                f"field has {values.shape[0]} entries, mesh has {mesh.n_vertices} vertices"
            )
        if arity not in (1, mesh.dim):
            raise ValueError(f"arity must be 1 or {mesh.dim}, got {arity}")
        if not np.all(np.isfinite(values)):
            raise ValueError("vertex field contains non-finite entries")
        return cls(values, arity)


@dataclass(frozen=True)
class ElementScaled:
    """A per-element constant factor times an (optional) nodal field.

    Represents quadrature integrands such as the piecewise normal n_h or
    products like mu_h * n_h, whose value at an element corner is the
    one-sided limit from inside that element.
    """

    element_values: np.ndarray  # (L,) or (L, d)
    nodal_values: np.ndarray | None = None  # (J,) or (J, d)


@dataclass(frozen=True)
class QualityReport:
    """Simple mesh quality metrics (edge lengths, measures, angles)."""

    max_edge: float
    min_edge: float
    edge_ratio: float
    min_element_measure: float
    min_angle: float | None = None  # radians, triangle meshes only


class Mesh:
    """Oriented simplicial curve (d=2) or surface (d=3) in R^d.

    Use :func:`build_mesh` to construct with full validation.  Vertices and
    elements are stored read-only; derived per-element data (measures,
    normals) and boundary bookkeeping are computed once at construction.
    """

    def __init__(self, vertices, elements, boundary_kind=CLOSED,
                 a_left=None, a_right=None, _topology=None):
        vertices = np.array(vertices, dtype=float, order="C", copy=True)
        elements = np.array(elements, dtype=np.int64, order="C", copy=True)
        if vertices.ndim != 2 or vertices.shape[1] not in (2, 3):
            raise MeshError("vertices must be an (n, 2) or (n, 3) array")
        self.dim = vertices.shape[1]
        if elements.ndim != 2 or elements.shape[1] != self.dim:
            raise MeshError(
                f"elements must be (m, {self.dim}) for ambient dimension {self.dim}"
            )
        if boundary_kind not in BOUNDARY_KINDS:
            raise MeshError(f"unknown boundary_kind {boundary_kind!r}")
        self.vertices = vertices
        self.elements = elements
        self.boundary_kind = boundary_kind
        self.a_left = a_left
        self.a_right = a_right
        vertices.flags.writeable = False
        elements.flags.writeable = False

        self._compute_element_geometry()
        if _topology is None:
            self._validate_topology()
        else:
            # fast path for moved(): connectivity is unchanged
            self._boundary_loops, self._endpoints = _topology
        self._check_boundary_position()

    # -- construction helpers -------------------------------------------------

    def _compute_element_geometry(self):
        v, e = self.vertices, self.elements
        if e.size and (e.min() < 0 or e.max() >= len(v)):
            raise MeshError("element index out of range")
        if self.dim == 2:
            d = v[e[:, 1]] - v[e[:, 0]]
            lengths = np.sqrt(np.einsum("ij,ij->i", d, d))
            self.element_measures = lengths
            bad = np.flatnonzero(lengths <= 0.0)
            if bad.size:
                raise DegenerateElement(int(bad[0]), float(lengths[bad[0]]))
            t = d / lengths[:, None]
            self.element_normals = np.column_stack([-t[:, 1], t[:, 0]])
        else:
            p0, p1, p2 = v[e[:, 0]], v[e[:, 1]], v[e[:, 2]]
            cr = np.cross(p1 - p0, p2 - p0)
            nrm = np.sqrt(np.einsum("ij,ij->i", cr, cr))
            self.element_measures = 0.5 * nrm
            bad = np.flatnonzero(self.element_measures <= 0.0)
            if bad.size:
                raise DegenerateElement(int(bad[0]), float(self.element_measures[bad[0]]))
            self.element_normals = cr / nrm[:, None]
        self.element_measures.flags.writeable = False
        self.element_normals.flags.writeable = False
        self.total_measure = float(np.sum(self.element_measures))

        # lumped vertex weights and area-weighted vertex normals
        d = self.dim
        omega = np.zeros(len(v))
        nu = np.zeros((len(v), d))
        w = self.element_measures / d
        for k in range(d):
            np.add.at(omega, self.elements[:, k], w)
            np.add.at(nu, self.elements[:, k], w[:, None] * self.element_normals)
        self.vertex_weights = omega
        self.vertex_nu = nu
        omega.flags.writeable = False
        nu.flags.writeable = False

    def _validate_topology(self):
        e = self.elements
        for row in e:
            if len(set(row.tolist())) != len(row):
                raise MeshError(f"repeated vertex index in element {row.tolist()}")
        if self.dim == 2:
            self._boundary_loops, self._endpoints = self._validate_polyline()
        else:
            self._boundary_loops, self._endpoints = self._validate_triangulation()
        if self.boundary_kind == CLOSED and (self._endpoints or self._boundary_loops):
            raise MeshError("boundary_kind is 'closed' but the mesh has a boundary")
        if self.boundary_kind != CLOSED and not (self._endpoints or self._boundary_loops):
            raise NotOpenMesh("boundary_kind is open but the mesh is closed")

    def _validate_polyline(self):
        e = self.elements
        n = self.n_vertices
        out_deg = np.zeros(n, dtype=int)
        in_deg = np.zeros(n, dtype=int)
        np.add.at(out_deg, e[:, 0], 1)
        np.add.at(in_deg, e[:, 1], 1)
        if out_deg.max(initial=0) > 1 or in_deg.max(initial=0) > 1:
            # a vertex used twice as tail (or head) is either non-manifold or
            # a manifold vertex traversed twice in the same direction
            deg = out_deg + in_deg
            if deg.max(initial=0) > 2:
                raise NonManifold("a polyline vertex belongs to more than two segments")
            raise InconsistentOrientation("polyline segments are not consistently ordered")
        starts = np.flatnonzero(out_deg - in_deg == 1)
        ends = np.flatnonzero(in_deg - out_deg == 1)
        isolated = np.flatnonzero((out_deg == 0) & (in_deg == 0))
        if isolated.size:
            raise MeshError("mesh has isolated vertices")
        if starts.size != ends.size:
            raise InconsistentOrientation("open chain endpoints do not pair up")
        if starts.size == 0:
            return [], []
        if starts.size > 1:
            raise NonSimpleBoundary("more than one open chain")
        # endpoints ordered along the chain: [start, end]
        return [], [int(starts[0]), int(ends[0])]

    def _validate_triangulation(self):
        e = self.elements
        directed = {}
        for idx, (a, b, c) in enumerate(e):
            for u, w in ((a, b), (b, c), (c, a)):
                key = (int(u), int(w))
                if key in directed:
                    rev = (key[1], key[0]) in directed
                    raise (NonManifold if rev else InconsistentOrientation)(
                        f"edge {key} traversed twice in the same direction"
                        if not rev else f"edge {key} shared by more than two triangles"
                    )
                directed[key] = idx
        boundary_next = {}
        for (u, w) in directed:
            if (w, u) not in directed:
                if u in boundary_next:
                    raise NonSimpleBoundary(f"boundary branches at vertex {u}")
                # boundary loop direction induced by the triangle traversal
                boundary_next[u] = w
        if not boundary_next:
            return [], []
        loops = []
        seen = set()
        for start in sorted(boundary_next):
            if start in seen:
                continue
            loop = [start]
            seen.add(start)
            cur = boundary_next[start]
            while cur != start:
                if cur in seen:
                    raise NonSimpleBoundary("boundary loop is not simple")
                loop.append(cur)
                seen.add(cur)
                cur = boundary_next[cur]
            loops.append(loop)
        if len(loops) > 1:
            raise NonSimpleBoundary(f"mesh has {len(loops)} boundary loops, expected one")
        return loops, []

    def _check_boundary_position(self):
        if self.boundary_kind == OPEN_SUBSTRATE:
            idx = self.boundary_vertices
            coord = self.vertices[idx, self.dim - 1]
            off = np.abs(coord).max(initial=0.0)
            if off > SUBSTRATE_TOL:
                raise BoundaryNotOnSubstrate(
                    f"boundary is {off:g} away from the substrate plane"
                )
        elif self.boundary_kind == OPEN_VERTICAL_LINES:
            if self.dim != 2:
                raise MeshError("open_vertical_lines applies to curves only")
            i, j = self._endpoints
            xs = sorted((self.vertices[i, 0], self.vertices[j, 0]))
            if self.a_left is None:
                self.a_left = float(xs[0])
            if self.a_right is None:
                self.a_right = float(xs[1])
            for x in xs:
                if min(abs(x - self.a_left), abs(x - self.a_right)) > SUBSTRATE_TOL:
                    raise BoundaryNotOnSubstrate(
                        f"endpoint x={x:g} not on x={self.a_left:g} or x={self.a_right:g}"
                    )

    # -- basic queries ---------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def is_closed(self):
        return not self._boundary_loops and not self._endpoints

    @property
    def boundary_vertices(self):
        """Boundary vertex indices: loop order (d=3) or [start, end] (d=2)."""
        if self.dim == 2:
            return np.asarray(self._endpoints, dtype=int)
        if not self._boundary_loops:
            return np.asarray([], dtype=int)
        return np.asarray(self._boundary_loops[0], dtype=int)

    def moved(self, new_vertices):
        """Mesh with the same connectivity at new vertex positions.

        Topology checks are skipped (connectivity is unchanged); element
        nondegeneracy is re-verified.
        """
        return Mesh(new_vertices, self.elements, self.boundary_kind,
                    self.a_left, self.a_right,
                    _topology=(self._boundary_loops, self._endpoints))

    def flipped(self):
        """Mesh with globally reversed orientation (for tests)."""
        return Mesh(self.vertices, self.elements[:, ::-1],
                    self.boundary_kind, self.a_left, self.a_right)


def build_mesh(vertices, elements, boundary_kind=CLOSED, a_left=None, a_right=None):
    """Validate and build a :class:`Mesh`.

    Raises the first problem found: ``DegenerateElement``,
    ``InconsistentOrientation``, ``NonManifold``, ``NonSimpleBoundary`` or a
    generic ``MeshError``.  Use :func:`validate_mesh` to collect all problems
    without raising.
    """
    return Mesh(vertices, elements, boundary_kind, a_left, a_right)


def validate_mesh(vertices, elements, boundary_kind=CLOSED, a_left=None, a_right=None):
    """Collect validation errors without raising; empty list means valid."""
    try:
        build_mesh(vertices, elements, boundary_kind, a_left, a_right)
    except MeshError as exc:
        return [exc]
    return []


# -- lumped quadrature ---------------------------------------------------------


def _corner_values(mesh, f):
    """Per-element corner values of an integrand, shape (L, d, arity)."""
    conn = mesh.elements
    if isinstance(f, VertexField):
        f = f.values
    if isinstance(f, ElementScaled):
        ev = np.asarray(f.element_values, dtype=float)
        if ev.shape[0] != mesh.n_elements:
            raise ValueError("element factor length does not match element count")
        if f.nodal_values is None:
            vals = np.broadcast_to(
                ev[:, None] if ev.ndim == 1 else ev[:, None, :],
                (mesh.n_elements, mesh.dim) + (() if ev.ndim == 1 else (ev.shape[1],)),
            )
        else:
            nv = np.asarray(f.nodal_values, dtype=float)
            gathered = nv[conn]  # (L, d) or (L, d, dim)
            if ev.ndim == 1 and gathered.ndim == 2:
                vals = ev[:, None] * gathered
            elif ev.ndim == 1 and gathered.ndim == 3:
                vals = ev[:, None, None] * gathered
            elif ev.ndim == 2 and gathered.ndim == 2:
                vals = ev[:, None, :] * gathered[:, :, None]
            else:
                raise ValueError("cannot multiply a vector element factor by a vector field")
        return vals if vals.ndim == 3 else vals[..., None]
    arr = np.asarray(f, dtype=float)
    if arr.shape[0] != mesh.n_vertices:
        raise ValueError("nodal field length does not match vertex count")
    gathered = arr[conn]
    return gathered if gathered.ndim == 3 else gathered[..., None]


def lumped_inner_product(mesh, f, g):
    """Vertex-lumped inner product of two integrands on the mesh.

    Each factor is a nodal field (array of shape (J,) or (J, d)), a
    :class:`VertexField`, or an :class:`ElementScaled` product; per-element
    factors are evaluated at each corner's one-sided limit.  Returns
    (1/d) * sum_l |sigma_l| * sum_k (f.g)(q_{l,k}).
    """
    fv = _corner_values(mesh, f)
    gv = _corner_values(mesh, g)
    if fv.shape[-1] != gv.shape[-1]:
        raise ValueError(f"arity mismatch: {fv.shape[-1]} vs {gv.shape[-1]}")
    return float(np.einsum("l,lkr,lkr->", mesh.element_measures, fv, gv) / mesh.dim)


def lumped_weights(mesh):
    """Per-vertex lumped weights omega_j = (1/d) * sum of adjacent measures."""
    return mesh.vertex_weights


def element_normals(mesh):
    """Unit normal per element; (-t_y, t_x) for curves, oriented cross product for triangles."""
    return mesh.element_normals


def averaged_vertex_normals(mesh):
    """Area-weighted vertex normals.

    Returns ``(nu, nhat)`` where ``nu_j = (1/d) * sum_{sigma ∋ j} |sigma| n_sigma``
    and ``nhat_j = nu_j / |nu_j|``.  Raises :class:`VanishingVertexNormal` when
    ``|nu_j| <= eps * omega_j`` at some node.
    """
    nu = mesh.vertex_nu
    norms = np.sqrt(np.einsum("ij,ij->i", nu, nu))
    bad = np.flatnonzero(norms <= VERTEX_NORMAL_EPS * mesh.vertex_weights)
    if bad.size:
        raise VanishingVertexNormal(int(bad[0]), float(norms[bad[0]]))
    return nu, nu / norms[:, None]


def stiffness_matrix(mesh):
    """Scalar stiffness matrix K with K[i,j] = integral of grad phi_i . grad phi_j."""
    e = mesh.elements
    if mesh.dim == 2:
        inv = 1.0 / mesh.element_measures
        data = np.concatenate([inv, inv, -inv, -inv])
        rows = np.concatenate([e[:, 0], e[:, 1], e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 0], e[:, 1], e[:, 1], e[:, 0]])
    else:
        v = mesh.vertices
        p0, p1, p2 = v[e[:, 0]], v[e[:, 1]], v[e[:, 2]]
        # edge opposite each local vertex, cyclic order
        E = np.stack([p2 - p1, p0 - p2, p1 - p0], axis=1)  # (L, 3, 3)
        dots = np.einsum("lik,ljk->lij", E, E)
        local = dots / (4.0 * mesh.element_measures)[:, None, None]
        rows = np.repeat(e, 3, axis=1).reshape(-1)
        cols = np.tile(e, (1, 3)).reshape(-1)
        data = local.reshape(-1)
    J = mesh.n_vertices
    return sparse.coo_matrix((data, (rows, cols)), shape=(J, J)).tocsr()


def stiffness_action(mesh, f):
    """Apply the stiffness form to a nodal field (componentwise for vectors)."""
    if isinstance(f, VertexField):
        f = f.values
    f = np.asarray(f, dtype=float)
    K = stiffness_matrix(mesh)
    return K @ f


def boundary_loop(mesh):
    """Ordered boundary vertices with their arc-length (trapezoidal) weights.

    For curves returns the two chain endpoints ``[start, end]`` with half the
    adjacent segment length each; for surfaces the single boundary loop in its
    induced traversal direction.  Raises :class:`NotOpenMesh` on closed meshes.
    """
    if mesh.is_closed:
        raise NotOpenMesh("mesh has no boundary")
    idx = mesh.boundary_vertices
    v = mesh.vertices
    if mesh.dim == 2:
        weights = mesh.vertex_weights[idx]  # endpoint weight is half its single edge
        return idx, weights
    loop = v[idx]
    edges = np.roll(loop, -1, axis=0) - loop
    lengths = np.sqrt(np.einsum("ij,ij->i", edges, edges))
    weights = 0.5 * (lengths + np.roll(lengths, 1))
    return idx, weights


def boundary_edge_data(mesh):
    """Boundary edge tangents and lengths for line integrals (d=3 only).

    Returns ``(idx, lengths, tangents)`` where edge ``i`` joins loop vertices
    ``idx[i]`` and ``idx[i+1]`` (cyclic).
    """
    if mesh.dim != 3:
        raise MeshError("boundary_edge_data is for surface meshes")
    idx, _ = boundary_loop(mesh)
    loop = mesh.vertices[idx]
    edges = np.roll(loop, -1, axis=0) - loop
    lengths = np.sqrt(np.einsum("ij,ij->i", edges, edges))
    return idx, lengths, edges / lengths[:, None]


def substrate_area(mesh):
    """Signed shoelace area of the boundary loop projected to z=0.

    Positive for the package's orientation (loop counterclockwise from +z).
    Raises :class:`BoundaryNotOnSubstrate` if the loop leaves z=0 beyond
    tolerance, :class:`NotOpenMesh` for closed meshes.
    """
    if mesh.dim != 3:
        raise MeshError("substrate_area is defined for open surface meshes")
    idx, _ = boundary_loop(mesh)
    pts = mesh.vertices[idx]
    if np.abs(pts[:, 2]).max(initial=0.0) > SUBSTRATE_TOL:
        raise BoundaryNotOnSubstrate("boundary loop is not on z=0")
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return float(0.5 * np.sum(x * yn - xn * y))


def quality_metrics(mesh):
    """Edge-length spread, minimal element measure and (d=3) minimal angle."""
    v, e = mesh.vertices, mesh.elements
    if mesh.dim == 2:
        edge_len = mesh.element_measures
        min_angle = None
    else:
        p = v[e]  # (L, 3, 3)
        d01 = p[:, 1] - p[:, 0]
        d12 = p[:, 2] - p[:, 1]
        d20 = p[:, 0] - p[:, 2]
        lengths = np.stack([
            np.linalg.norm(d01, axis=1),
            np.linalg.norm(d12, axis=1),
            np.linalg.norm(d20, axis=1),
        ], axis=1)
        edge_len = lengths.reshape(-1)
        # angle at each corner from the law of cosines
        a, b, c = lengths[:, 1], lengths[:, 2], lengths[:, 0]

        def angle(opp, s1, s2):
            cosv = (s1 ** 2 + s2 ** 2 - opp ** 2) / (2 * s1 * s2)
            return np.arccos(np.clip(cosv, -1.0, 1.0))

        angles = np.stack([angle(a, b, c), angle(b, c, a), angle(c, a, b)], axis=1)
        min_angle = float(angles.min())
    mx, mn = float(edge_len.max()), float(edge_len.min())
    return QualityReport(
        max_edge=mx,
        min_edge=mn,
        edge_ratio=mx / mn,
        min_element_measure=float(mesh.element_measures.min()),
        min_angle=min_angle,
    )


def mesh_size(mesh):
    """Mesh size h, reported as the maximum edge length."""
    return quality_metrics(mesh).max_edge

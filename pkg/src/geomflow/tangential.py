"""Tangent deviation vector, curvature proxy, and contact boundary functionals.

The discrete vector Laplacian of the position splits, node by node, into a
component along the area-weighted vertex normal (the curvature proxy ``mu``)
and a remainder ``T`` that is lumped-orthogonal to the normal direction.  ``T``
vanishes exactly on meshes whose adjacent elements are balanced (e.g. regular
polygons) and points toward the shorter side elsewhere, which is what the
schemes exploit to steer tangential motion.

Because the quadrature is vertex-lumped, the defining saddle system decouples
into independent 2x2-style problems per node with the closed-form solution

    mu_j = (L_j . nu_j) / |nu_j|^2,      T_j = (L_j - mu_j nu_j) / omega_j,

where L_j is the assembled right-hand functional, nu_j the area-weighted
vertex normal and omega_j the lumped weight.  The dense coupled solve is kept
in the test suite as an independent oracle.

For open geometries the functional gains contact-point (2D) or contact-line
(3D) corrections: minus the Young-law conormal at each boundary node.  With
contact angle theta (sigma = cos theta) the conormal is

    2D substrate      (+-sigma, -sqrt(1-sigma^2))   at the right/left endpoint,
    2D vertical lines (+-sqrt(1-sigma^2), sigma)    at the right/left endpoint,
    3D substrate      cos(theta) n_boundary - sin(theta) e3,  line-integrated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MeshError, NotOpenMesh
from .mesh import (
    OPEN_SUBSTRATE,
    averaged_vertex_normals,
    boundary_edge_data,
    stiffness_action,
)


@dataclass(frozen=True)
class TangentialData:
    """Per-node tangent split of the discrete position Laplacian.

    Invariants: ``T_j . nu_j = 0`` and ``omega_j T_j + mu_j nu_j = L_j`` at
    every node; ``T_norm**2 == sum_j omega_j |T_j|**2``.
    """

    T: np.ndarray        # (J, d) tangent deviation, dimensionless
    mu: np.ndarray       # (J,)  curvature proxy, 1/length
    nu: np.ndarray       # (J, d) area-weighted vertex normals
    omega: np.ndarray    # (J,)  lumped vertex weights
    T_norm: float        # lumped L2 norm of T


@dataclass(frozen=True)
class BoundaryFunctional:
    """Contact contributions to the position-Laplacian functional.

    ``contributions`` is a (J, d) array, zero at interior vertices, holding
    the per-node boundary corrections (minus the lumped Young-law conormal).
    ``scheme_rhs`` is the part tested against the constrained velocity space,
    i.e. what the step systems place on their right-hand side.
    """

    geometry_kind: str
    sigma: float
    contributions: np.ndarray
    scheme_rhs: np.ndarray


def laplacian_functional(mesh):
    """Per-vertex vectors of the discrete vector Laplacian of position."""
    return stiffness_action(mesh, mesh.vertices)


def riesz_representative(mesh, L):
    """Nodal field nu_h with (nu_h, eta)^(h) = sum_j L_j . eta_j for nodal eta.

    The lumped inner product is diagonal, so this is just L_j / omega_j.
    """
    L = np.asarray(L, dtype=float)
    w = mesh.vertex_weights
    return L / (w[:, None] if L.ndim == 2 else w)


def boundary_functional(mesh, sigma, kind=None, theta=None):
    """Contact-point / contact-line corrections for an open mesh.

    Parameters
    ----------
    sigma : float
        Cosine of the contact angle; must satisfy ``|sigma| <= 1``.  For 3D,
        ``theta`` may be given instead (then ``sigma = cos(theta)``).
    kind : str, optional
        Geometry kind; inferred from the mesh when omitted.
    """
    if mesh.is_closed:
        raise NotOpenMesh("boundary functional requires an open mesh")
    if sigma is None and theta is not None:
        sigma = float(np.cos(theta))
    if sigma is None or abs(sigma) > 1.0 + 1e-14:
        raise ValueError(f"sigma must satisfy |sigma| <= 1, got {sigma}")
    sigma = float(np.clip(sigma, -1.0, 1.0))
    s = float(np.sqrt(max(0.0, 1.0 - sigma * sigma)))  # sin(theta)

    J, d = mesh.n_vertices, mesh.dim
    contrib = np.zeros((J, d))
    rhs = np.zeros((J, d))

    if mesh.dim == 2:
        if kind is None:
            kind = ("open2d_substrate" if mesh.boundary_kind == OPEN_SUBSTRATE
                    else "open2d_vertical_lines")
        start, end = mesh.boundary_vertices
        if kind == "open2d_substrate":
            # right/left endpoint by x position
            if mesh.vertices[end, 0] >= mesh.vertices[start, 0]:
                right, left = end, start
            else:
                right, left = start, end
            contrib[right] = (-sigma, s)
            contrib[left] = (sigma, s)
            rhs[right, 0] = sigma
            rhs[left, 0] = -sigma
        elif kind == "open2d_vertical_lines":
            if mesh.vertices[end, 0] >= mesh.vertices[start, 0]:
                right, left = end, start
            else:
                right, left = start, end
            contrib[right] = (-s, -sigma)
            contrib[left] = (s, -sigma)
            rhs[right, 1] = sigma
            rhs[left, 1] = sigma
        else:
            raise MeshError(f"kind {kind!r} does not match a curve mesh")
        return BoundaryFunctional(kind, sigma, contrib, rhs)

    # 3D substrate: lumped line integrals over the boundary loop
    if kind is None:
        kind = "open3d"
    idx, lengths, tangents = boundary_edge_data(mesh)
    # in-plane outward normal per boundary edge: t x e3
    n_edge = np.column_stack([tangents[:, 1], -tangents[:, 0], np.zeros(len(idx))])
    half = 0.5 * lengths
    e3 = np.array([0.0, 0.0, 1.0])
    for i in range(len(idx)):
        a, b = idx[i], idx[(i + 1) % len(idx)]
        piece = half[i] * (-sigma * n_edge[i] + s * e3)
        contrib[a] += piece
        contrib[b] += piece
        rhs_piece = half[i] * sigma * n_edge[i]
        rhs[a] += rhs_piece
        rhs[b] += rhs_piece
    return BoundaryFunctional(kind, sigma, contrib, rhs)


def total_functional(mesh, sigma=None, theta=None):
    """Position-Laplacian functional plus boundary corrections (open meshes)."""
    L = laplacian_functional(mesh)
    if mesh.is_closed:
        return L, None
    bf = boundary_functional(mesh, sigma, theta=theta)
    return L + bf.contributions, bf


def compute_T_mu(mesh, L_total=None, sigma=None, theta=None):
    """Solve the lumped tangent system for (T, mu) on the current mesh.

    ``L_total`` is the assembled per-vertex functional; when omitted it is the
    position Laplacian plus, for open meshes, the boundary corrections built
    from ``sigma``/``theta``.  Raises :class:`VanishingVertexNormal` when the
    per-node split is undefined.
    """
    if L_total is None:
        L_total, _ = total_functional(mesh, sigma=sigma, theta=theta)
    L_total = np.asarray(L_total, dtype=float)
    nu, _ = averaged_vertex_normals(mesh)
    omega = mesh.vertex_weights
    nu_sq = np.einsum("ij,ij->i", nu, nu)
    mu = np.einsum("ij,ij->i", L_total, nu) / nu_sq
    T = (L_total - mu[:, None] * nu) / omega[:, None]
    T_norm = float(np.sqrt(np.sum(omega * np.einsum("ij,ij->i", T, T))))
    return TangentialData(T=T, mu=mu, nu=nu, omega=omega, T_norm=T_norm)

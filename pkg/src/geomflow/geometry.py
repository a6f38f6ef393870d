"""Initial shapes and analytic reference solutions for convergence studies."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .mesh import CLOSED, OPEN_SUBSTRATE, OPEN_VERTICAL_LINES, Mesh, build_mesh

SHAPE_KINDS = (
    "circle", "half_circle", "polygon", "grim_reaper",
    "sphere", "half_sphere", "torus_perturbed", "dumbbell", "box",
)


@dataclass(frozen=True)
class ShapeSpec:
    """A named initial shape plus its per-kind parameters."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ConfigError(f"unknown shape kind {self.kind!r}")


@dataclass(frozen=True)
class ExactReference:
    """Analytic solution used for distance errors.

    kinds: ``shrinking_circle`` (closed curve, r(t)=sqrt(r0^2-2t)),
    ``shrinking_half_circle`` (same law, contact points on the x-axis),
    ``shrinking_half_sphere`` (r(t)=sqrt(r0^2-4t)),
    ``grim_reaper_translate`` (y = -ln cos x + y0 + t).
    """

    kind: str
    radius: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    y0: float = 2.0

    def extinction_time(self):
        if self.kind in ("shrinking_circle", "shrinking_half_circle"):
            return self.radius ** 2 / 2.0
        if self.kind == "shrinking_half_sphere":
            return self.radius ** 2 / 4.0
        return np.inf

    def radius_at(self, t):
        if self.kind in ("shrinking_circle", "shrinking_half_circle"):
            return float(np.sqrt(self.radius ** 2 - 2.0 * t))
        if self.kind == "shrinking_half_sphere":
            return float(np.sqrt(self.radius ** 2 - 4.0 * t))
        raise ValueError(f"{self.kind} has no radius")


def exact_distance(mesh, reference, t):
    """Lumped-L2 norm of the nodal distance to the exact manifold at time t."""
    if t >= reference.extinction_time():
        raise ValueError(f"t={t} is past extinction of the reference")
    v = mesh.vertices
    if reference.kind in ("shrinking_circle", "shrinking_half_circle",
                          "shrinking_half_sphere"):
        c = np.asarray(reference.center[: mesh.dim])
        r = reference.radius_at(t)
        d = np.abs(np.linalg.norm(v - c, axis=1) - r)
    elif reference.kind == "grim_reaper_translate":
        d = np.abs(v[:, 1] - (-np.log(np.cos(v[:, 0])) + reference.y0 + t))
    else:
        raise ValueError(f"unknown reference kind {reference.kind!r}")
    return float(np.sqrt(np.sum(mesh.vertex_weights * d * d)))


def reference_for_shape(spec, flow):
    """The exact reference matching a generated shape, or None."""
    p = spec.params
    r = float(p.get("radius", 1.0))
    if flow == "mcf":
        if spec.kind in ("circle", "polygon"):
            return ExactReference("shrinking_circle", radius=r)
        if spec.kind == "half_circle":
            return ExactReference("shrinking_half_circle", radius=r)
        if spec.kind in ("sphere", "half_sphere"):
            return ExactReference("shrinking_half_sphere", radius=r)
        if spec.kind == "grim_reaper":
            return ExactReference("grim_reaper_translate", y0=float(p.get("y0", 2.0)))
    return None


# -- curve generators ------------------------------------------------------------


def _grading(n, profile, power=2.0):
    """Monotone parameters u_0=0..u_{n-1}=1 with the requested spacing profile."""
    u = np.linspace(0.0, 1.0, n)
    if profile in (None, "uniform"):
        return u
    if profile == "left_fine":  # spacing small at u=0, large at u=1
        return u ** power
    if profile == "right_fine":
        return 1.0 - (1.0 - u) ** power
    if profile == "endpoints_fine":  # Chebyshev-like clustering at both ends
        return 0.5 * (1.0 - np.cos(np.pi * u))
    if profile == "middle_fine":
        return (np.arccos(1.0 - 2.0 * u)) / np.pi
    raise ConfigError(f"unknown grading profile {profile!r}")


def circle_polyline(n, radius=1.0, center=(0.0, 0.0)):
    """Closed regular n-gon on a circle, ordered so normals point outward."""
    if n < 3:
        raise ConfigError("circle needs at least 3 vertices")
    # clockwise ordering => outward normals under the (-t_y, t_x) convention
    ang = -2.0 * np.pi * np.arange(n) / n
    pts = np.column_stack([np.cos(ang), np.sin(ang)]) * radius + np.asarray(center)
    segs = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])
    return build_mesh(pts, segs, CLOSED)


def half_circle_polyline(n, radius=1.0, profile="uniform", power=2.0):
    """Open half circle over the x-axis, endpoints on y=0, left to right."""
    if n < 3:
        raise ConfigError("half circle needs at least 3 vertices")
    u = _grading(n, profile, power)
    ang = np.pi * (1.0 - u)  # from pi (left endpoint) down to 0 (right endpoint)
    pts = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    pts[0, 1] = 0.0
    pts[-1, 1] = 0.0
    segs = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    return build_mesh(pts, segs, OPEN_SUBSTRATE)


def grim_reaper_curve(n, a=np.pi / 4, y0=2.0):
    """Graph y = -ln(cos x) + y0 on [-a, a], endpoints on the lines x = +-a."""
    if n < 3:
        raise ConfigError("grim reaper needs at least 3 vertices")
    x = np.linspace(-a, a, n)
    pts = np.column_stack([x, -np.log(np.cos(x)) + y0])
    segs = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    return build_mesh(pts, segs, OPEN_VERTICAL_LINES, a_left=-a, a_right=a)


# -- surface generators ------------------------------------------------------------


_OCTA_VERTS = np.array([
    [1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0], [0, 0, 1.0], [0, 0, -1.0],
])
# ccw seen from outside
_OCTA_FACES = np.array([
    [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
    [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
])


def _subdivide(verts, faces, levels, project_radius=None):
    verts = [np.asarray(p, dtype=float) for p in verts]
    faces = [tuple(f) for f in faces]
    for _ in range(levels):
        midpoint = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoint:
                p = 0.5 * (verts[i] + verts[j])
                if project_radius is not None:
                    p = p * (project_radius / np.linalg.norm(p))
                midpoint[key] = len(verts)
                verts.append(p)
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = new_faces
    pts = np.asarray(verts, dtype=float)
    if project_radius is not None:
        nrm = np.linalg.norm(pts, axis=1)
        pts = pts * (project_radius / nrm)[:, None]
    return pts, np.asarray(faces, dtype=np.int64)


def sphere_mesh(refinement=3, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Closed sphere by octahedron subdivision with radial projection."""
    pts, faces = _subdivide(_OCTA_VERTS, _OCTA_FACES, refinement, project_radius=radius)
    return build_mesh(pts + np.asarray(center), faces, CLOSED)


def half_sphere_mesh(refinement=3, radius=1.0):
    """Upper half sphere with its equator (exactly on z=0) as boundary."""
    pts, faces = _subdivide(_OCTA_VERTS, _OCTA_FACES[:4], refinement,
                            project_radius=radius)
    pts[np.abs(pts[:, 2]) < 1e-15, 2] = 0.0
    used = np.unique(faces)
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return build_mesh(pts[used], remap[faces], OPEN_SUBSTRATE)


def _grid_surface(param_fn, n_u, n_v, wrap_u, wrap_v):
    """Triangulated structured grid; param_fn maps (iu, iv) to a point."""
    nu = n_u if wrap_u else n_u + 1
    nv = n_v if wrap_v else n_v + 1
    idx = {}
    pts = []
    for iu in range(nu):
        for iv in range(nv):
            idx[(iu, iv)] = len(pts)
            pts.append(param_fn(iu, iv))
    faces = []
    for iu in range(n_u):
        for iv in range(n_v):
            a = idx[(iu % nu, iv % nv)]
            b = idx[((iu + 1) % nu, iv % nv)]
            c = idx[((iu + 1) % nu, (iv + 1) % nv)]
            d = idx[(iu % nu, (iv + 1) % nv)]
            faces.append((a, b, c))
            faces.append((a, c, d))
    return np.asarray(pts, dtype=float), np.asarray(faces, dtype=np.int64)


def perturbed_torus_mesh(n_theta=34, n_phi=22, major=1.0, minor=0.65,
                         z_wobble=0.3, z_frequency=5):
    """Torus with a vertical wobble of the tube along the big circle."""

    def point(iu, iv):
        th = 2.0 * np.pi * iu / n_theta
        ph = 2.0 * np.pi * iv / n_phi
        rad = major + minor * np.cos(ph)
        return (rad * np.cos(th), rad * np.sin(th),
                minor * np.sin(ph) + z_wobble * np.sin(z_frequency * th))

    pts, faces = _grid_surface(point, n_theta, n_phi, True, True)
    return build_mesh(pts, faces, CLOSED)


def dumbbell_mesh(n_theta=48, n_rings=40):
    """Closed dumbbell: surface of revolution r(phi) = 0.6 cos^2(phi) + 0.4.

    ``n_rings`` latitude rings between the two poles; 2 * n_theta * n_rings
    triangles in total.
    """
    pts = [(0.0, 0.0, 1.0)]
    rings = []
    for i in range(1, n_rings + 1):
        ph = np.pi * i / (n_rings + 1)
        rad = (0.6 * np.cos(ph) ** 2 + 0.4) * np.sin(ph)
        ring = []
        for j in range(n_theta):
            th = 2.0 * np.pi * j / n_theta
            ring.append(len(pts))
            pts.append((rad * np.cos(th), rad * np.sin(th), np.cos(ph)))
        rings.append(ring)
    south = len(pts)
    pts.append((0.0, 0.0, -1.0))
    faces = []
    top = rings[0]
    for j in range(n_theta):
        faces.append((0, top[j], top[(j + 1) % n_theta]))
    for i in range(len(rings) - 1):
        up, dn = rings[i], rings[i + 1]
        for j in range(n_theta):
            a, b = up[j], up[(j + 1) % n_theta]
            c, d = dn[j], dn[(j + 1) % n_theta]
            faces.append((a, c, d))
            faces.append((a, d, b))
    bottom = rings[-1]
    for j in range(n_theta):
        faces.append((south, bottom[(j + 1) % n_theta], bottom[j]))
    return build_mesh(np.asarray(pts), np.asarray(faces, dtype=np.int64), CLOSED)


def box_surface_mesh(wx=1.0, wy=6.0, wz=1.0, mesh_size=0.2, open_bottom=False):
    """Triangulated box surface.

    Closed boxes are centered at the origin.  With ``open_bottom`` the bottom
    face is removed and the box sits on z=0 (contact-line configuration).
    """
    nx = max(1, round(wx / mesh_size))
    ny = max(1, round(wy / mesh_size))
    nz = max(1, round(wz / mesh_size))
    xs = np.linspace(-wx / 2, wx / 2, nx + 1)
    ys = np.linspace(-wy / 2, wy / 2, ny + 1)
    zs = np.linspace(0.0, wz, nz + 1) if open_bottom else np.linspace(-wz / 2, wz / 2, nz + 1)

    index = {}
    pts = []

    def vid(p):
        if p not in index:
            index[p] = len(pts)
            pts.append(p)
        return index[p]

    faces = []

    def add_face(grid_u, grid_v, at, axis, flip):
        # grid over (u, v); `axis` is the constant coordinate, `at` its value
        nu_, nv_ = len(grid_u) - 1, len(grid_v) - 1
        for i in range(nu_):
            for j in range(nv_):
                corners = []
                for (du, dv) in ((0, 0), (1, 0), (1, 1), (0, 1)):
                    u, v = grid_u[i + du], grid_v[j + dv]
                    if axis == 0:      # (u, v) = (y, z)
                        p = (at, u, v)
                    elif axis == 1:    # (u, v) = (z, x)
                        p = (v, at, u)
                    else:              # (u, v) = (x, y)
                        p = (u, v, at)
                    corners.append(vid(p))
                a, b, c, d = corners
                if flip:
                    faces.append((a, d, c))
                    faces.append((a, c, b))
                else:
                    faces.append((a, b, c))
                    faces.append((a, c, d))

    # +z / -z faces: (u, v) = (x, y); outward +z face is ccw from above
    add_face(xs, ys, zs[-1], 2, flip=False)
    if not open_bottom:
        add_face(xs, ys, zs[0], 2, flip=True)
    # +x / -x faces: (u, v) = (y, z)
    add_face(ys, zs, xs[-1], 0, flip=False)
    add_face(ys, zs, xs[0], 0, flip=True)
    # +y / -y faces: (u, v) = (z, x)
    add_face(zs, xs, ys[-1], 1, flip=False)
    add_face(zs, xs, ys[0], 1, flip=True)

    kind = OPEN_SUBSTRATE if open_bottom else CLOSED
    return build_mesh(np.asarray(pts), np.asarray(faces, dtype=np.int64), kind)


def generate(spec):
    """Build the mesh described by a :class:`ShapeSpec`."""
    p = dict(spec.params)
    kind = spec.kind
    try:
        if kind in ("circle", "polygon"):
            return circle_polyline(int(p.get("n", 64)), float(p.get("radius", 1.0)),
                                   tuple(p.get("center", (0.0, 0.0))))
        if kind == "half_circle":
            return half_circle_polyline(int(p.get("n", 64)), float(p.get("radius", 1.0)),
                                        p.get("profile", "uniform"),
                                        float(p.get("power", 2.0)))
        if kind == "grim_reaper":
            return grim_reaper_curve(int(p.get("n", 31)), float(p.get("a", np.pi / 4)),
                                     float(p.get("y0", 2.0)))
        if kind == "sphere":
            return sphere_mesh(int(p.get("refinement", 3)), float(p.get("radius", 1.0)))
        if kind == "half_sphere":
            return half_sphere_mesh(int(p.get("refinement", 3)),
                                    float(p.get("radius", 1.0)))
        if kind == "torus_perturbed":
            return perturbed_torus_mesh(int(p.get("n_theta", 34)), int(p.get("n_phi", 22)))
        if kind == "dumbbell":
            return dumbbell_mesh(int(p.get("n_theta", 48)), int(p.get("n_rings", 40)))
        if kind == "box":
            dims = p.get("dims", (1.0, 6.0, 1.0))
            return box_surface_mesh(float(dims[0]), float(dims[1]), float(dims[2]),
                                    float(p.get("mesh_size", 0.2)),
                                    bool(p.get("open", False)))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid parameters for shape {kind!r}: {exc}") from exc
    raise ConfigError(f"unknown shape kind {kind!r}")

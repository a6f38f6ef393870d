"""Independent reference implementations used to cross-check the library.

Everything here is deliberately written from first principles (local
least-squares gradients, dense saddle-point assembly, explicit quadrature
loops) rather than reusing the production assembly paths.
"""

import numpy as np


def oracle_weights(mesh):
    """Lumped vertex weights by direct summation over elements."""
    d = mesh.dim
    w = np.zeros(mesh.n_vertices)
    for el, meas in zip(mesh.elements, oracle_measures(mesh)):
        for j in el:
            w[j] += meas / d
    return w


def oracle_measures(mesh):
    out = []
    v = mesh.vertices
    for el in mesh.elements:
        if mesh.dim == 2:
            out.append(np.linalg.norm(v[el[1]] - v[el[0]]))
        else:
            out.append(0.5 * np.linalg.norm(np.cross(v[el[1]] - v[el[0]],
                                                     v[el[2]] - v[el[0]])))
    return np.asarray(out)


def oracle_element_normals(mesh):
    v = mesh.vertices
    out = []
    for el in mesh.elements:
        if mesh.dim == 2:
            t = v[el[1]] - v[el[0]]
            t = t / np.linalg.norm(t)
            out.append([-t[1], t[0]])
        else:
            c = np.cross(v[el[1]] - v[el[0]], v[el[2]] - v[el[0]])
            out.append(c / np.linalg.norm(c))
    return np.asarray(out)


def oracle_nu(mesh):
    d = mesh.dim
    nu = np.zeros((mesh.n_vertices, d))
    normals = oracle_element_normals(mesh)
    measures = oracle_measures(mesh)
    for el, n, a in zip(mesh.elements, normals, measures):
        for j in el:
            nu[j] += a * n / d
    return nu


def _element_gradient(points, values):
    """Gradient of the linear interpolant on one simplex (least squares)."""
    p0 = points[0]
    A = points[1:] - p0          # (d-1, d) edge matrix
    b = values[1:] - values[0]
    # gradient lies in the element plane: g = A^T (A A^T)^{-1} b
    g = A.T @ np.linalg.solve(A @ A.T, b)
    return g


def oracle_dirichlet_energy(mesh, f):
    """I(f) = 1/2 * sum_elements |grad f|^2 * measure, componentwise."""
    f = np.asarray(f, dtype=float)
    scalar = f.ndim == 1
    comps = f[:, None] if scalar else f
    total = 0.0
    for el, meas in zip(mesh.elements, oracle_measures(mesh)):
        pts = mesh.vertices[el]
        for k in range(comps.shape[1]):
            g = _element_gradient(pts, comps[el, k])
            total += 0.5 * meas * (g @ g)
    return total


def oracle_stiffness_action(mesh, f):
    """Gradient of the Dirichlet energy by assembling per-element exactly."""
    f = np.asarray(f, dtype=float)
    scalar = f.ndim == 1
    comps = f[:, None] if scalar else f
    out = np.zeros_like(comps)
    for el, meas in zip(mesh.elements, oracle_measures(mesh)):
        pts = mesh.vertices[el]
        nloc = len(el)
        for k in range(comps.shape[1]):
            gf = _element_gradient(pts, comps[el, k])
            for a in range(nloc):
                hat = np.zeros(nloc)
                hat[a] = 1.0
                gh = _element_gradient(pts, hat)
                out[el[a], k] += meas * (gf @ gh)
    return out[:, 0] if scalar else out


def oracle_lumped_ip(mesh, f_corner, g_corner):
    """(f, g)^h from explicit per-element corner value arrays (L, d, r)."""
    total = 0.0
    for meas, fv, gv in zip(oracle_measures(mesh), f_corner, g_corner):
        total += meas / mesh.dim * np.sum(fv * gv)
    return total


def corner_values_nodal(mesh, f):
    f = np.asarray(f, dtype=float)
    vals = f[mesh.elements]
    return vals if vals.ndim == 3 else vals[..., None]

def corner_values_scaled(mesh, elem, nodal):
    elem = np.asarray(elem, dtype=float)
    nodal = np.asarray(nodal, dtype=float)
    out = []
    for l, el in enumerate(mesh.elements):
        rows = []
        for j in el:
            rows.append(elem[l] * nodal[j])
        out.append(rows)
    arr = np.asarray(out)
    return arr if arr.ndim == 3 else arr[..., None]


def oracle_tangent_dense(mesh, L_total):
    """Solve the coupled tangent system as one dense linear system.

    Unknowns: T (J*d) then mu (J).  Equations: omega_j T_j + mu_j nu_j = L_j
    (from testing with every nodal vector basis function) and nu_j . T_j = 0.
    """
    J, d = mesh.n_vertices, mesh.dim
    omega = oracle_weights(mesh)
    nu = oracle_nu(mesh)
    n = J * d + J
    A = np.zeros((n, n))
    b = np.zeros(n)
    for j in range(J):
        for c in range(d):
            row = j * d + c
            A[row, j * d + c] = omega[j]
            A[row, J * d + j] = nu[j, c]
            b[row] = L_total[j, c]
    for j in range(J):
        row = J * d + j
        A[row, j * d:(j + 1) * d] = nu[j]
    x = np.linalg.solve(A, b)
    return x[:J * d].reshape(J, d), x[J * d:]


def oracle_step_dense(mesh, config, tan, sigma_rhs=None):
    """Dense assembly and solve of one flow step (closed geometries).

    Builds the blocks from the oracle quadrature and numpy only.  Returns
    (v, lam, c).
    """
    J, d = mesh.n_vertices, mesh.dim
    omega = oracle_weights(mesh)
    nu = oracle_nu(mesh)
    tau = config.tau_schedule[0][1]

    K = np.zeros((J, J))
    for j in range(J):
        e = np.zeros(J)
        e[j] = 1.0
        K[:, j] = oracle_stiffness_action(mesh, e)
    Kd = np.kron(K, np.eye(d))
    L = oracle_stiffness_action(mesh, mesh.vertices).reshape(-1)

    N = np.zeros((J * d, J))
    for j in range(J):
        N[j * d:(j + 1) * d, j] = nu[j]
    tvec = (omega[:, None] * tan.T).reshape(-1)

    with_c = config.method == "bgn_mdr" and tan.T_norm > 1e-12
    nv = J * d
    n = nv + J + (1 if with_c else 0)
    A = np.zeros((n, n))
    b = np.zeros(n)
    A[:nv, :nv] = tau * Kd
    A[:nv, nv:nv + J] = -N
    b[:nv] = -L
    A[nv:nv + J, :nv] = N.T
    if config.flow == "mcf":
        A[nv:nv + J, nv:nv + J] = np.diag(omega)
    else:
        A[nv:nv + J, nv:nv + J] = K
    if with_c:
        A[:nv, -1] = -tvec
        A[-1, :nv] = tvec
        A[-1, -1] = config.alpha * tan.T_norm
    x = np.linalg.solve(A, b)
    v = x[:nv].reshape(J, d)
    lam = x[nv:nv + J]
    c = x[-1] if with_c else 0.0
    return v, lam, c

import numpy as np
import pytest

from geomflow import ShapeSpec, build_mesh, generate


@pytest.fixture
def diamond():
    """The minimal closed curve: 4 vertices on the axes, outward normals."""
    return generate(ShapeSpec("circle", {"n": 4}))


@pytest.fixture
def octahedron():
    return generate(ShapeSpec("sphere", {"refinement": 0}))


@pytest.fixture
def ngon32():
    return generate(ShapeSpec("circle", {"n": 32}))


@pytest.fixture
def perturbed_ngon():
    """Closed polygon with unequal edges (tangent deviation is nonzero)."""
    rng = np.random.default_rng(7)
    n = 24
    ang = -2 * np.pi * np.arange(n) / n
    ang += 0.25 * (2 * np.pi / n) * rng.uniform(-1, 1, n)
    r = 1.0 + 0.1 * rng.uniform(-1, 1, n)
    pts = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
    segs = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])
    return build_mesh(pts, segs)


@pytest.fixture
def perturbed_sphere():
    """Refined octahedron sphere with a smooth radial perturbation."""
    base = generate(ShapeSpec("sphere", {"refinement": 2}))
    v = base.vertices
    r = 1.0 + 0.1 * np.sin(3 * v[:, 0]) * np.cos(2 * v[:, 1])
    return build_mesh(v * r[:, None], base.elements)


@pytest.fixture
def half_circle_16():
    return generate(ShapeSpec("half_circle", {"n": 16}))


@pytest.fixture
def half_sphere_2():
    return generate(ShapeSpec("half_sphere", {"refinement": 2}))

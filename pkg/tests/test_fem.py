import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from hexpress.fem import (
    REFERENCE_AREA,
    REFERENCE_HEXAGON,
    ConstrainedSolver,
    ElementIntegrals,
    MaterialParams,
    SingularSystemError,
    assemble_stiffness,
    check_supports,
    element_dofs,
    element_quadrature,
    element_stiffness,
    quadrature,
    rigid_body_modes,
    shape_functions,
    shape_gradients,
    wachspress,
)
from hexpress.mesh import generate_mesh, signed_areas


def random_hexagon(rng, jitter=0.15):
    """Convex hexagon: reference vertices with perturbed radii and angles."""
    t = np.deg2rad([-90, -30, 30, 90, 150, 210]) + rng.uniform(-jitter, jitter, 6)
    r = 1 + rng.uniform(-jitter, jitter, 6)
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


def random_interior_points(coords, rng, n):
    """Uniform points in the fan triangles around the centroid."""
    g = coords.mean(axis=0)
    k = rng.integers(0, 6, n)
    s, t = rng.uniform(size=(2, n))
    flip = s + t > 1
    s[flip], t[flip] = 1 - s[flip], 1 - t[flip]
    return g + s[:, None] * (coords[k] - g) + t[:, None] * (coords[(k + 1) % 6] - g)


def polygon_moments(coords):
    """Area, int x, int x^2 and int x y of a polygon via Green's theorem."""
    x, y = coords[:, 0], coords[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    area = cr.sum() / 2
    ix = ((x + xn) * cr).sum() / 6
    ixx = ((x**2 + x * xn + xn**2) * cr).sum() / 12
    ixy = ((x * yn + 2 * x * y + 2 * xn * yn + xn * y) * cr).sum() / 24
    return area, ix, ixx, ixy


def test_kronecker_delta_at_vertices(rng):
    c = random_hexagon(rng)
    N, _ = wachspress(c, c)
    np.testing.assert_allclose(N, np.eye(6), atol=1e-14)


def test_linear_on_edges(rng):
    c = random_hexagon(rng)
    t = np.linspace(0, 1, 7)
    pts = c[2] + t[:, None] * (c[3] - c[2])
    N, _ = wachspress(c, pts)
    np.testing.assert_allclose(N[:, 2], 1 - t, atol=1e-13)
    np.testing.assert_allclose(N[:, 3], t, atol=1e-13)
    others = np.delete(N, [2, 3], axis=1)
    np.testing.assert_allclose(others, 0, atol=1e-13)


def test_gradients_match_finite_differences(rng):
    c = random_hexagon(rng)
    x = random_interior_points(c, rng, 5)
    _, dN = wachspress(c, x)
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (wachspress(c, x + e)[0] - wachspress(c, x - e)[0]) / (2 * h)
        np.testing.assert_allclose(dN[..., k], fd, atol=1e-8)


def test_gradients_reproduce_affine_gradient(rng):
    c = random_hexagon(rng)
    x = random_interior_points(c, rng, 50)
    _, dN = wachspress(c, x)
    np.testing.assert_allclose(dN.sum(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(np.einsum("qik,ij->qjk", dN, c), np.broadcast_to(np.eye(2), (50, 2, 2)),
                               atol=1e-11)


def test_outside_point_rejected():
    with pytest.raises(ValueError):
        wachspress(REFERENCE_HEXAGON, np.array([[2.0, 0.0]]))


def test_reference_helpers():
    np.testing.assert_allclose(shape_functions([0.0, 0.0]), np.full(6, 1 / 6), atol=1e-14)
    assert shape_gradients([0.1, 0.2]).shape == (6, 2)


@pytest.mark.parametrize("order", [4, 8, 12])
def test_quadrature_integrates_quadratics(order, rng):
    c = random_hexagon(rng)
    pts, w = element_quadrature(c, order)
    area, ix, ixx, ixy = polygon_moments(c)
    assert w.sum() == pytest.approx(area, rel=1e-13)
    assert w @ pts[:, 0] == pytest.approx(ix, rel=1e-12, abs=1e-14)
    assert w @ pts[:, 0] ** 2 == pytest.approx(ixx, rel=1e-12)
    assert w @ (pts[:, 0] * pts[:, 1]) == pytest.approx(ixy, rel=1e-10, abs=1e-13)


def test_reference_quadrature_area():
    _, w = quadrature()
    assert w.sum() == pytest.approx(REFERENCE_AREA, rel=1e-14)


def test_stiffness_properties(rng):
    c = random_hexagon(rng)
    k = element_stiffness(c, E=2.0, nu=0.25)
    np.testing.assert_allclose(k, k.T, atol=0)
    ev = np.linalg.eigvalsh(k)
    assert np.all(ev > -1e-12 * ev.max())
    assert np.sum(ev < 1e-10 * ev.max()) == 3
    R = rigid_body_modes(c)
    np.testing.assert_allclose(k @ R, 0, atol=1e-12 * np.abs(k).max())


def test_stiffness_quadrature_converged(rng):
    c = random_hexagon(rng)
    k12 = element_stiffness(c)
    k30 = element_stiffness(c, order=30)
    assert np.abs(k12 - k30).max() <= 1e-9 * np.abs(k30).max()


def test_stiffness_rejects_bad_elements():
    with pytest.raises(ValueError):
        element_stiffness(REFERENCE_HEXAGON[::-1])
    with pytest.raises(ValueError):
        element_stiffness(REFERENCE_HEXAGON[:5])


def test_patch_test_constant_strain():
    """Interior nodal forces of an affine displacement field vanish."""
    mesh = generate_mesh(5, 4, 1.0, 0.8)
    nodes = mesh.nodes + 0.02 * np.sin(7 * mesh.nodes[:, ::-1])  # distort the interior too
    mesh = mesh.with_nodes(nodes)
    K = assemble_stiffness(mesh, np.ones(mesh.n_el), MaterialParams(E_1=3.0, E_min=1e-3, thickness=1.0))
    G = np.array([[0.3, -0.2], [0.5, 0.1]])
    u = (nodes @ G.T).ravel()
    f = K @ u
    interior = np.setdiff1d(np.arange(mesh.n_nodes), mesh.boundary_node_ids())
    dofs = np.concatenate([2 * interior, 2 * interior + 1])
    assert np.abs(f[dofs]).max() <= 1e-10 * np.abs(f).max()


def test_integrals_reuse_identical_elements(rng):
    mesh = generate_mesh(3, 3, 0.3, 0.25)
    moved = mesh.nodes.copy()
    moved[7] += 0.004 * rng.standard_normal(2)
    mesh = mesh.with_nodes(moved)
    mat = MaterialParams(thickness=0.5)
    I = ElementIntegrals.from_mesh(mesh, mat)
    for e in range(mesh.n_el):
        k = element_stiffness(mesh.element_coords()[e], E=1.0, nu=mat.nu, thickness=mat.thickness)
        np.testing.assert_allclose(I.k0[e], k, rtol=1e-12, atol=1e-12 * np.abs(k).max())
    np.testing.assert_allclose(I.areas, signed_areas(mesh.element_coords()))
    # int N_i over the element sums to the area; int grad N_i sums to zero
    np.testing.assert_allclose(I.a_drain.sum(axis=(1, 2)), mat.thickness * I.areas, rtol=1e-12)
    np.testing.assert_allclose(I.a_flow.sum(axis=2), 0, atol=1e-12)


def test_assembly_matches_dense_loop():
    mesh = generate_mesh(3, 2, 0.3, 0.2)
    mat = MaterialParams()
    rho = np.linspace(0.1, 1, mesh.n_el)
    K = assemble_stiffness(mesh, rho, mat).toarray()
    dense = np.zeros((mesh.n_dofs, mesh.n_dofs))
    dofs = element_dofs(mesh)
    for e in range(mesh.n_el):
        ke = element_stiffness(mesh.element_coords()[e], E=mat.modulus(rho[e]), nu=mat.nu,
                               thickness=mat.thickness)
        dense[np.ix_(dofs[e], dofs[e])] += ke
    np.testing.assert_allclose(K, dense, atol=1e-9 * np.abs(dense).max())


def test_constrained_solver_matches_dense(rng):
    n = 8
    A = rng.standard_normal((n, n))
    K = A @ A.T + n * np.eye(n)
    fixed = np.array([1, 5])
    values = np.array([0.3, -0.7])
    b = rng.standard_normal(n)
    x = ConstrainedSolver(sp.csc_matrix(K), fixed, values).solve(b)
    free = np.setdiff1d(np.arange(n), fixed)
    ref = np.zeros(n)
    ref[fixed] = values
    ref[free] = np.linalg.solve(K[np.ix_(free, free)], b[free] - K[np.ix_(free, fixed)] @ values)
    np.testing.assert_allclose(x, ref, rtol=1e-12)
    x0 = ConstrainedSolver(sp.csc_matrix(K), fixed, values).solve(b, homogeneous=True)
    assert np.all(x0[fixed] == 0)


def test_check_supports():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    check_supports(nodes, [0, 1, 3])
    with pytest.raises(SingularSystemError, match="rotation"):
        check_supports(nodes, [0, 1])
    with pytest.raises(SingularSystemError):
        check_supports(nodes, [])
    with pytest.raises(SingularSystemError):
        ConstrainedSolver(sp.eye(3, format="csc"), [])


def test_material_validation():
    with pytest.raises(ValueError):
        MaterialParams(E_1=1.0, E_min=2.0)
    with pytest.raises(ValueError):
        MaterialParams(nu=0.5)
    m = MaterialParams(zeta=3)
    h = 1e-6
    assert m.dmodulus(0.4) == pytest.approx((m.modulus(0.4 + h) - m.modulus(0.4 - h)) / (2 * h), rel=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_partition_of_unity_property(seed):
    rng = np.random.default_rng(seed)
    c = random_hexagon(rng, 0.2) * rng.uniform(0.01, 100)
    x = random_interior_points(c, rng, 20)
    N, _ = wachspress(c, x)
    assert np.all(N >= -1e-14)
    np.testing.assert_allclose(N.sum(axis=1), 1, atol=1e-13)
    np.testing.assert_allclose(N @ c, x, atol=1e-12 * np.abs(c).max())

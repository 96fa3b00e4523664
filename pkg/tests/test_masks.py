import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hexpress.masks import (
    N_VARS,
    DensityField,
    Mask,
    MaskBounds,
    MaskSet,
    density_jacobian,
    element_density_wrt_mask,
    signed_measure,
)
from hexpress.mesh import generate_mesh


def test_signed_measure():
    m = Mask(1.0, 2.0, 0.5, 0.25, np.pi / 2)
    assert signed_measure(m, (1.0, 2.0)) == pytest.approx(-1.0)
    # rotated by 90 degrees: the a-axis points along y
    assert signed_measure(m, (1.0, 2.5)) == pytest.approx(0.0, abs=1e-12)
    assert signed_measure(m, (1.25, 2.0)) == pytest.approx(0.0, abs=1e-12)
    assert signed_measure(m, (3.0, 2.0)) > 0
    with pytest.raises(ValueError):
        signed_measure(Mask(0, 0, 0.0, 1.0), (0, 0))


def test_logistic_factor_is_overflow_safe():
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        v = element_density_wrt_mask(1e4, np.array([-1.0, 0.0, 1e6]))
    np.testing.assert_allclose(v, [0.0, 0.5, 1.0], atol=1e-200)
    with pytest.raises(ValueError):
        element_density_wrt_mask(0.0, 1.0)


def test_density_product_of_factors():
    pts = np.array([[0.0, 0.0], [0.3, 0.1], [2.0, 2.0]])
    P = np.array([[0.0, 0.0, 0.5, 0.4, 0.2, 3.0, 2.0], [0.4, 0.2, 0.3, 0.3, 0.0, 5.0, 1.5]])
    ms = MaskSet(P, -np.inf, np.inf)
    rho = DensityField(ms, pts).rho
    ref = np.ones(3)
    for row in P:
        d = np.array([signed_measure(row, p) for p in pts])
        ref *= (1 / (1 + np.exp(-row[5] * d))) ** row[6]
    np.testing.assert_allclose(rho, ref, rtol=1e-13)


def test_strong_masks_do_not_underflow_to_nan():
    pts = np.zeros((1, 2))
    P = np.array([[0.0, 0.0, 1.0, 1.0, 0.0, 1e5, 50.0]] * 3)
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        f = DensityField(MaskSet(P, -np.inf, np.inf), pts)
        g = f.vjp(np.ones(1))
    assert f.rho[0] == 0.0
    assert np.all(np.isfinite(g))


def _fd_jacobian(ms, pts, h=1e-7):
    psi = ms.psi
    J = np.empty((len(pts), len(psi)))
    for k in range(len(psi)):
        step = h * max(1.0, abs(psi[k]))
        p, m = psi.copy(), psi.copy()
        p[k] += step
        m[k] -= step
        J[:, k] = (DensityField(ms.with_psi(p), pts).rho - DensityField(ms.with_psi(m), pts).rho) / (2 * step)
    return J


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 1, (15, 2))
    m = 3
    P = np.column_stack([rng.uniform(0, 1, (m, 2)), rng.uniform(0.2, 0.6, (m, 2)),
                         rng.uniform(-1.5, 1.5, m), rng.uniform(1, 4, m), rng.uniform(1, 3, m)])
    ms = MaskSet(P, -np.inf, np.inf)
    f = DensityField(ms, pts)
    J = f.jacobian(prune=0.0).toarray()
    np.testing.assert_allclose(J, _fd_jacobian(ms, pts), atol=1e-6)
    g = rng.standard_normal(len(pts))
    np.testing.assert_allclose(f.vjp(g), J.T @ g, rtol=1e-12, atol=1e-14)


def test_grid_layout():
    b = MaskBounds(mR=0.1)
    ms = MaskSet.grid(4, 3, (2.0, 1.0), b, alpha=2.0, gamma=3.0)
    assert len(ms) == 12 and ms.params.shape == (12, N_VARS)
    np.testing.assert_allclose(np.unique(ms.params[:, 0]), [0.25, 0.75, 1.25, 1.75])
    np.testing.assert_allclose(np.unique(ms.params[:, 1]), [1 / 6, 0.5, 5 / 6])
    np.testing.assert_allclose(ms.params[:, 2:4], 0.05)
    assert np.all(ms.params[:, 5] == 2.0) and np.all(ms.params[:, 6] == 3.0)
    assert ms.in_bounds()
    np.testing.assert_allclose(ms.lower[0], [0, 0, 1e-4, 1e-4, -np.pi / 2, 1, 1])
    np.testing.assert_allclose(ms.upper[0], [2, 1, 0.1, 0.1, np.pi / 2, 30, 30])


def test_maskset_validation_and_roundtrip(tmp_path):
    with pytest.raises(ValueError):
        MaskSet(np.zeros((1, 7)), 1.0, 0.0)
    with pytest.raises(ValueError):
        MaskSet(np.full((1, 7), np.nan), -1, 1)
    ms = MaskSet.grid(2, 2, (1.0, 1.0), MaskBounds(mR=0.3))
    path = tmp_path / "m.txt"
    ms.save(path)
    back = MaskSet.load(path)
    np.testing.assert_array_equal(back.params, ms.params)
    np.testing.assert_array_equal(back.lower, ms.lower)
    np.testing.assert_array_equal(back.upper, ms.upper)
    np.savetxt(path, ms.params)
    assert MaskSet.load(path).in_bounds()
    np.savetxt(path, np.zeros((2, 5)))
    with pytest.raises(ValueError):
        MaskSet.load(path)


def test_density_jacobian_on_mesh():
    mesh = generate_mesh(6, 4, 0.6, 0.4)
    ms = MaskSet.grid(2, 1, mesh.domain, MaskBounds(mR=0.3))
    J = density_jacobian(ms, mesh)
    assert J.shape == (mesh.n_el, 14)
    with pytest.raises(ValueError):
        DensityField(ms.with_psi(np.where(np.arange(14) == 2, -1.0, ms.psi)), mesh.centroids())

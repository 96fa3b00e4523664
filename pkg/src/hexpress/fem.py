"""Wachspress hexagonal elements: shape functions, quadrature, element
matrices, global assembly and constrained linear solves."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import HexMesh, signed_areas

# Regular hexagon with unit circumradius, same vertex order as the mesh.
REFERENCE_HEXAGON = np.array(
    [[np.cos(t), np.sin(t)] for t in np.deg2rad([-90, -30, 30, 90, 150, 210])]
)
REFERENCE_AREA = 1.5 * np.sqrt(3.0)

DEFAULT_QUADRATURE_ORDER = 12


class SingularSystemError(RuntimeError):
    """Raised when boundary conditions leave a zero-energy mode."""


@dataclass(frozen=True)
class MaterialParams:
    E_1: float = 1e7
    E_min: float = 1e1
    zeta: float = 1.0
    nu: float = 0.3
    thickness: float = 1e-3

    def __post_init__(self):
        if not self.E_1 > self.E_min > 0:
            raise ValueError("need E_1 > E_min > 0")
        if self.zeta < 1:
            raise ValueError("penalty exponent must be >= 1")
        if not 0 <= self.nu < 0.5:
            raise ValueError("Poisson ratio must lie in [0, 0.5)")
        if self.thickness <= 0:
            raise ValueError("thickness must be positive")

    def modulus(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.E_min + rho**self.zeta * (self.E_1 - self.E_min)

    def dmodulus(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.zeta == 1:
            return np.full_like(rho, self.E_1 - self.E_min)
        return self.zeta * rho ** (self.zeta - 1) * (self.E_1 - self.E_min)


# --------------------------------------------------------------------------
# Wachspress basis


def wachspress(coords: np.ndarray, points: np.ndarray, tol: float = 1e-12):
    """Wachspress values and gradients on convex hexagons.

    ``coords`` has shape (..., 6, 2) and ``points`` (..., Q, 2) with matching
    leading dimensions. Returns ``N`` of shape (..., Q, 6) and ``dN`` of shape
    (..., Q, 6, 2). Uses the product form, which stays finite on the element
    boundary.
    """
    c = np.asarray(coords, dtype=float)[..., None, :, :]  # (..., 1, 6, 2)
    x = np.asarray(points, dtype=float)[..., :, None, :]  # (..., Q, 1, 2)
    cn = np.roll(c, -1, axis=-2)
    cp = np.roll(c, 1, axis=-2)
    d0 = c - x
    d1 = cn - x
    # Signed area of (x, c_j, c_{j+1}) and its gradient with respect to x.
    A = 0.5 * (d0[..., 0] * d1[..., 1] - d0[..., 1] * d1[..., 0])  # (..., Q, 6)
    gA = 0.5 * np.stack([c[..., 1] - cn[..., 1], cn[..., 0] - c[..., 0]], axis=-1)
    gA = np.broadcast_to(gA, A.shape + (2,))
    e1 = c - cp
    e2 = cn - cp
    C = 0.5 * (e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])  # (..., 1, 6)

    scale = np.max(np.abs(A), axis=-1, keepdims=True)
    if np.any(A < -tol * scale):
        raise ValueError("point outside the element")

    n = A.shape[-1]
    w = np.empty(A.shape)
    gw = np.empty(A.shape + (2,))
    for i in range(n):
        factors = [j for j in range(n) if j not in ((i - 1) % n, i)]
        prod = np.ones(A.shape[:-1])
        for j in factors:
            prod = prod * A[..., j]
        grad = np.zeros(A.shape[:-1] + (2,))
        for j in factors:
            others = np.ones(A.shape[:-1])
            for k in factors:
                if k != j:
                    others = others * A[..., k]
            grad += others[..., None] * gA[..., j, :]
        w[..., i] = C[..., i] * prod
        gw[..., i, :] = C[..., i, None] * grad
    W = w.sum(axis=-1, keepdims=True)
    gW = gw.sum(axis=-2, keepdims=True)
    N = w / W
    dN = (gw - N[..., None] * gW) / W[..., None]
    return N, dN


def shape_functions(local_point) -> np.ndarray:
    """Wachspress functions of the reference hexagon at one point."""
    N, _ = wachspress(REFERENCE_HEXAGON, np.atleast_2d(local_point))
    return N[0]


def shape_gradients(local_point) -> np.ndarray:
    """Gradients (6, 2) of the reference Wachspress functions at one point."""
    _, dN = wachspress(REFERENCE_HEXAGON, np.atleast_2d(local_point))
    return dN[0]


# --------------------------------------------------------------------------
# Quadrature


def _gauss01(order):
    t, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (t + 1), 0.5 * w


def element_quadrature(coords: np.ndarray, order: int = DEFAULT_QUADRATURE_ORDER):
    """Centroid-fan quadrature on hexagons given as (..., 6, 2).

    Each of the six triangles (centroid, c_j, c_j+1) gets a collapsed
    Gauss-Legendre product rule with ``order`` points per direction.
    Returns points (..., Q, 2) and weights (..., Q).
    """
    c = np.asarray(coords, dtype=float)
    g = c.mean(axis=-2, keepdims=True)
    p0 = c - g
    p1 = np.roll(c, -1, axis=-2) - g
    jac = p0[..., 0] * p1[..., 1] - p0[..., 1] * p1[..., 0]  # 2 * triangle area
    s, ws = _gauss01(order)
    t, wt = _gauss01(order)
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt) * S
    S, T, W = S.ravel(), T.ravel(), W.ravel()
    # points[..., tri, q, :]
    pts = g[..., None, :, :] + S[:, None] * (
        (1 - T)[:, None] * p0[..., :, None, :] + T[:, None] * p1[..., :, None, :]
    )
    wts = jac[..., :, None] * W
    shape = c.shape[:-2]
    return pts.reshape(shape + (-1, 2)), wts.reshape(shape + (-1,))


def quadrature(order: int = DEFAULT_QUADRATURE_ORDER):
    """Quadrature points and weights on the reference hexagon."""
    return element_quadrature(REFERENCE_HEXAGON, order)


# --------------------------------------------------------------------------
# Element matrices


def plane_stress_matrix(E: float, nu: float) -> np.ndarray:
    return E / (1 - nu**2) * np.array([[1, nu, 0], [nu, 1, 0], [0, 0, 0.5 * (1 - nu)]])


def strain_displacement(dN: np.ndarray) -> np.ndarray:
    """B matrices (..., 3, 12) from shape gradients (..., 6, 2)."""
    B = np.zeros(dN.shape[:-2] + (3, 12))
    B[..., 0, 0::2] = dN[..., 0]
    B[..., 1, 1::2] = dN[..., 1]
    B[..., 2, 0::2] = dN[..., 1]
    B[..., 2, 1::2] = dN[..., 0]
    return B


def _check_elements(coords):
    areas = signed_areas(coords)
    ext = np.ptp(coords, axis=-2).max(axis=-1)
    if np.any(areas <= 1e-12 * ext**2):
        raise ValueError("degenerate or inverted element")


def element_stiffness(elem_nodes, E: float = 1.0, nu: float = 0.3, thickness: float = 1.0,
                      order: int = DEFAULT_QUADRATURE_ORDER) -> np.ndarray:
    """12x12 plane-stress stiffness matrix of one hexagon."""
    coords = np.asarray(elem_nodes, dtype=float)
    if coords.shape != (6, 2):
        raise ValueError("expected 6 nodes")
    _check_elements(coords)
    pts, wts = element_quadrature(coords, order)
    _, dN = wachspress(coords, pts)
    B = strain_displacement(dN)
    D = plane_stress_matrix(E, nu)
    k = thickness * np.einsum("q,qia,ij,qjb->ab", wts, B, D, B)
    return 0.5 * (k + k.T)


@dataclass(frozen=True)
class ElementIntegrals:
    """Density-independent element matrices for every element of a mesh.

    ``k0`` is the unit-modulus stiffness, ``a_flow`` = int Bp^T Bp,
    ``a_drain`` = int Np^T Np and ``t_force`` = int Nu^T Bp, all with the
    thickness folded in. Arrays are (n_el, ., .).
    """

    k0: np.ndarray
    a_flow: np.ndarray
    a_drain: np.ndarray
    t_force: np.ndarray
    areas: np.ndarray

    @classmethod
    def from_mesh(cls, mesh: HexMesh, mat: MaterialParams,
                  order: int = DEFAULT_QUADRATURE_ORDER) -> "ElementIntegrals":
        coords = mesh.element_coords()
        _check_elements(coords)
        local = coords - coords.mean(axis=1, keepdims=True)
        ref = local[0]
        scale = np.abs(ref).max()
        same = np.all(np.abs(local - ref) <= 1e-10 * scale, axis=(1, 2))
        n_el = len(coords)
        k0 = np.empty((n_el, 12, 12))
        af = np.empty((n_el, 6, 6))
        ad = np.empty((n_el, 6, 6))
        tf = np.empty((n_el, 12, 6))
        groups = [(np.flatnonzero(same), ref[None])]
        odd = np.flatnonzero(~same)
        for chunk in np.array_split(odd, max(1, len(odd) // 400)):
            if len(chunk):
                groups.append((chunk, local[chunk]))
        for idx, geom in groups:
            if len(idx) == 0:
                continue
            mats = _element_mats(geom, mat, order)
            for out, m in zip((k0, af, ad, tf), mats):
                out[idx] = m
        return cls(k0=k0, a_flow=af, a_drain=ad, t_force=tf, areas=signed_areas(coords))


def _element_mats(geom, mat, order):
    pts, wts = element_quadrature(geom, order)
    N, dN = wachspress(geom, pts)
    wts = wts * mat.thickness
    B = strain_displacement(dN)
    D = plane_stress_matrix(1.0, mat.nu)
    k0 = np.einsum("eq,eqia,ij,eqjb->eab", wts, B, D, B)
    k0 = 0.5 * (k0 + np.swapaxes(k0, 1, 2))
    af = np.einsum("eq,eqad,eqbd->eab", wts, dN, dN)
    af = 0.5 * (af + np.swapaxes(af, 1, 2))
    ad = np.einsum("eq,eqa,eqb->eab", wts, N, N)
    ad = 0.5 * (ad + np.swapaxes(ad, 1, 2))
    tf = np.einsum("eq,eql,eqmc->elcm", wts, N, dN).reshape(len(geom), 12, 6)
    return k0, af, ad, tf


# --------------------------------------------------------------------------
# Assembly and solves


def element_dofs(mesh: HexMesh) -> np.ndarray:
    conn = mesh.elements
    return np.stack([2 * conn, 2 * conn + 1], axis=-1).reshape(len(conn), 12)


def assemble(index: np.ndarray, blocks: np.ndarray, size: int) -> sp.csc_matrix:
    """Sum element blocks (n_el, m, m) into a sparse (size x size) matrix."""
    rows = np.repeat(index, index.shape[1], axis=1).ravel()
    cols = np.tile(index, (1, index.shape[1])).ravel()
    return sp.csc_matrix((blocks.ravel(), (rows, cols)), shape=(size, size))


def assemble_stiffness(mesh: HexMesh, rho, mat: MaterialParams,
                       integrals: ElementIntegrals | None = None) -> sp.csc_matrix:
    """Global stiffness with element modulus E_min + rho^zeta (E_1 - E_min)."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (mesh.n_el,):
        raise ValueError(f"density has shape {rho.shape}, mesh has {mesh.n_el} elements")
    if integrals is None:
        integrals = ElementIntegrals.from_mesh(mesh, mat)
    blocks = mat.modulus(rho)[:, None, None] * integrals.k0
    return assemble(element_dofs(mesh), blocks, mesh.n_dofs)


def rigid_body_modes(nodes: np.ndarray) -> np.ndarray:
    """Columns: x translation, y translation, in-plane rotation about the centroid."""
    n = len(nodes)
    R = np.zeros((2 * n, 3))
    R[0::2, 0] = 1.0
    R[1::2, 1] = 1.0
    c = nodes - nodes.mean(axis=0)
    R[0::2, 2] = -c[:, 1]
    R[1::2, 2] = c[:, 0]
    return R


_MODE_NAMES = ("translation in x", "translation in y", "in-plane rotation")


def check_supports(nodes: np.ndarray, fixed_dofs, spring_dofs=()) -> None:
    """Raise SingularSystemError if the constraints leave a rigid mode free."""
    R = rigid_body_modes(nodes)
    held = np.unique(np.concatenate([np.asarray(fixed_dofs, int), np.asarray(spring_dofs, int)]))
    Rc = R[held]
    scale = np.abs(R).max()
    # Modes not restrained: null space of the restrained rows.
    if Rc.size:
        _, s, vt = np.linalg.svd(Rc, full_matrices=True)
        rank = int(np.sum(s > 1e-10 * scale))
        free_modes = vt[rank:]
    else:
        free_modes = np.eye(3)
    if len(free_modes):
        v = free_modes[0]
        name = _MODE_NAMES[int(np.argmax(np.abs(v)))]
        raise SingularSystemError(f"supports do not restrain the {name} mode")


class ConstrainedSolver:
    """Factorises K on the free DOFs once and solves for several loads.

    Prescribed DOFs are eliminated (row/column removal), not penalised.
    """

    def __init__(self, K: sp.spmatrix, fixed, values=None):
        K = sp.csc_matrix(K)
        n = K.shape[0]
        fixed = np.unique(np.asarray(fixed, dtype=np.int64))
        if fixed.size == 0:
            raise SingularSystemError("no prescribed degrees of freedom")
        mask = np.ones(n, dtype=bool)
        mask[fixed] = False
        self.n = n
        self.fixed = fixed
        self.free = np.flatnonzero(mask)
        self.values = np.zeros(len(fixed)) if values is None else np.asarray(values, float)
        self.K = K
        self.K_ff = K[self.free][:, self.free].tocsc()
        self.K_fd = K[self.free][:, fixed]
        try:
            self._lu = spla.splu(self.K_ff)
        except RuntimeError as exc:
            raise SingularSystemError(f"singular system: {exc}") from exc

    def solve(self, rhs=None, homogeneous: bool = False) -> np.ndarray:
        """Solve K x = rhs with x fixed to the prescribed values.

        ``homogeneous`` sets the prescribed values to zero, as needed for
        adjoint systems.
        """
        x = np.zeros(self.n)
        b = np.zeros(len(self.free)) if rhs is None else np.asarray(rhs, float)[self.free].copy()
        if not homogeneous:
            x[self.fixed] = self.values
            b -= self.K_fd @ self.values
        x[self.free] = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("solution is not finite")
        return x


def solve_displacement(K, F, fixed_dofs) -> np.ndarray:
    return ConstrainedSolver(K, fixed_dofs).solve(F)

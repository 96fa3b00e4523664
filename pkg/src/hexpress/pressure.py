"""Design-dependent pressure loads from Darcy flow with a drainage term.

The flow coefficient falls from ``K_V`` (void) to ``K_S`` (solid) and the
drainage coefficient rises from 0 to ``D_S`` through smooth tanh
projections of the element density. The resulting pressure field is turned
into consistent nodal forces ``F = -T p`` with ``T = int Nu^T grad(Np)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .fem import ConstrainedSolver, ElementIntegrals, SingularSystemError, assemble, element_dofs
from .mesh import HexMesh


@dataclass(frozen=True)
class PressureModelParams:
    K_V: float = 1.0
    K_S: float = 1e-7
    eta_K: float = 0.3
    beta_K: float = 10.0
    eta_D: float = 0.3
    beta_D: float = 10.0
    r: float = 0.1
    delta_s: float | None = None  # None: two element widths
    p_in: float = 1e5
    p_ext: float = 0.0
    drainage: bool = True

    def __post_init__(self):
        if not self.K_V > self.K_S > 0:
            raise ValueError("need K_V > K_S > 0")
        if self.beta_K <= 0 or self.beta_D <= 0:
            raise ValueError("Heaviside slopes must be positive")
        if not (0 < self.eta_K < 1 and 0 < self.eta_D < 1):
            raise ValueError("Heaviside steps must lie in (0, 1)")
        if not 0 < self.r < 1:
            raise ValueError("remainder fraction r must lie in (0, 1)")
        if self.delta_s is not None and self.delta_s <= 0:
            raise ValueError("penetration depth must be positive")

    @property
    def flow_contrast(self) -> float:
        return self.K_S / self.K_V

    @property
    def D_S(self) -> float:
        if self.delta_s is None:
            raise ValueError("penetration depth not resolved; call resolved(mesh)")
        return (np.log(self.r) / self.delta_s) ** 2 * self.K_S

    def resolved(self, mesh: HexMesh) -> "PressureModelParams":
        if self.delta_s is not None:
            return self
        return replace(self, delta_s=2.0 * mesh.cell_width)


def smooth_heaviside(rho, eta: float, beta: float):
    """tanh projection with H(0) = 0 and H(1) = 1."""
    rho = np.asarray(rho, dtype=float)
    den = np.tanh(beta * eta) + np.tanh(beta * (1.0 - eta))
    return (np.tanh(beta * eta) + np.tanh(beta * (rho - eta))) / den


def smooth_heaviside_derivative(rho, eta: float, beta: float):
    rho = np.asarray(rho, dtype=float)
    den = np.tanh(beta * eta) + np.tanh(beta * (1.0 - eta))
    return beta * (1.0 - np.tanh(beta * (rho - eta)) ** 2) / den


def flow_coefficient(rho, params: PressureModelParams):
    eps = params.flow_contrast
    return params.K_V * (1.0 - (1.0 - eps) * smooth_heaviside(rho, params.eta_K, params.beta_K))


def flow_coefficient_derivative(rho, params: PressureModelParams):
    eps = params.flow_contrast
    return -params.K_V * (1.0 - eps) * smooth_heaviside_derivative(rho, params.eta_K, params.beta_K)


def drainage_coefficient(rho, params: PressureModelParams):
    if not params.drainage:
        return np.zeros_like(np.asarray(rho, dtype=float))
    return params.D_S * smooth_heaviside(rho, params.eta_D, params.beta_D)


def drainage_coefficient_derivative(rho, params: PressureModelParams):
    if not params.drainage:
        return np.zeros_like(np.asarray(rho, dtype=float))
    return params.D_S * smooth_heaviside_derivative(rho, params.eta_D, params.beta_D)


def _integrals(mesh, integrals):
    if integrals is None:
        from .fem import MaterialParams

        integrals = ElementIntegrals.from_mesh(mesh, MaterialParams())
    return integrals


def element_flow_matrices(rho, params: PressureModelParams, integrals: ElementIntegrals):
    K = flow_coefficient(rho, params)
    D = drainage_coefficient(rho, params)
    return K[:, None, None] * integrals.a_flow + D[:, None, None] * integrals.a_drain


def assemble_flow(mesh: HexMesh, rho, params: PressureModelParams,
                  integrals: ElementIntegrals | None = None) -> sp.csc_matrix:
    """Global flow matrix sum_i int (K Bp^T Bp + D Np^T Np) dV."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (mesh.n_el,):
        raise ValueError(f"density has shape {rho.shape}, mesh has {mesh.n_el} elements")
    params = params.resolved(mesh)
    integrals = _integrals(mesh, integrals)
    blocks = element_flow_matrices(rho, params, integrals)
    return assemble(mesh.elements, blocks, mesh.n_nodes)


def drainage_load(mesh: HexMesh, rho, params: PressureModelParams,
                  integrals: ElementIntegrals) -> np.ndarray:
    """Right-hand side int D Np^T p_ext dV (zero for p_ext = 0)."""
    f = np.zeros(mesh.n_nodes)
    if params.p_ext == 0.0:
        return f
    D = drainage_coefficient(rho, params.resolved(mesh))
    local = D[:, None] * integrals.a_drain.sum(axis=2) * params.p_ext
    np.add.at(f, mesh.elements, local)
    return f


def pressure_solver(A, bc: dict[int, float]) -> ConstrainedSolver:
    if not bc:
        raise SingularSystemError("no prescribed pressure anywhere; flow system is singular")
    nodes = np.array(sorted(bc), dtype=np.int64)
    values = np.array([bc[n] for n in nodes], dtype=float)
    return ConstrainedSolver(A, nodes, values)


def solve_pressure(A, bc: dict[int, float], rhs=None) -> np.ndarray:
    """Nodal pressures with Dirichlet values ``bc`` (node -> pressure)."""
    return pressure_solver(A, bc).solve(rhs)


def assemble_transform(mesh: HexMesh, integrals: ElementIntegrals | None = None) -> sp.csr_matrix:
    """Geometry-only matrix T (2 n_nodes x n_nodes) with F = -T p."""
    integrals = _integrals(mesh, integrals)
    dofs = element_dofs(mesh)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 12)).ravel()
    return sp.csr_matrix(
        (integrals.t_force.ravel(), (rows, cols)), shape=(mesh.n_dofs, mesh.n_nodes)
    )


def nodal_forces(T, p) -> np.ndarray:
    return -(T @ np.asarray(p, dtype=float))


@dataclass
class PressureState:
    A: sp.csc_matrix
    p: np.ndarray
    T: sp.csr_matrix
    F: np.ndarray
    solver: ConstrainedSolver


def pressure_analysis(mesh: HexMesh, rho, params: PressureModelParams, bc: dict[int, float],
                      integrals: ElementIntegrals, T=None) -> PressureState:
    params = params.resolved(mesh)
    A = assemble_flow(mesh, rho, params, integrals)
    solver = pressure_solver(A, bc)
    p = solver.solve(drainage_load(mesh, rho, params, integrals))
    if T is None:
        T = assemble_transform(mesh, integrals)
    return PressureState(A=A, p=p, T=T, F=nodal_forces(T, p), solver=solver)


def flow_residual_derivative(mesh: HexMesh, rho, p, params: PressureModelParams,
                             integrals: ElementIntegrals) -> np.ndarray:
    """Per-element d(A p - f)/d rho_e restricted to the element nodes, (n_el, 6)."""
    params = params.resolved(mesh)
    dK = flow_coefficient_derivative(rho, params)
    dD = drainage_coefficient_derivative(rho, params)
    pe = p[mesh.elements]
    flow = np.einsum("eab,eb->ea", integrals.a_flow, pe)
    drain = np.einsum("eab,eb->ea", integrals.a_drain, pe - params.p_ext)
    return dK[:, None] * flow + dD[:, None] * drain

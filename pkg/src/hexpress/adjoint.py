"""Objectives, constraints and adjoint sensitivities.

Two objectives are supported:

* ``compliance``: ``u^T K u`` (twice the strain energy),
* ``multicriteria``: ``-chi * (v^T K u) / (u^T K u)`` for mechanisms, with
  ``K v = F_d`` for a unit dummy load at the output.

The state equations are ``K u = -T p`` and ``A p = 0`` (Dirichlet pressure
data on the inlet and outlet), so the pressure field depends on the design
and contributes load-sensitivity terms to every objective gradient.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import ConstrainedSolver, ElementIntegrals, MaterialParams, assemble_stiffness, check_supports
from .mesh import HexMesh
from .pressure import (
    PressureModelParams,
    assemble_transform,
    flow_residual_derivative,
    pressure_analysis,
)


class StaleStateError(RuntimeError):
    """The density changed after the state was solved."""


class DegenerateStateError(RuntimeError):
    """Strain energy vanished, so the mechanism objective is undefined."""


@dataclass(frozen=True)
class Spring:
    node: int
    direction: tuple[float, float]
    stiffness: float


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str = "compliance"
    chi: float = 1.0
    output_node: int | None = None
    output_direction: tuple[float, float] = (1.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("compliance", "multicriteria"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.kind == "multicriteria":
            if self.chi <= 0:
                raise ValueError("chi must be positive")
            if self.output_node is None:
                raise ValueError("mechanism objective needs an output node")
            if not np.isclose(np.hypot(*self.output_direction), 1.0):
                raise ValueError("dummy load direction must be a unit vector")


@dataclass(frozen=True)
class ConstraintSpec:
    V_star: float = 0.2
    delta: float | None = None  # None: no grayscale constraint

    def __post_init__(self):
        if not 0 < self.V_star <= 1:
            raise ValueError("V_star must lie in (0, 1]")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


def strain_energy(K, u) -> float:
    return float(u @ (K @ u))


def objective_value(kind: str, u, v=None, K=None, chi: float = 1.0) -> float:
    """``u^T K u`` for compliance, ``-chi v^T K u / u^T K u`` for mechanisms."""
    if kind == "compliance":
        return strain_energy(K, u)
    if kind == "multicriteria":
        se = strain_energy(K, u)
        if se == 0.0:
            raise DegenerateStateError("strain energy is zero")
        return -chi * float(v @ (K @ u)) / se
    raise ValueError(f"unknown objective kind {kind!r}")


def volume_fraction(rho, areas=None) -> float:
    rho = np.asarray(rho, float)
    if areas is None:
        return float(rho.mean())
    return float(areas @ rho / areas.sum())


def grayscale_indicator(rho) -> float:
    rho = np.asarray(rho, float)
    return float(np.sum(4.0 * rho * (1.0 - rho)) / rho.size)


def constraint_values(rho, V_star: float, delta: float | None = None, areas=None):
    """Return ``(g1, g2)`` with g1 = V/V* - 1 and g2 = GS_I."""
    rho = np.asarray(rho, float)
    if np.any(rho < 0) or np.any(rho > 1):
        raise ValueError("densities must lie in [0, 1]")
    g1 = volume_fraction(rho, areas) / V_star - 1.0
    return g1, grayscale_indicator(rho)


def constraint_sensitivities(rho, V_star: float, areas=None):
    """Gradients of g1 and GS_I with respect to rho."""
    rho = np.asarray(rho, float)
    if areas is None:
        areas = np.ones_like(rho)
    dg1 = areas / (areas.sum() * V_star)
    dg2 = 4.0 * (1.0 - 2.0 * rho) / rho.size
    return dg1, dg2


def chain_to_masks(dfdrho, jacobian) -> np.ndarray:
    """d f / d psi from d f / d rho and d rho / d psi (matrix or DensityField)."""
    if hasattr(jacobian, "vjp"):
        return jacobian.vjp(dfdrho)
    return np.asarray(jacobian.T @ np.asarray(dfdrho, float)).ravel()


_tokens = itertools.count()


@dataclass
class State:
    rho: np.ndarray
    K: sp.csc_matrix
    u: np.ndarray
    p: np.ndarray
    F: np.ndarray
    v: np.ndarray | None
    k_solver: ConstrainedSolver = field(repr=False)
    p_solver: ConstrainedSolver = field(repr=False)
    A: sp.csc_matrix = field(repr=False)
    token: int = 0


class Analysis:
    """Coupled pressure/elasticity analysis of one problem on one geometry."""

    def __init__(
        self,
        mesh: HexMesh,
        material: MaterialParams,
        pressure: PressureModelParams,
        pressure_bc: dict[int, float],
        fixed_dofs,
        objective: ObjectiveSpec = ObjectiveSpec(),
        springs: tuple[Spring, ...] = (),
        integrals: ElementIntegrals | None = None,
    ):
        self.mesh = mesh
        self.material = material
        self.pressure = pressure.resolved(mesh)
        self.pressure_bc = dict(pressure_bc)
        self.fixed_dofs = np.unique(np.asarray(fixed_dofs, dtype=np.int64))
        self.objective = objective
        self.springs = tuple(springs)
        self.integrals = integrals or ElementIntegrals.from_mesh(mesh, material)
        self.T = assemble_transform(mesh, self.integrals)
        self.spring_matrix = self._spring_matrix()
        check_supports(mesh.nodes, self.fixed_dofs, self._spring_dofs())
        self.F_d = None
        if objective.kind == "multicriteria":
            self.F_d = np.zeros(mesh.n_dofs)
            n = objective.output_node
            self.F_d[2 * n: 2 * n + 2] = objective.output_direction
        self._current = None

    def _spring_dofs(self):
        dofs = []
        for s in self.springs:
            dofs += [2 * s.node + k for k in range(2) if s.direction[k] != 0]
        return dofs

    def _spring_matrix(self):
        n = self.mesh.n_dofs
        rows, cols, vals = [], [], []
        for s in self.springs:
            d = np.asarray(s.direction, float)
            d = d / np.linalg.norm(d)
            dofs = [2 * s.node, 2 * s.node + 1]
            for a in range(2):
                for b in range(2):
                    rows.append(dofs[a])
                    cols.append(dofs[b])
                    vals.append(s.stiffness * d[a] * d[b])
        return sp.csc_matrix((vals, (rows, cols)), shape=(n, n))

    @property
    def areas(self) -> np.ndarray:
        return self.integrals.areas

    def solve(self, rho) -> State:
        rho = np.array(rho, dtype=float)
        pstate = pressure_analysis(self.mesh, rho, self.pressure, self.pressure_bc, self.integrals, self.T)
        K = assemble_stiffness(self.mesh, rho, self.material, self.integrals) + self.spring_matrix
        K = K.tocsc()
        k_solver = ConstrainedSolver(K, self.fixed_dofs)
        u = k_solver.solve(pstate.F)
        v = k_solver.solve(self.F_d) if self.F_d is not None else None
        token = next(_tokens)
        self._current = token
        return State(rho=rho, K=K, u=u, p=pstate.p, F=pstate.F, v=v,
                     k_solver=k_solver, p_solver=pstate.solver, A=pstate.A, token=token)

    def objective_value(self, state: State) -> float:
        return objective_value(self.objective.kind, state.u, state.v, state.K, self.objective.chi)

    def _check(self, state: State, rho):
        if state.token != self._current:
            raise StaleStateError("state is older than the last solve")
        if rho is not None and not np.array_equal(np.asarray(rho, float), state.rho):
            raise StaleStateError("density changed since the state was solved")

    def _element_energy(self, a, b):
        """Per-element a_e^T k0_e b_e."""
        dofs = self._dofs
        return np.einsum("ei,eij,ej->e", a[dofs], self.integrals.k0, b[dofs])

    @property
    def _dofs(self):
        from .fem import element_dofs

        if not hasattr(self, "_dofs_cache"):
            self._dofs_cache = element_dofs(self.mesh)
        return self._dofs_cache

    def _load_term(self, state: State, w) -> np.ndarray:
        """Per-element mu^T dR/drho_e with A mu = T^T w on the free pressure nodes."""
        mu = state.p_solver.solve(self.T.T @ w, homogeneous=True)
        dR = flow_residual_derivative(self.mesh, state.rho, state.p, self.pressure, self.integrals)
        return np.einsum("ea,ea->e", mu[self.mesh.elements], dR)

    def objective_sensitivity(self, state: State, rho=None, load_sensitivities: bool = True,
                              generic: bool = False) -> np.ndarray:
        """d f / d rho by the adjoint method.

        ``load_sensitivities=False`` drops the terms coming from the
        design-dependent pressure (for demonstration only). ``generic=True``
        solves the displacement adjoint systems explicitly instead of using
        their closed forms.
        """
        self._check(state, rho)
        u, v, K = state.u, state.v, state.K
        dE = self.material.dmodulus(state.rho)
        if self.objective.kind == "compliance":
            if generic:
                lam1 = state.k_solver.solve(-2.0 * (K @ u), homogeneous=True)
                structural = dE * (self._element_energy(u, u) + self._element_energy(lam1, u))
            else:
                lam1 = -2.0 * u
                structural = -dE * self._element_energy(u, u)
        else:
            chi = self.objective.chi
            S = strain_energy(K, u)
            if S == 0.0:
                raise DegenerateStateError("strain energy is zero")
            M = float(v @ (K @ u))
            if generic:
                lam1 = state.k_solver.solve(chi * (K @ v) / S - 2 * chi * M * (K @ u) / S**2,
                                            homogeneous=True)
                lam3 = state.k_solver.solve(chi * (K @ u) / S, homogeneous=True)
                explicit = -chi * (self._element_energy(v, u) / S - M * self._element_energy(u, u) / S**2)
                structural = dE * (explicit + self._element_energy(lam1, u) + self._element_energy(lam3, v))
            else:
                lam1 = chi * (v / S - 2.0 * M * u / S**2)
                structural = chi * dE * (self._element_energy(u, v) / S - M * self._element_energy(u, u) / S**2)
        if not load_sensitivities:
            return structural
        # L = f + lam1^T (K u + T p) + lam2^T (A p):  A lam2 = -T^T lam1.
        return structural + self._load_term(state, -lam1)

    def constraint_values(self, rho, constraints: ConstraintSpec):
        return constraint_values(rho, constraints.V_star, constraints.delta, self.areas)

    def constraint_sensitivities(self, rho, constraints: ConstraintSpec):
        return constraint_sensitivities(rho, constraints.V_star, self.areas)

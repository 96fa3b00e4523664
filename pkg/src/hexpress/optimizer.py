"""The optimization loop: masks -> densities -> analysis -> MMA -> relaxed step."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np

from .adjoint import Analysis, State, chain_to_masks, volume_fraction
from .fem import ElementIntegrals
from .masks import N_VARS, VARIABLES, DensityField, MaskSet
from .mma import MMAState, mma_step
from .smoothing import SmoothingConfig, smoothed_mesh

if TYPE_CHECKING:
    from .problems import ProblemSpec, Setup

LOG_COLUMNS = ("iter", "objective", "vol_frac", "gsi", "g1", "g2")


class OptimizationError(RuntimeError):
    def __init__(self, iteration: int, stage: str, cause: Exception):
        self.iteration = iteration
        self.stage = stage
        super().__init__(f"iteration {iteration}, {stage}: {cause}")


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 500
    step: float = 0.075  # S in psi_new = psi_old + S (psi_current - psi_old)
    n_mx: int = 20
    n_my: int = 10
    move: float = 0.5
    asy_init: float = 0.5
    asy_incr: float = 1.2
    asy_decr: float = 0.7
    freeze_alpha: bool = False
    freeze_gamma: bool = False
    stall_tol: float = 1e-8
    stall_iters: int = 20
    snapshot_every: int = 0  # 0: no psi snapshots

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if not 0 < self.step <= 1:
            raise ValueError("step length S must lie in (0, 1]")
        if self.n_mx < 1 or self.n_my < 1:
            raise ValueError("mask grid must have at least one mask per direction")
        if not 0 < self.move <= 1:
            raise ValueError("move limit must lie in (0, 1]")


def relax_step(psi_old, psi_current, S: float, lower=None, upper=None) -> np.ndarray:
    """Convex combination psi_old + S (psi_current - psi_old), clipped to the bounds."""
    psi_old = np.asarray(psi_old, float)
    psi_current = np.asarray(psi_current, float)
    if psi_old.shape != psi_current.shape:
        raise ValueError("psi_old and psi_current differ in length")
    if not 0 <= S <= 1:
        raise ValueError("S must lie in [0, 1]")
    new = psi_old + S * (psi_current - psi_old)
    if lower is not None or upper is not None:
        new = np.clip(new, lower if lower is not None else -np.inf, upper if upper is not None else np.inf)
    return new


@dataclass
class IterateRecord:
    iter: int
    objective: float
    vol_frac: float
    gsi: float
    g1: float
    g2: float  # GS_I - delta, NaN without a grayscale constraint

    def row(self):
        return [self.iter, self.objective, self.vol_frac, self.gsi, self.g1, self.g2]


@dataclass
class IterateLog:
    records: list[IterateRecord] = field(default_factory=list)
    psi_snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    stop_reason: str = ""

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for r in self.records:
            w.writerow(["" if isinstance(v, float) and np.isnan(v) else repr(v) if isinstance(v, float) else v
                        for v in r.row()])


@dataclass
class RunResult:
    setup: "Setup"
    masks: MaskSet
    rho: np.ndarray
    mesh: object
    analysis: Analysis
    state: State
    log: IterateLog


def make_analysis(setup: "Setup", mesh=None) -> Analysis:
    mesh = mesh or setup.mesh
    spec = setup.spec
    integrals = ElementIntegrals.from_mesh(mesh, spec.material)
    return Analysis(mesh, spec.material, spec.pressure, setup.pressure_bc, setup.fixed_dofs,
                    setup.objective, setup.springs, integrals)


def active_variables(n_masks: int, freeze_alpha: bool, freeze_gamma: bool) -> np.ndarray:
    """Indices into the flattened psi that MMA is allowed to move."""
    keep = np.ones((n_masks, N_VARS), dtype=bool)
    if freeze_alpha:
        keep[:, VARIABLES.index("alpha")] = False
    if freeze_gamma:
        keep[:, VARIABLES.index("gamma")] = False
    return np.flatnonzero(keep.ravel())


class Evaluator:
    """Densities, analysis and gradients for one psi, reusing geometry when possible."""

    def __init__(self, setup: "Setup", smoothing: SmoothingConfig | None = None):
        self.setup = setup
        self.smoothing = smoothing
        self.centroids = setup.mesh.centroids()
        self._base = make_analysis(setup)
        self._analysis = self._base

    def analysis_for(self, rho) -> Analysis:
        s = self.smoothing
        if s is None or s.beta == 0:
            return self._base
        mesh = smoothed_mesh(self.setup.mesh, rho, s, frozen=self.setup.bc_nodes)
        if mesh is self._analysis.mesh or np.array_equal(mesh.nodes, self._analysis.mesh.nodes):
            return self._analysis
        self._analysis = make_analysis(self.setup, mesh)
        return self._analysis

    def densities(self, masks: MaskSet):
        field_ = DensityField(masks, self.centroids)
        return field_, self.setup.apply_passive(field_.rho)


def run(problem: "ProblemSpec", config: OptimizerConfig | None = None,
        callback: Callable[[int, IterateRecord, np.ndarray], None] | None = None,
        masks: MaskSet | None = None) -> RunResult:
    """Optimize the mask layout of ``problem``.

    The stored ``problem.optimizer`` is used unless ``config`` overrides it.
    ``callback(iteration, record, rho)`` is called after each logged iteration.
    """
    from .problems import resolve

    config = config or problem.optimizer
    setup = resolve(problem)
    smoothing = problem.smoothing if problem.smoothing.every_iteration else None
    ev = Evaluator(setup, smoothing)
    masks = masks or setup.initial_masks(config.n_mx, config.n_my)
    psi = masks.psi
    lower, upper = masks.lower.ravel(), masks.upper.ravel()
    active = active_variables(len(masks), config.freeze_alpha, config.freeze_gamma)
    lo, span = lower[active], upper[active] - lower[active]
    if np.any(span <= 0):
        raise ValueError("every free variable needs a nonempty bound interval")
    names = [f"mask {k // N_VARS} {VARIABLES[k % N_VARS]}" for k in active]
    passive = setup.passive_elements
    delta = problem.delta
    m = 1 if delta is None else 2
    mma = MMAState(n=len(active), m=m, move=config.move, asy_init=config.asy_init,
                   asy_incr=config.asy_incr, asy_decr=config.asy_decr)
    log = IterateLog()
    scale = None
    stalled = 0

    for it in range(config.max_iters):
        stage = "density"
        try:
            current = masks.with_psi(psi)
            field_, rho = ev.densities(current)
            stage = "analysis"
            analysis = ev.analysis_for(rho)
            state = analysis.solve(rho)
            f = analysis.objective_value(state)
            vf = volume_fraction(rho, analysis.areas)
            g1, gsi = analysis.constraint_values(rho, _constraints(problem))
            stage = "sensitivities"
            dfdrho = analysis.objective_sensitivity(state, rho)
            dg1, dg2 = analysis.constraint_sensitivities(rho, _constraints(problem))
            for g in (dfdrho, dg1, dg2):
                g[passive] = 0.0
            if scale is None:
                scale = abs(f) if f != 0 else 1.0
            z = (psi[active] - lo) / span
            df = chain_to_masks(dfdrho, field_)[active] * span / scale
            gvals = [g1]
            gjac = [chain_to_masks(dg1, field_)[active] * span]
            if delta is not None:
                gvals.append(gsi - delta)
                gjac.append(chain_to_masks(dg2, field_)[active] * span)
            record = IterateRecord(it, f, vf, gsi, g1, gsi - delta if delta is not None else float("nan"))
            log.records.append(record)
            if config.snapshot_every and it % config.snapshot_every == 0:
                log.psi_snapshots[it] = psi.copy()
            if callback is not None:
                callback(it, record, rho)
            stage = "MMA"
            z_cur = mma_step(z, f / scale, df, np.array(gvals), np.vstack(gjac), 0.0, 1.0, mma, names)
            z_new = relax_step(z, z_cur, config.step, 0.0, 1.0)
        except OptimizationError:
            raise
        except Exception as exc:  # attach the iteration and stage
            raise OptimizationError(it, stage, exc) from exc
        change = np.abs(z_new - z).max() if len(z) else 0.0
        psi = psi.copy()
        psi[active] = np.clip(lo + z_new * span, lower[active], upper[active])
        stalled = stalled + 1 if change < config.stall_tol else 0
        if stalled >= config.stall_iters:
            log.stop_reason = "stagnation"
            break
    else:
        log.stop_reason = "max_iters"

    final = masks.with_psi(psi)
    field_, rho = ev.densities(final)
    final_smoothing = problem.smoothing if problem.smoothing.beta else None
    if final_smoothing is not None and smoothing is None:
        ev.smoothing = final_smoothing
    analysis = ev.analysis_for(rho)
    state = analysis.solve(rho)
    return RunResult(setup, final, rho, analysis.mesh, analysis, state, log)


def _constraints(problem):
    from .adjoint import ConstraintSpec

    return ConstraintSpec(problem.V_star, problem.delta)

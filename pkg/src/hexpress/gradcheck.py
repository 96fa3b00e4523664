"""Central finite-difference checks of the adjoint gradients."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .adjoint import Analysis, chain_to_masks
from .masks import N_VARS, DensityField, MaskSet
from .optimizer import make_analysis


def relative_error(analytic, reference) -> float:
    """max |a - r| / max |r| (normwise, so tiny components do not dominate)."""
    analytic = np.asarray(analytic, float)
    reference = np.asarray(reference, float)
    denom = np.abs(reference).max()
    if denom == 0.0:
        return float(np.abs(analytic).max())
    return float(np.abs(analytic - reference).max() / denom)


def density_gradient_check(analysis: Analysis, rho, h: float = 1e-6, load_sensitivities: bool = True,
                           elements=None):
    """Adjoint df/drho against central differences on ``elements`` (default all)."""
    rho = np.asarray(rho, float)
    elements = np.arange(len(rho)) if elements is None else np.asarray(elements)
    state = analysis.solve(rho)
    analytic = analysis.objective_sensitivity(state, rho, load_sensitivities=load_sensitivities)[elements]
    fd = np.empty(len(elements))
    for k, e in enumerate(elements):
        plus, minus = rho.copy(), rho.copy()
        plus[e] += h
        minus[e] -= h
        fp = analysis.objective_value(analysis.solve(plus))
        fm = analysis.objective_value(analysis.solve(minus))
        fd[k] = (fp - fm) / (2 * h)
    return analytic, fd, relative_error(analytic, fd)


def mask_gradient_check(setup, masks: MaskSet, h: float = 1e-6, load_sensitivities: bool = True,
                        analysis: Analysis | None = None, variables=None):
    """End-to-end df/dpsi against central differences.

    The step for each variable is ``h`` times the width of its bound interval.
    """
    analysis = analysis or make_analysis(setup)
    centroids = setup.mesh.centroids()
    passive = setup.passive_elements

    def evaluate(psi):
        field_ = DensityField(masks.with_psi(psi), centroids)
        rho = setup.apply_passive(field_.rho)
        return field_, rho, analysis.solve(rho)

    psi = masks.psi
    field_, rho, state = evaluate(psi)
    dfdrho = analysis.objective_sensitivity(state, rho, load_sensitivities=load_sensitivities)
    dfdrho[passive] = 0.0
    analytic = chain_to_masks(dfdrho, field_)
    variables = np.arange(len(psi)) if variables is None else np.asarray(variables)
    width = (masks.upper - masks.lower).ravel()
    width = np.where(np.isfinite(width) & (width > 0), width, 1.0)
    fd = np.empty(len(variables))
    for k, j in enumerate(variables):
        step = h * width[j]
        plus, minus = psi.copy(), psi.copy()
        plus[j] += step
        minus[j] -= step
        fp = analysis.objective_value(evaluate(plus)[2])
        fm = analysis.objective_value(evaluate(minus)[2])
        fd[k] = (fp - fm) / (2 * step)
    analytic = analytic[variables]
    return analytic, fd, relative_error(analytic, fd)


def random_masks(setup, n_mx: int, n_my: int, rng: np.random.Generator) -> MaskSet:
    """A grid layout with every variable drawn inside its bounds.

    Axes are a quarter to a half of the shorter domain side and alpha,
    gamma stay in the lowest fifth of their ranges, so densities are mixed
    rather than saturated and the gradients are informative.
    """
    base = setup.initial_masks(n_mx, n_my)
    lo, hi = base.lower, base.upper
    m = len(base)
    lx, ly = setup.mesh.domain
    r = min(lx, ly)
    P = np.column_stack([
        rng.uniform(0, lx, m), rng.uniform(0, ly, m),
        rng.uniform(0.25, 0.5, m) * r, rng.uniform(0.25, 0.5, m) * r,
        rng.uniform(-1.2, 1.2, m),
        lo[:, 5] + rng.uniform(0, 0.2, m) * (hi[:, 5] - lo[:, 5]),
        lo[:, 6] + rng.uniform(0, 0.2, m) * (hi[:, 6] - lo[:, 6]),
    ])
    return MaskSet(np.clip(P, lo, hi), lo, hi)


@dataclass
class GradientReport:
    problem: str
    objective: str
    density_error: float
    mask_error: float
    density_error_without_load: float
    mask_error_without_load: float

    def lines(self):
        return [
            f"{self.problem} ({self.objective}): max relative error d/drho {self.density_error:.3e}, "
            f"d/dpsi {self.mask_error:.3e}",
            f"  without load sensitivities: d/drho {self.density_error_without_load:.3e}, "
            f"d/dpsi {self.mask_error_without_load:.3e}",
        ]


def check_problem_gradients(spec, n_ex: int = 16, n_ey: int = 8, n_mx: int = 2, n_my: int = 2,
                            seed: int = 0, h: float = 1e-6) -> GradientReport:
    """FD oracle suite on a reduced copy of ``spec``."""
    from .problems import resolve

    small = replace(spec, n_ex=n_ex, n_ey=n_ey, smoothing=replace(spec.smoothing, beta=0))
    setup = resolve(small)
    analysis = make_analysis(setup)
    rng = np.random.default_rng(seed)
    rho = setup.apply_passive(rng.uniform(0.1, 0.9, setup.mesh.n_el))
    free = np.setdiff1d(np.arange(setup.mesh.n_el), setup.passive_elements)
    elements = rng.choice(free, size=min(24, len(free)), replace=False)
    _, _, e_rho = density_gradient_check(analysis, rho, h, True, elements)
    _, _, e_rho0 = density_gradient_check(analysis, rho, h, False, elements)
    masks = random_masks(setup, n_mx, n_my, rng)
    _, _, e_psi = mask_gradient_check(setup, masks, h, True, analysis)
    _, _, e_psi0 = mask_gradient_check(setup, masks, h, False, analysis)
    return GradientReport(spec.name, setup.objective.kind, e_rho, e_psi, e_rho0, e_psi0)


__all__ = [
    "relative_error", "density_gradient_check", "mask_gradient_check", "random_masks",
    "GradientReport", "check_problem_gradients", "N_VARS",
]

"""Negative elliptical masks and the element density field they induce.

Each mask carries seven variables in the order ``x, y, a, b, theta, alpha,
gamma``: centre, semi-axes, orientation, material dilation and material
erosion. The density of element ``i`` is

    rho_i = prod_j sigmoid(alpha_j * d_ij) ** gamma_j

with ``d_ij`` the normalised elliptical distance of the element centroid
from mask ``j``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

VARIABLES = ("x", "y", "a", "b", "theta", "alpha", "gamma")
N_VARS = len(VARIABLES)
EXP_CLAMP = 500.0
PRUNE_TOL = 1e-14


@dataclass
class Mask:
    x: float
    y: float
    a: float
    b: float
    theta: float = 0.0
    alpha: float = 1.0
    gamma: float = 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.a, self.b, self.theta, self.alpha, self.gamma])


@dataclass
class MaskBounds:
    """Table-style bounds: axis limits are factors of the mask radius ``mR``."""

    mR: float
    f_l: float = 0.001
    f_u: float = 1.0
    alpha: tuple[float, float] = (1.0, 30.0)
    gamma: tuple[float, float] = (1.0, 30.0)


class MaskSet:
    """A design: ``params`` is (m_n, 7), ``lower``/``upper`` likewise."""

    def __init__(self, params, lower, upper):
        self.params = np.array(params, dtype=float).reshape(-1, N_VARS)
        self.lower = np.broadcast_to(np.asarray(lower, float), self.params.shape).copy()
        self.upper = np.broadcast_to(np.asarray(upper, float), self.params.shape).copy()
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if not np.all(np.isfinite(self.params)):
            raise ValueError("mask variables must be finite")

    def __len__(self):
        return len(self.params)

    @property
    def masks(self) -> list[Mask]:
        return [Mask(*row) for row in self.params]

    @property
    def psi(self) -> np.ndarray:
        return self.params.ravel().copy()

    def with_psi(self, psi) -> "MaskSet":
        return MaskSet(np.asarray(psi, float).reshape(self.params.shape), self.lower, self.upper)

    def in_bounds(self, tol: float = 0.0) -> bool:
        return bool(np.all(self.params >= self.lower - tol) and np.all(self.params <= self.upper + tol))

    def clipped(self) -> "MaskSet":
        return MaskSet(np.clip(self.params, self.lower, self.upper), self.lower, self.upper)

    @classmethod
    def grid(cls, n_mx: int, n_my: int, domain, bounds: MaskBounds,
             alpha: float = 1.0, gamma: float = 1.0) -> "MaskSet":
        """Uniform ``n_mx`` x ``n_my`` layout of circles of radius mR/2."""
        lx, ly = domain
        xs = (np.arange(n_mx) + 0.5) * lx / n_mx
        ys = (np.arange(n_my) + 0.5) * ly / n_my
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        m = X.size
        r = 0.5 * bounds.mR
        params = np.column_stack([
            X.ravel(), Y.ravel(), np.full(m, r), np.full(m, r),
            np.zeros(m), np.full(m, float(alpha)), np.full(m, float(gamma)),
        ])
        lo = [0.0, 0.0, bounds.f_l * bounds.mR, bounds.f_l * bounds.mR, -np.pi / 2,
              bounds.alpha[0], bounds.gamma[0]]
        hi = [lx, ly, bounds.f_u * bounds.mR, bounds.f_u * bounds.mR, np.pi / 2,
              bounds.alpha[1], bounds.gamma[1]]
        return cls(params, lo, hi).clipped()

    def save(self, path) -> None:
        """Plain-text table, one mask per line: value columns then bounds."""
        header = " ".join(VARIABLES) + "  | lower(7) | upper(7)"
        data = np.hstack([self.params, self.lower, self.upper])
        np.savetxt(path, data, fmt="%.17g", header=header)

    @classmethod
    def load(cls, path) -> "MaskSet":
        data = np.atleast_2d(np.loadtxt(Path(path)))
        if data.shape[1] == N_VARS:
            return cls(data, -np.inf, np.inf)
        if data.shape[1] != 3 * N_VARS:
            raise ValueError(f"expected 7 or 21 columns, found {data.shape[1]}")
        return cls(data[:, :7], data[:, 7:14], data[:, 14:])


def signed_measure(mask: Mask | np.ndarray, point) -> float:
    """Elliptical distance: negative inside, zero on, positive outside."""
    m = mask.as_array() if isinstance(mask, Mask) else np.asarray(mask, float)
    x, y, a, b, th = m[:5]
    if a <= 0 or b <= 0:
        raise ValueError("mask axes must be positive")
    dx, dy = point[0] - x, point[1] - y
    X = np.cos(th) * dx + np.sin(th) * dy
    Y = -np.sin(th) * dx + np.cos(th) * dy
    return (X / a) ** 2 + (Y / b) ** 2 - 1.0


def element_density_wrt_mask(alpha: float, d) -> np.ndarray:
    """Logistic density factor of one mask, 1 / (1 + exp(-alpha d))."""
    if np.any(np.asarray(alpha) <= 0):
        raise ValueError("alpha must be positive")
    return expit(np.clip(alpha * np.asarray(d, float), -EXP_CLAMP, EXP_CLAMP))


class DensityField:
    """Element densities of a mask set and their derivatives.

    Intermediate arrays of shape (n_el, m_n) are kept so that products with
    the Jacobian can be formed without materialising it.
    """

    def __init__(self, mask_set: MaskSet, centroids: np.ndarray):
        P = mask_set.params
        self.mask_set = mask_set
        self.centroids = np.asarray(centroids, float)
        x, y, a, b, th, al, ga = (P[:, k] for k in range(N_VARS))
        if np.any(a <= 0) or np.any(b <= 0):
            raise ValueError("mask axes must be positive")
        dx = self.centroids[:, 0:1] - x
        dy = self.centroids[:, 1:2] - y
        c, s = np.cos(th), np.sin(th)
        self.X = c * dx + s * dy
        self.Y = -s * dx + c * dy
        self.d = (self.X / a) ** 2 + (self.Y / b) ** 2 - 1.0
        z = np.clip(al * self.d, -EXP_CLAMP, EXP_CLAMP)
        self.log_factor = -np.logaddexp(0.0, -z)  # log sigmoid(z)
        self.one_minus = expit(-z)  # 1 - sigmoid(z)
        self.rho = np.exp(self.log_factor @ ga)

    @property
    def n_masks(self) -> int:
        return len(self.mask_set)

    def _partials(self, weight):
        """Columns of d rho / d psi scaled by ``weight`` (n_el,), per variable.

        Returns a list of seven (n_el, m_n) arrays.
        """
        P = self.mask_set.params
        a, b, th, al, ga = P[:, 2], P[:, 3], P[:, 4], P[:, 5], P[:, 6]
        X, Y = self.X, self.Y
        c, s = np.cos(th), np.sin(th)
        wr = (weight * self.rho)[:, None]
        geo = wr * (ga * al) * self.one_minus
        Xa, Yb = X / a**2, Y / b**2
        dd_dx = 2.0 * (-Xa * c + Yb * s)
        dd_dy = -2.0 * (Xa * s + Yb * c)
        dd_da = -2.0 * X**2 / a**3
        dd_db = -2.0 * Y**2 / b**3
        dd_dth = 2.0 * X * Y * (1.0 / a**2 - 1.0 / b**2)
        return [
            geo * dd_dx,
            geo * dd_dy,
            geo * dd_da,
            geo * dd_db,
            geo * dd_dth,
            wr * ga * self.d * self.one_minus,
            wr * self.log_factor,
        ]

    def vjp(self, g) -> np.ndarray:
        """Contract d rho / d psi with ``g`` over elements; returns (7 m_n,)."""
        g = np.asarray(g, float)
        cols = [p.sum(axis=0) for p in self._partials(g)]
        return np.column_stack(cols).ravel()

    def jacobian(self, prune: float = PRUNE_TOL) -> sp.csr_matrix:
        """Sparse d rho_i / d psi_jk, shape (n_el, 7 m_n), tiny entries dropped."""
        parts = self._partials(np.ones(len(self.rho)))
        dense = np.stack(parts, axis=-1).reshape(len(self.rho), -1)
        dense[np.abs(dense) < prune] = 0.0
        return sp.csr_matrix(dense)


def density_field(mask_set: MaskSet, mesh_or_centroids) -> DensityField:
    centroids = (
        mesh_or_centroids.centroids() if hasattr(mesh_or_centroids, "centroids")
        else mesh_or_centroids
    )
    return DensityField(mask_set, centroids)


def density_jacobian(mask_set: MaskSet, mesh_or_centroids) -> sp.csr_matrix:
    return density_field(mask_set, mesh_or_centroids).jacobian()

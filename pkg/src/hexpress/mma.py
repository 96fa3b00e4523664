"""Method of Moving Asymptotes (Svanberg, 1987).

Solves one convex separable subproblem per call with a primal-dual interior
point method on the dual variables. Problem form::

    min  f0(x) + a0 z + sum(c_i y_i + d_i y_i^2 / 2)
    s.t. f_i(x) - a_i z - y_i <= 0,   xmin <= x <= xmax,   y, z >= 0
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ALBEFA = 0.1
RAA0 = 1e-5


@dataclass
class MMAState:
    """Iteration history the asymptote update needs."""

    n: int
    m: int
    iteration: int = 0
    xold1: np.ndarray | None = None
    xold2: np.ndarray | None = None
    low: np.ndarray | None = None
    upp: np.ndarray | None = None
    a0: float = 1.0
    a: np.ndarray = field(default=None)
    c: np.ndarray = field(default=None)
    d: np.ndarray = field(default=None)
    move: float = 0.5
    asy_init: float = 0.5
    asy_incr: float = 1.2
    asy_decr: float = 0.7
    epsimin: float = 1e-10
    last_kkt_residual: float = np.nan

    def __post_init__(self):
        if self.a is None:
            self.a = np.zeros(self.m)
        if self.c is None:
            self.c = np.full(self.m, 1000.0)
        if self.d is None:
            self.d = np.ones(self.m)


def _check_finite(arr, what, names):
    bad = np.flatnonzero(~np.isfinite(np.asarray(arr, float).ravel()))
    if bad.size:
        k = int(bad[0])
        if names is not None and arr.ndim == 1:
            label = names[k]
        elif names is not None:
            label = f"constraint {k // arr.shape[1]}, {names[k % arr.shape[1]]}"
        else:
            label = f"index {k}"
        raise FloatingPointError(f"non-finite {what} at {label}")


def mma_step(x, f0val, df0dx, fval, dfdx, xmin, xmax, state: MMAState, names=None) -> np.ndarray:
    """One MMA update of ``x``; ``state`` is advanced in place.

    ``fval`` (m,) are constraint values (feasible when <= 0) and ``dfdx``
    (m, n) their gradients.
    """
    x = np.asarray(x, float)
    df0dx = np.asarray(df0dx, float)
    fval = np.atleast_1d(np.asarray(fval, float))
    dfdx = np.atleast_2d(np.asarray(dfdx, float))
    xmin = np.broadcast_to(np.asarray(xmin, float), x.shape)
    xmax = np.broadcast_to(np.asarray(xmax, float), x.shape)
    _check_finite(df0dx, "objective gradient", names)
    _check_finite(dfdx, "constraint gradient", names)
    if not np.isfinite(f0val) or not np.all(np.isfinite(fval)):
        raise FloatingPointError("non-finite objective or constraint value")
    if np.any(xmin > xmax):
        raise ValueError("inconsistent bounds")

    state.iteration += 1
    k = state.iteration
    span = xmax - xmin
    if k <= 2 or state.low is None:
        low = x - state.asy_init * span
        upp = x + state.asy_init * span
    else:
        zzz = (x - state.xold1) * (state.xold1 - state.xold2)
        factor = np.ones_like(x)
        factor[zzz > 0] = state.asy_incr
        factor[zzz < 0] = state.asy_decr
        low = x - factor * (state.xold1 - state.low)
        upp = x + factor * (state.upp - state.xold1)
        low = np.clip(low, x - 10 * span, x - 0.01 * span)
        upp = np.clip(upp, x + 0.01 * span, x + 10 * span)

    alfa = np.maximum.reduce([low + ALBEFA * (x - low), x - state.move * span, xmin])
    beta = np.minimum.reduce([upp - ALBEFA * (upp - x), x + state.move * span, xmax])

    xmami = np.maximum(span, 1e-5)
    ux2 = (upp - x) ** 2
    xl2 = (x - low) ** 2
    p0 = np.maximum(df0dx, 0.0)
    q0 = np.maximum(-df0dx, 0.0)
    pq0 = 0.001 * (p0 + q0) + RAA0 / xmami
    p0 = (p0 + pq0) * ux2
    q0 = (q0 + pq0) * xl2
    P = np.maximum(dfdx, 0.0)
    Q = np.maximum(-dfdx, 0.0)
    PQ = 0.001 * (P + Q) + RAA0 / xmami
    P = (P + PQ) * ux2
    Q = (Q + PQ) * xl2
    b = P @ (1.0 / (upp - x)) + Q @ (1.0 / (x - low)) - fval

    sub = Subproblem(low, upp, alfa, beta, p0, q0, P, Q, state.a0, state.a, b, state.c, state.d)
    sol = sub.solve(state.epsimin)
    state.last_kkt_residual = sub.kkt_residual(sol)

    state.xold2 = x.copy() if state.xold1 is None else state.xold1
    state.xold1 = x.copy()
    state.low, state.upp = low, upp
    return sol["x"]


class Subproblem:
    """The convex MMA approximation and its primal-dual solver."""

    def __init__(self, low, upp, alfa, beta, p0, q0, P, Q, a0, a, b, c, d):
        self.low, self.upp, self.alfa, self.beta = low, upp, alfa, beta
        self.p0, self.q0, self.P, self.Q = p0, q0, P, Q
        self.a0, self.a, self.b, self.c, self.d = a0, a, b, c, d

    def residual(self, v, epsi):
        x, y, z, lam = v["x"], v["y"], v["z"], v["lam"]
        xsi, eta, mu, zet, s = v["xsi"], v["eta"], v["mu"], v["zet"], v["s"]
        ux1 = self.upp - x
        xl1 = x - self.low
        plam = self.p0 + self.P.T @ lam
        qlam = self.q0 + self.Q.T @ lam
        gvec = self.P @ (1 / ux1) + self.Q @ (1 / xl1)
        dpsidx = plam / ux1**2 - qlam / xl1**2
        return np.concatenate([
            dpsidx - xsi + eta,
            self.c + self.d * y - mu - lam,
            [self.a0 - zet - self.a @ lam],
            gvec - self.a * z - y + s - self.b,
            xsi * (x - self.alfa) - epsi,
            eta * (self.beta - x) - epsi,
            mu * y - epsi,
            [zet * z - epsi],
            lam * s - epsi,
        ])

    def kkt_residual(self, v) -> float:
        """Max-norm KKT residual with exact complementarity."""
        return float(np.abs(self.residual(v, 0.0)).max())

    def solve(self, epsimin=1e-10):
        n, m = len(self.low), len(self.b)
        a, c, d = self.a, self.c, self.d
        x = 0.5 * (self.alfa + self.beta)
        v = {
            "x": x,
            "y": np.ones(m),
            "z": 1.0,
            "lam": np.ones(m),
            "xsi": np.maximum(1 / (x - self.alfa), 1),
            "eta": np.maximum(1 / (self.beta - x), 1),
            "mu": np.maximum(np.ones(m), 0.5 * c),
            "zet": 1.0,
            "s": np.ones(m),
        }
        epsi = 1.0
        while epsi > epsimin * 0.999:
            res = self.residual(v, epsi)
            norm = np.linalg.norm(res)
            rmax = np.abs(res).max()
            it = 0
            while rmax > 0.9 * epsi and it < 200:
                it += 1
                x, y, z, lam = v["x"], v["y"], v["z"], v["lam"]
                xsi, eta, mu, zet, s = v["xsi"], v["eta"], v["mu"], v["zet"], v["s"]
                ux1 = self.upp - x
                xl1 = x - self.low
                plam = self.p0 + self.P.T @ lam
                qlam = self.q0 + self.Q.T @ lam
                gvec = self.P @ (1 / ux1) + self.Q @ (1 / xl1)
                GG = self.P / ux1**2 - self.Q / xl1**2
                dpsidx = plam / ux1**2 - qlam / xl1**2
                xa = x - self.alfa
                bx_ = self.beta - x
                delx = dpsidx - epsi / xa + epsi / bx_
                dely = c + d * y - lam - epsi / y
                delz = self.a0 - a @ lam - epsi / z
                dellam = gvec - a * z - y - self.b + epsi / lam
                diagx = 2 * plam / ux1**3 + 2 * qlam / xl1**3 + xsi / xa + eta / bx_
                diagy = d + mu / y
                diaglamyi = s / lam + 1 / diagy
                if m < n:
                    blam = dellam + dely / diagy - GG @ (delx / diagx)
                    Alam = np.diag(diaglamyi) + (GG / diagx) @ GG.T
                    AA = np.block([[Alam, a[:, None]], [a[None, :], np.array([[-zet / z]])]])
                    sol = np.linalg.solve(AA, np.concatenate([blam, [delz]]))
                    dlam, dz = sol[:m], sol[m]
                    dx = -delx / diagx - (GG.T @ dlam) / diagx
                else:
                    dellamyi = dellam + dely / diagy
                    Axx = np.diag(diagx) + (GG.T / diaglamyi) @ GG
                    azz = zet / z + a @ (a / diaglamyi)
                    axz = -GG.T @ (a / diaglamyi)
                    bxv = delx + GG.T @ (dellamyi / diaglamyi)
                    bz = delz - a @ (dellamyi / diaglamyi)
                    AA = np.block([[Axx, axz[:, None]], [axz[None, :], np.array([[azz]])]])
                    sol = np.linalg.solve(AA, -np.concatenate([bxv, [bz]]))
                    dx, dz = sol[:n], sol[n]
                    dlam = (GG @ dx) / diaglamyi - dz * a / diaglamyi + dellamyi / diaglamyi
                dy = -dely / diagy + dlam / diagy
                dxsi = -xsi + epsi / xa - xsi * dx / xa
                deta = -eta + epsi / bx_ + eta * dx / bx_
                dmu = -mu + epsi / y - mu * dy / y
                dzet = -zet + epsi / z - zet * dz / z
                ds = -s + epsi / lam - s * dlam / lam
                step = {"x": dx, "y": dy, "z": dz, "lam": dlam, "xsi": dxsi,
                        "eta": deta, "mu": dmu, "zet": dzet, "s": ds}
                positive = np.concatenate([np.atleast_1d(v[k]) for k in ("y", "z", "lam", "xsi", "eta", "mu", "zet", "s")])
                dpositive = np.concatenate([np.atleast_1d(step[k]) for k in ("y", "z", "lam", "xsi", "eta", "mu", "zet", "s")])
                stmxx = np.max(-1.01 * dpositive / positive)
                stmalfa = np.max(-1.01 * dx / xa)
                stmbeta = np.max(1.01 * dx / bx_)
                steg = 1.0 / max(stmxx, stmalfa, stmbeta, 1.0)
                old = v
                resinew = 2 * norm
                itto = 0
                while resinew > norm and itto < 50:
                    itto += 1
                    v = {k: old[k] + steg * step[k] for k in old}
                    res = self.residual(v, epsi)
                    resinew = np.linalg.norm(res)
                    steg /= 2
                norm = resinew
                rmax = np.abs(res).max()
            epsi *= 0.1
        return v

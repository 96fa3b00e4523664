import numpy as np
import pytest
from scipy.optimize import minimize

from hexpress.mma import MMAState, Subproblem, mma_step


def iterate(f, df, g, dg, x0, lo, hi, iters):
    x = np.asarray(x0, float)
    st = MMAState(n=len(x), m=len(g(x)))
    for _ in range(iters):
        x = mma_step(x, f(x), df(x), g(x), dg(x), lo, hi, st)
    return x, st


def test_one_variable_active_constraint():
    # min (x - 0.3)^2 subject to x >= 0.5: the optimum sits on the constraint
    x, st = iterate(lambda x: (x[0] - 0.3) ** 2, lambda x: np.array([2 * (x[0] - 0.3)]),
                    lambda x: np.array([0.5 - x[0]]), lambda x: np.array([[-1.0]]), [0.9], 0.0, 1.0, 30)
    assert abs(x[0] - 0.5) <= 1e-6
    assert st.last_kkt_residual <= 1e-9


def test_matches_slsqp_on_constrained_problem():
    f = lambda x: (x[0] - 1) ** 2 + 2 * (x[1] - 2) ** 2 + x[0] * x[1] / 4
    df = lambda x: np.array([2 * (x[0] - 1) + x[1] / 4, 4 * (x[1] - 2) + x[0] / 4])
    g = lambda x: np.array([x[0] ** 2 + x[1] ** 2 - 2.0, x[0] - 2 * x[1] + 0.5])
    dg = lambda x: np.array([[2 * x[0], 2 * x[1]], [1.0, -2.0]])
    bounds = [(0.0, 3.0), (0.0, 3.0)]
    ref = minimize(f, [1.0, 1.0], jac=df, bounds=bounds, method="SLSQP",
                   constraints=[{"type": "ineq", "fun": lambda x: -g(x), "jac": lambda x: -dg(x)}],
                   options={"ftol": 1e-14, "maxiter": 200})
    assert ref.success
    x, _ = iterate(f, df, g, dg, [2.5, 0.5], 0.0, 3.0, 80)
    np.testing.assert_allclose(x, ref.x, atol=1e-5)
    assert np.all(g(x) <= 1e-6)


def test_reduces_constraint_violation():
    # minimize -sum(x) with sum(x) <= 1 starting infeasible
    n = 5
    x0 = np.full(n, 0.8)
    st = MMAState(n=n, m=1)
    x = mma_step(x0, -x0.sum(), -np.ones(n), np.array([x0.sum() - 1]), np.ones((1, n)), 0.0, 1.0, st)
    assert x.sum() - 1 < x0.sum() - 1
    assert np.all((x >= 0) & (x <= 1))


def test_respects_move_limit_and_bounds(rng):
    n = 6
    x0 = rng.uniform(0.2, 0.8, n)
    st = MMAState(n=n, m=1, move=0.1)
    g = rng.standard_normal(n)
    x = mma_step(x0, 0.0, g, np.array([-1.0]), np.zeros((1, n)), 0.0, 1.0, st)
    assert np.all(np.abs(x - x0) <= 0.1 + 1e-12)
    assert np.all((x >= 0) & (x <= 1))
    # descent direction
    assert g @ (x - x0) < 0


def test_nonfinite_gradient_names_variable():
    st = MMAState(n=2, m=1)
    with pytest.raises(FloatingPointError, match="mask 0 gamma"):
        mma_step(np.array([0.5, 0.5]), 1.0, np.array([1.0, np.nan]), np.array([0.0]), np.zeros((1, 2)),
                 0.0, 1.0, st, names=["mask 0 alpha", "mask 0 gamma"])
    with pytest.raises(FloatingPointError, match="constraint 0"):
        mma_step(np.array([0.5, 0.5]), 1.0, np.ones(2), np.array([0.0]), np.array([[np.inf, 0.0]]),
                 0.0, 1.0, st, names=["a", "b"])
    with pytest.raises(ValueError):
        mma_step(np.array([0.5]), 1.0, np.ones(1), np.array([0.0]), np.zeros((1, 1)), 1.0, 0.0, MMAState(1, 1))


def test_subproblem_solution_satisfies_kkt(rng):
    n, m = 4, 2
    low, upp = np.full(n, -1.0), np.full(n, 2.0)
    alfa, beta = np.full(n, -0.5), np.full(n, 1.5)
    p0, q0 = rng.uniform(0.1, 1, n), rng.uniform(0.1, 1, n)
    P, Q = rng.uniform(0.1, 1, (m, n)), rng.uniform(0.1, 1, (m, n))
    b = rng.uniform(0.5, 1.0, m)
    sub = Subproblem(low, upp, alfa, beta, p0, q0, P, Q, 1.0, np.zeros(m), b, np.full(m, 1000.0), np.ones(m))
    sol = sub.solve(1e-10)
    assert sub.kkt_residual(sol) < 1e-8
    assert np.all((sol["x"] >= alfa - 1e-12) & (sol["x"] <= beta + 1e-12))


def test_more_constraints_than_variables():
    x, st = iterate(lambda x: -x[0], lambda x: np.array([-1.0]),
                    lambda x: np.array([x[0] - 0.7, 2 * x[0] - 1.6, -x[0]]),
                    lambda x: np.array([[1.0], [2.0], [-1.0]]), [0.1], 0.0, 1.0, 40)
    assert x[0] == pytest.approx(0.7, abs=1e-5)

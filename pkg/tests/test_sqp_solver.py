"""SQP loop on analytic benchmarks: quadratics, Rosenbrock, constrained cases."""

import numpy as np
import pytest

from mpcc.solver import HorizonSolution, SolverSettings, bfgs_update, solve


class DiagQuadratic:
    """0.5 z'Qz - b'z with diagonal positive Q; minimiser Q^{-1} b."""

    def __init__(self, d, b):
        self.d = np.asarray(d, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.n = self.d.size

    def initial_guess(self):
        return np.zeros(self.n)

    def objective(self, z):
        return float(0.5 * z @ (self.d * z) - self.b @ z)

    def gradient(self, z):
        return self.d * z - self.b


class GeneralQp:
    """0.5 z'Qz + a'z with optional linear equalities/inequalities (c <= 0)."""

    def __init__(self, Q, a, A_eq=None, b_eq=None, A_in=None, b_in=None,
                 z0=None, lb=None, ub=None):
        self.Q, self.a = np.asarray(Q, float), np.asarray(a, float)
        self.n = self.a.size
        self.A_eq = np.zeros((0, self.n)) if A_eq is None else np.asarray(A_eq, float)
        self.b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, float)
        self.A_in = np.zeros((0, self.n)) if A_in is None else np.asarray(A_in, float)
        self.b_in = np.zeros(0) if b_in is None else np.asarray(b_in, float)
        self._z0 = np.zeros(self.n) if z0 is None else np.asarray(z0, float)
        if lb is not None:
            self.lb = np.asarray(lb, float)
        if ub is not None:
            self.ub = np.asarray(ub, float)

    def initial_guess(self):
        return self._z0.copy()

    def objective(self, z):
        return float(0.5 * z @ self.Q @ z + self.a @ z)

    def gradient(self, z):
        return self.Q @ z + self.a

    def eq(self, z):
        return self.A_eq @ z - self.b_eq

    def eq_jac(self, z):
        return self.A_eq.copy()

    def ineq(self, z):
        return self.A_in @ z - self.b_in

    def ineq_jac(self, z):
        return self.A_in.copy()


class Rosenbrock:
    n = 2

    def __init__(self, z0=(-1.2, 1.0)):
        self._z0 = np.array(z0, dtype=float)

    def initial_guess(self):
        return self._z0.copy()

    def objective(self, z):
        return float((1.0 - z[0]) ** 2 + 100.0 * (z[1] - z[0] ** 2) ** 2)

    def gradient(self, z):
        return np.array([
            -2.0 * (1.0 - z[0]) - 400.0 * z[0] * (z[1] - z[0] ** 2),
            200.0 * (z[1] - z[0] ** 2),
        ])


class CircleRosenbrock(Rosenbrock):
    """Rosenbrock restricted to the unit disc; optimum on the boundary."""

    def ineq(self, z):
        return np.array([z[0] ** 2 + z[1] ** 2 - 1.0])

    def ineq_jac(self, z):
        return np.array([[2.0 * z[0], 2.0 * z[1]]])


def test_diagonal_quadratic_to_analytic_optimum():
    prob = DiagQuadratic([1.0, 4.0, 9.0, 0.5], [1.0, -2.0, 3.0, 0.25])
    sol = solve(prob, SolverSettings(kkt_tolerance=1e-9, max_iterations=50))
    assert sol.status == "converged"
    np.testing.assert_allclose(sol.z, prob.b / prob.d, atol=1e-8)


def test_equality_qp_hand_kkt():
    # min 0.5 x'diag(1,2)x - (1,1)'x s.t. x0 + x1 = 1 -> x = (2/3, 1/3)
    prob = GeneralQp(np.diag([1.0, 2.0]), [-1.0, -1.0],
                     A_eq=[[1.0, 1.0]], b_eq=[1.0])
    sol = solve(prob, SolverSettings(kkt_tolerance=1e-10, max_iterations=40))
    assert sol.status == "converged"
    np.testing.assert_allclose(sol.z, [2.0 / 3.0, 1.0 / 3.0], atol=1e-8)


def test_inequality_qp_hand_kkt():
    # min 0.5|x|^2 - x0 with x0 <= 0.25 active at the optimum
    prob = GeneralQp(np.eye(2), [-1.0, 0.0], A_in=[[1.0, 0.0]], b_in=[0.25])
    sol = solve(prob, SolverSettings(kkt_tolerance=1e-10, max_iterations=40))
    assert sol.status == "converged"
    np.testing.assert_allclose(sol.z, [0.25, 0.0], atol=1e-8)


def test_qp_iteration_budget():
    # linear-constrained quadratics finish within dimension + 5 QP solves
    rng = np.random.default_rng(3)
    for n in (2, 4, 6):
        V, _ = np.linalg.qr(rng.normal(size=(n, n)))
        Q = V @ np.diag(rng.uniform(0.5, 3.0, size=n)) @ V.T
        a = rng.normal(size=n)
        A_in = rng.normal(size=(3, n))
        b_in = A_in @ rng.normal(size=n) + rng.uniform(0.0, 1.0, size=3)
        prob = GeneralQp(Q, a, A_in=A_in, b_in=b_in)
        sol = solve(prob, SolverSettings(kkt_tolerance=1e-7, max_iterations=60))
        assert sol.status == "converged"
        assert sol.iterations <= n + 5


def test_rosenbrock_reaches_global_minimum():
    sol = solve(Rosenbrock(), SolverSettings(kkt_tolerance=1e-9,
                                             max_iterations=300))
    assert sol.status == "converged"
    np.testing.assert_allclose(sol.z, [1.0, 1.0], atol=1e-6)


def test_constrained_rosenbrock_matches_reference():
    from scipy.optimize import NonlinearConstraint, minimize

    ref = minimize(
        lambda z: (1 - z[0]) ** 2 + 100 * (z[1] - z[0] ** 2) ** 2,
        x0=[0.5, 0.5], method="trust-constr",
        jac=lambda z: np.array([-2 * (1 - z[0]) - 400 * z[0] * (z[1] - z[0] ** 2),
                                200 * (z[1] - z[0] ** 2)]),
        constraints=[NonlinearConstraint(lambda z: z[0] ** 2 + z[1] ** 2, 0.0, 1.0)],
        options={"xtol": 1e-12, "gtol": 1e-12})
    prob = CircleRosenbrock(z0=(0.5, 0.5))
    sol = solve(prob, SolverSettings(kkt_tolerance=1e-9, max_iterations=300))
    assert sol.status == "converged"
    np.testing.assert_allclose(sol.z, ref.x, atol=1e-6)
    assert sol.z[0] ** 2 + sol.z[1] ** 2 <= 1.0 + 1e-9


def test_bound_constrained_minimum_at_face():
    prob = GeneralQp(np.eye(1) * 2.0, [2.0], z0=[1.0], lb=[0.0], ub=[5.0])
    sol = solve(prob, SolverSettings(kkt_tolerance=1e-10))
    assert sol.status == "converged"
    np.testing.assert_allclose(sol.z, [0.0], atol=1e-10)


def test_merit_monotone_on_feasible_path():
    # feasible start + linear constraints keep iterates feasible, so the
    # merit equals the objective and must decrease at every accepted step
    prob = GeneralQp(np.diag([1.0, 3.0]), [-2.0, 1.0],
                     A_in=[[1.0, 1.0]], b_in=[0.0], z0=[-1.0, -1.0])
    sol = solve(prob, SolverSettings(kkt_tolerance=1e-10, max_iterations=60))
    assert sol.status == "converged"
    hist = np.array(sol.merit_history)
    assert np.all(np.diff(hist) <= 1e-10)


def test_deterministic_repeat():
    s = SolverSettings(kkt_tolerance=1e-9, max_iterations=300)
    a = solve(Rosenbrock(), s)
    b = solve(Rosenbrock(), s)
    assert a.z.tobytes() == b.z.tobytes()
    assert a.iterations == b.iterations
    assert a.merit_history == b.merit_history
    assert a.objective == b.objective


def test_time_budget_short_circuits():
    sol = solve(Rosenbrock(), SolverSettings(time_budget=0.0, max_iterations=300))
    assert sol.status == "time_out"
    assert sol.iterations == 1


def test_warm_start_vector_reused():
    prob = Rosenbrock()
    ref = solve(prob, SolverSettings(kkt_tolerance=1e-9, max_iterations=300))
    warm = HorizonSolution(z=np.array([1.0, 1.0]), states=None, inputs=None,
                           objective=0.0, kkt_residual=0.0,
                           constraint_violation=0.0, iterations=0,
                           solve_time=0.0, status="converged",
                           merit_history=())
    sol = solve(prob, SolverSettings(kkt_tolerance=1e-9), warm=warm)
    assert sol.status == "converged"
    assert sol.iterations <= 2
    np.testing.assert_allclose(sol.z, ref.z, atol=1e-6)


def test_bfgs_recovers_quadratic_hessian():
    rng = np.random.default_rng(5)
    n = 5
    V, _ = np.linalg.qr(rng.normal(size=(n, n)))
    Q = V @ np.diag([0.5, 1.0, 2.0, 4.0, 8.0]) @ V.T
    H = np.eye(n)
    for i in range(n):  # eigen-directions keep earlier secant pairs intact
        s = V[:, i]
        H = bfgs_update(H, s, Q @ s)
    np.testing.assert_allclose(H, Q, atol=1e-6)


def test_bfgs_zero_step_is_noop():
    H = np.diag([1.0, 2.0])
    H2 = bfgs_update(H, np.zeros(2), np.array([1.0, 1.0]))
    assert H2 is H


def test_bfgs_stays_spd_under_random_updates():
    rng = np.random.default_rng(9)
    n = 6
    for _ in range(1000):
        A = rng.normal(size=(n, n))
        H = A @ A.T + 0.1 * np.eye(n)
        s = rng.normal(size=n)
        y = rng.normal(size=n)  # arbitrary, often negative curvature
        H2 = bfgs_update(H, s, y)
        np.linalg.cholesky(H2)  # raises if damping ever failed
        np.testing.assert_allclose(H2, H2.T, atol=1e-9)

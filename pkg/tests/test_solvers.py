import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treedp.errors import SingularJacobian
from treedp.polyhedra import HPolyhedron
from treedp.solvers import (LinearProgram, LpSession, NonlinearSystem, QuadraticProgram,
                            SecondOrderCone, Status, lp_minimize, newton_solve, solve_lp, solve_qp)


def test_lp_vertex():
    # max x + y over the unit square with x + 2y <= 2
    P = HPolyhedron.box([0, 0], [1, 1]).intersect(HPolyhedron.from_inequalities([[1, 2]], [2]))
    sol = solve_lp(LinearProgram(np.array([-1.0, -1.0]), P))
    assert sol.optimal and np.allclose(sol.x, [1, 0.5]) and np.isclose(sol.objective, -1.5)


def test_lp_statuses():
    assert lp_minimize([1.0], HPolyhedron.from_inequalities([[1.0], [-1.0]], [-1, 0])).status \
        is Status.INFEASIBLE
    assert lp_minimize([1.0], HPolyhedron.from_inequalities([[1.0]], [1.0])).status \
        is Status.UNBOUNDED


def test_lp_session_matches_fresh_solves(rng):
    A = rng.standard_normal((8, 3))
    b = rng.uniform(0.5, 1.0, 8)
    A = np.vstack([A, np.eye(3), -np.eye(3)])
    b = np.concatenate([b, np.full(6, 2.0)])
    s = LpSession(A, b)
    P = HPolyhedron.from_inequalities(A, b)
    for _ in range(5):
        c = rng.standard_normal(3)
        assert np.isclose(s.minimize(c).objective, lp_minimize(c, P).objective, atol=1e-8)
    s.set_row_upper(0, np.inf)
    c = -A[0]
    P0 = HPolyhedron.from_inequalities(A[1:], b[1:])
    assert np.isclose(s.minimize(c).objective, lp_minimize(c, P0).objective, atol=1e-8)


def test_qp_closed_form():
    # min 0.5||x||^2 - [1, 2] x  s.t. x1 + x2 = 1  ->  x = (0, 1)
    qp = QuadraticProgram(np.eye(2), np.array([-1.0, -2.0]), HPolyhedron([[1, 1]], [1], dim=2))
    sol = solve_qp(qp)
    assert sol.optimal and np.allclose(sol.x, [0, 1], atol=1e-8)
    assert sol.kkt_residual < 1e-7


def test_qp_with_cone():
    # min x1 + x2 over the unit disc
    cone = SecondOrderCone(np.eye(2), np.zeros(2), 1.0)
    sol = solve_qp(QuadraticProgram(np.zeros((2, 2)), np.ones(2), HPolyhedron.universe(2),
                                    (cone,)))
    assert sol.optimal and np.allclose(sol.x, -np.ones(2) / np.sqrt(2), atol=1e-7)


def test_qp_infeasible():
    P = HPolyhedron.from_inequalities([[1.0], [-1.0]], [-1, 0])
    assert solve_qp(QuadraticProgram(np.eye(1), np.zeros(1), P)).status is Status.INFEASIBLE


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_qp_kkt_against_linear_solve(seed):
    """Equality-constrained QP optimum equals the KKT linear system solution."""
    rng = np.random.default_rng(seed)
    n, m = 4, 2
    M = rng.standard_normal((n, n))
    Q = M.T @ M + 0.1 * np.eye(n)
    q = rng.standard_normal(n)
    A = rng.standard_normal((m, n))
    b = rng.standard_normal(m)
    K = np.block([[Q, A.T], [A, np.zeros((m, m))]])
    x_ref = np.linalg.solve(K, np.concatenate([-q, b]))[:n]
    sol = solve_qp(QuadraticProgram(Q, q, HPolyhedron(A, b, dim=n)))
    assert np.allclose(sol.x, x_ref, atol=1e-6)


def test_newton_square_root():
    sol = newton_solve(NonlinearSystem(lambda x: x ** 2 - 2, lambda x: np.diag(2 * x),
                                       np.array([1.0])))
    assert sol.optimal and np.isclose(sol.x[0], np.sqrt(2), atol=1e-12)


def test_newton_singular():
    with pytest.raises(SingularJacobian):
        newton_solve(NonlinearSystem(lambda x: x ** 2 + 1, lambda x: np.zeros((1, 1)),
                                     np.array([0.0])))

"""Numerical backends: LP, convex QP (with optional second-order cones) and
damped Newton for square nonlinear systems.

LPs go to HiGHS (via ``highspy``); QPs go to Clarabel.
Both are wrapped so that callers see one :class:`Solution` type with a
status, the primal point and a KKT residual computed here from the returned
multipliers (not copied from the backend's own report).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import highspy
import numpy as np
import scipy.sparse as sp

from .errors import InputError, NumericalFailure, SingularJacobian

logger = logging.getLogger(__name__)

PSD_TOL = 1e-10


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAXITER = "MaxIter"


@dataclass
class Solution:
    status: Status
    x: np.ndarray | None = None
    objective: float = float("nan")
    kkt_residual: float = float("nan")
    iterations: int = 0
    duals: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass
class LinearProgram:
    """minimize ``c @ x`` over ``constraints`` (an :class:`HPolyhedron`)."""

    c: np.ndarray
    constraints: object


@dataclass
class SecondOrderCone:
    """The convex constraint ``||F x + g||_2 <= e``."""

    F: np.ndarray
    g: np.ndarray
    e: float = 1.0


@dataclass
class QuadraticProgram:
    """minimize ``0.5 x'Qx + q'x`` over ``constraints`` and optional cones."""

    Q: np.ndarray
    q: np.ndarray
    constraints: object
    cones: Sequence[SecondOrderCone] = ()


@dataclass
class NonlinearSystem:
    residual: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray


def _rows(P):
    n = P.dim
    Aeq = np.asarray(P.Aeq, float).reshape(-1, n)
    Ain = np.asarray(P.Ain, float).reshape(-1, n)
    return Aeq, np.asarray(P.beq, float).ravel(), Ain, np.asarray(P.bin, float).ravel()


def _lp_arrays(c, Ain, bin_, Aeq, beq, lb=None, ub=None):
    """Dense LP ``min c'x : Ain x <= bin, Aeq x = beq, lb <= x <= ub`` through HiGHS."""
    c = np.asarray(c, float).ravel()
    n = c.size
    inf = highspy.kHighsInf
    Ain = np.zeros((0, n)) if Ain is None else np.asarray(Ain, float).reshape(-1, n)
    Aeq = np.zeros((0, n)) if Aeq is None else np.asarray(Aeq, float).reshape(-1, n)
    bin_ = np.zeros(0) if bin_ is None else np.asarray(bin_, float).ravel()
    beq = np.zeros(0) if beq is None else np.asarray(beq, float).ravel()
    lo = np.full(n, -inf) if lb is None else np.broadcast_to(np.asarray(lb, float), n).copy()
    hi = np.full(n, inf) if ub is None else np.broadcast_to(np.asarray(ub, float), n).copy()
    lo[~np.isfinite(lo)] = -inf
    hi[~np.isfinite(hi)] = inf
    mi, me = Ain.shape[0], Aeq.shape[0]
    A = np.vstack([Ain, Aeq])
    M = sp.csc_matrix(A)

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("primal_feasibility_tolerance", 1e-10)
    h.setOptionValue("dual_feasibility_tolerance", 1e-10)
    h.setOptionValue("random_seed", 0)
    lp = highspy.HighsLp()
    lp.num_col_ = n
    lp.num_row_ = mi + me
    lp.col_cost_ = c
    lp.col_lower_ = lo
    lp.col_upper_ = hi
    lp.row_lower_ = np.concatenate([np.full(mi, -inf), beq])
    lp.row_upper_ = np.concatenate([bin_, beq])
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.num_col_ = n
    lp.a_matrix_.num_row_ = mi + me
    lp.a_matrix_.start_ = M.indptr
    lp.a_matrix_.index_ = M.indices
    lp.a_matrix_.value_ = M.data
    h.passModel(lp)
    h.run()
    status = h.getModelStatus()
    if status == highspy.HighsModelStatus.kUnboundedOrInfeasible:
        # presolve could not tell; rerun without it to get a definite answer
        h.setOptionValue("presolve", "off")
        h.run()
        status = h.getModelStatus()
    it = int(h.getInfo().simplex_iteration_count)
    S = highspy.HighsModelStatus
    if status == S.kOptimal:
        sol = h.getSolution()
        x = np.asarray(sol.col_value, float)
        row_dual = np.asarray(sol.row_dual, float)
        col_dual = np.asarray(sol.col_dual, float)
        lam, nu = -row_dual[:mi], -row_dual[mi:]
        grad = c + Ain.T @ lam + Aeq.T @ nu - col_dual
        primal = 0.0
        comp = 0.0
        if mi:
            slack = bin_ - Ain @ x
            primal = max(primal, float(np.max(-slack, initial=0.0)))
            comp = float(np.max(np.abs(lam * slack), initial=0.0))
        if me:
            primal = max(primal, float(np.max(np.abs(Aeq @ x - beq), initial=0.0)))
        primal = max(primal, float(np.max(lo - x, initial=0.0)), float(np.max(x - hi, initial=0.0)))
        kkt = max(primal, float(np.max(np.abs(grad), initial=0.0)), comp)
        return Solution(Status.OPTIMAL, x, float(c @ x), kkt, it, {"ineq": lam, "eq": nu})
    if status == S.kInfeasible:
        return Solution(Status.INFEASIBLE, iterations=it)
    if status == S.kUnbounded:
        return Solution(Status.UNBOUNDED, iterations=it)
    if status in (S.kIterationLimit, S.kTimeLimit):
        return Solution(Status.MAXITER, iterations=it)
    raise NumericalFailure(f"LP backend failure: {h.modelStatusToString(status)}")


class LpSession:
    """One HiGHS model re-solved under changing costs and row upper bounds.

    Used where many LPs share a constraint matrix (redundancy checks); each
    re-solve warm-starts from the previous basis.
    """

    def __init__(self, Ain, bin_, Aeq=None, beq=None):
        Ain = np.asarray(Ain, float)
        n = Ain.shape[1]
        Aeq = np.zeros((0, n)) if Aeq is None else np.asarray(Aeq, float).reshape(-1, n)
        beq = np.zeros(0) if beq is None else np.asarray(beq, float).ravel()
        inf = highspy.kHighsInf
        self.n_in = Ain.shape[0]
        self.n = n
        M = sp.csc_matrix(np.vstack([Ain, Aeq]))
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("primal_feasibility_tolerance", 1e-10)
        h.setOptionValue("dual_feasibility_tolerance", 1e-10)
        h.setOptionValue("random_seed", 0)
        lp = highspy.HighsLp()
        lp.num_col_ = n
        lp.num_row_ = M.shape[0]
        lp.col_cost_ = np.zeros(n)
        lp.col_lower_ = np.full(n, -inf)
        lp.col_upper_ = np.full(n, inf)
        lp.row_lower_ = np.concatenate([np.full(self.n_in, -inf), beq])
        lp.row_upper_ = np.concatenate([np.asarray(bin_, float).ravel(), beq])
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.num_col_ = n
        lp.a_matrix_.num_row_ = M.shape[0]
        lp.a_matrix_.start_ = M.indptr
        lp.a_matrix_.index_ = M.indices
        lp.a_matrix_.value_ = M.data
        h.passModel(lp)
        self._h = h
        self._idx = np.arange(n, dtype=np.int32)

    def set_row_upper(self, i, value):
        """Change the upper bound of inequality row ``i`` (``inf`` drops the row)."""
        self._h.changeRowBounds(int(i), -highspy.kHighsInf,
                                highspy.kHighsInf if not np.isfinite(value) else float(value))

    def minimize(self, c) -> Solution:
        self._h.changeColsCost(self.n, self._idx, np.asarray(c, float))
        self._h.run()
        S = highspy.HighsModelStatus
        status = self._h.getModelStatus()
        if status == S.kUnboundedOrInfeasible:
            self._h.setOptionValue("presolve", "off")
            self._h.run()
            status = self._h.getModelStatus()
        if status == S.kOptimal:
            x = np.asarray(self._h.getSolution().col_value, float)
            return Solution(Status.OPTIMAL, x, float(np.asarray(c, float) @ x))
        if status == S.kInfeasible:
            return Solution(Status.INFEASIBLE)
        if status == S.kUnbounded:
            return Solution(Status.UNBOUNDED)
        if status in (S.kIterationLimit, S.kTimeLimit):
            return Solution(Status.MAXITER)
        raise NumericalFailure(f"LP backend failure: {self._h.modelStatusToString(status)}")


def solve_lp(lp: LinearProgram) -> Solution:
    """Solve an LP; status is one of Optimal / Infeasible / Unbounded / MaxIter."""
    Aeq, beq, Ain, bin_ = _rows(lp.constraints)
    sol = _lp_arrays(lp.c, Ain, bin_, Aeq, beq)
    logger.debug("lp: status=%s it=%d kkt=%.2e", sol.status.value, sol.iterations,
                 sol.kkt_residual)
    return sol


def lp_minimize(c, P) -> Solution:
    """Shorthand for ``solve_lp(LinearProgram(c, P))``."""
    return solve_lp(LinearProgram(np.asarray(c, float), P))


def _clarabel_settings(max_iter=200):
    import clarabel

    st = clarabel.DefaultSettings()
    st.verbose = False
    st.max_iter = max_iter
    st.tol_gap_abs = 1e-10
    st.tol_gap_rel = 1e-10
    st.tol_feas = 1e-10
    st.tol_ktratio = 1e-8
    return st


def solve_qp(qp: QuadraticProgram, max_iter: int = 200) -> Solution:
    """Solve a convex QP, possibly with second-order-cone rows.

    Raises :class:`InputError` when ``Q`` is not PSD.
    """
    import clarabel

    Aeq, beq, Ain, bin_ = _rows(qp.constraints)
    n = qp.constraints.dim
    Q = np.asarray(qp.Q, float).reshape(n, n)
    Q = 0.5 * (Q + Q.T)
    q = np.asarray(qp.q, float).ravel()
    if n and np.linalg.eigvalsh(Q).min() < -PSD_TOL * max(1.0, np.abs(Q).max()):
        raise InputError("QP Hessian is not positive semidefinite")

    blocks, rhs, cones = [], [], []
    if len(Aeq):
        blocks.append(Aeq)
        rhs.append(beq)
        cones.append(clarabel.ZeroConeT(len(Aeq)))
    if len(Ain):
        blocks.append(Ain)
        rhs.append(bin_)
        cones.append(clarabel.NonnegativeConeT(len(Ain)))
    for cone in qp.cones:
        F = np.asarray(cone.F, float).reshape(-1, n)
        blocks.append(np.vstack([np.zeros((1, n)), -F]))
        rhs.append(np.concatenate([[cone.e], np.asarray(cone.g, float).ravel()]))
        cones.append(clarabel.SecondOrderConeT(F.shape[0] + 1))
    if not blocks:
        # unconstrained: solve the stationarity system directly
        try:
            x = np.linalg.lstsq(Q, -q, rcond=None)[0]
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(str(exc)) from exc
        r = float(np.max(np.abs(Q @ x + q), initial=0.0))
        if r > 1e-7 * max(1.0, np.abs(q).max(initial=0.0)):
            return Solution(Status.UNBOUNDED)
        return Solution(Status.OPTIMAL, x, float(0.5 * x @ Q @ x + q @ x), r)

    A = np.vstack(blocks)
    b = np.concatenate(rhs)
    solver = clarabel.DefaultSolver(sp.csc_matrix(np.triu(Q)), q, sp.csc_matrix(A), b,
                                    cones, _clarabel_settings(max_iter))
    out = solver.solve()
    status = str(out.status)
    if status in ("Solved", "AlmostSolved"):
        x = np.asarray(out.x, float)
        z = np.asarray(out.z, float)
        s = b - A @ x
        stationarity = float(np.max(np.abs(Q @ x + q + A.T @ z), initial=0.0))
        primal = 0.0
        k = 0
        if len(Aeq):
            primal = max(primal, float(np.max(np.abs(s[:len(Aeq)]))))
            k = len(Aeq)
        if len(Ain):
            primal = max(primal, float(np.max(-s[k:k + len(Ain)], initial=0.0)))
            k += len(Ain)
        for cone in qp.cones:
            m = np.asarray(cone.F).reshape(-1, n).shape[0] + 1
            blk = s[k:k + m]
            primal = max(primal, float(np.linalg.norm(blk[1:]) - blk[0]))
            k += m
        comp = abs(float(s @ z))
        kkt = max(primal, stationarity, comp)
        duals = {"z": z, "n_eq": len(Aeq), "n_in": len(Ain)}
        return Solution(Status.OPTIMAL, x, float(0.5 * x @ Q @ x + q @ x), kkt,
                        int(out.iterations), duals)
    if "PrimalInfeasible" in status:
        return Solution(Status.INFEASIBLE, iterations=int(out.iterations))
    if "DualInfeasible" in status:
        return Solution(Status.UNBOUNDED, iterations=int(out.iterations))
    if status == "MaxIterations":
        return Solution(Status.MAXITER, iterations=int(out.iterations))
    raise NumericalFailure(f"QP backend failure: {status}")


def newton_solve(system: NonlinearSystem, max_iter: int = 50, tol: float = 1e-10) -> Solution:
    """Damped Newton iteration on a square system ``g(x) = 0``.

    The step is halved while it increases ``||g||_inf``. Returns status
    ``MaxIter`` when the tolerance is not reached; raises
    :class:`SingularJacobian` on a singular Newton matrix.
    """
    x = np.array(system.x0, dtype=float)
    r = np.asarray(system.residual(x), float)
    norm = float(np.max(np.abs(r), initial=0.0))
    history = [norm]
    for it in range(max_iter):
        if norm <= tol:
            return Solution(Status.OPTIMAL, x, norm, norm, it, {"history": history})
        J = np.asarray(system.jacobian(x), float)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(str(exc)) from exc
        if not np.all(np.isfinite(step)):
            raise SingularJacobian("non-finite Newton step")
        alpha = 1.0
        for _ in range(30):
            x_new = x + alpha * step
            r_new = np.asarray(system.residual(x_new), float)
            n_new = float(np.max(np.abs(r_new), initial=0.0))
            if np.isfinite(n_new) and n_new < norm:
                break
            alpha *= 0.5
        else:
            return Solution(Status.MAXITER, x, norm, norm, it + 1, {"history": history})
        x, r, norm = x_new, r_new, n_new
        history.append(norm)
        logger.debug("newton it=%d |g|=%.3e alpha=%.3g", it, norm, alpha)
    status = Status.OPTIMAL if norm <= tol else Status.MAXITER
    return Solution(status, x, norm, norm, max_iter, {"history": history})

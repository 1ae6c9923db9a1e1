"""Backward/forward sweeps over a tree of subsystems.

``backward_sweep`` walks from the leaves to the root. For each non-root
subsystem it projects the subsystem's feasible set (its own constraints
intersected with its children's coupling sets) onto the variables shared with
the parent, optionally shrinks the result to a certified inner shape, and
attaches a value-function approximation. ``forward_sweep`` then solves the
root problem and pushes the chosen coupling values down, each child solving
its own problem with those values substituted. Because every child was only
offered coupling values from a set it can complete, the assembled point is
feasible for the whole problem.

``classic_dp`` is the exact recursion for equality-constrained quadratic
trees: each value function is a quadratic obtained by solving a parametric
KKT system.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .centering import (Box, Ellipsoid, box_row_certificate, ellipsoid_row_certificate,
                        inscribed_ball, inscribed_box, max_volume_inscribed_ellipsoid)
from .errors import (DimensionMismatch, EmptyCouplingSet, Infeasible, InputError,
                     SubproblemInfeasible, Unbounded, UncertifiedInnerApproximation, Unsupported)
from .model import TreeProblem, TreeTopology, assemble_monolithic, verify_tree
from .polyhedra import HPolyhedron, fourier_motzkin_project, membership_oracle_batch
from .solvers import QuadraticProgram, SecondOrderCone, Status, solve_qp

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-6
FIXED_ROW_TOL = 1e-7
CERTIFICATE_TOL = 1e-7
SET_VARIANTS = ("exact", "box", "ellipsoid", "ball")
VALUE_VARIANTS = ("zero", "quadratic", "pwl")


# --------------------------------------------------------------------------
# artifacts
# --------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ValueFunctionApprox:
    """Real-valued surrogate for a subtree's optimal cost over its coupling variables.

    ``quadratic`` means ``0.5 z'Hz + h'z + const``; ``pwl`` is the maximum of
    the affine minorants ``values[l] + gradients[l] @ (z - points[l])``.
    """

    variant: str
    dim: int
    H: np.ndarray | None = None
    h: np.ndarray | None = None
    const: float = 0.0
    points: np.ndarray | None = None
    values: np.ndarray | None = None
    gradients: np.ndarray | None = None

    @classmethod
    def zero(cls, dim):
        return cls("zero", dim)

    @classmethod
    def quadratic(cls, H, h, const=0.0):
        h = np.asarray(h, float).ravel()
        H = np.asarray(H, float).reshape(h.size, h.size)
        return cls("quadratic", h.size, 0.5 * (H + H.T), h, float(const))

    def __call__(self, z) -> float:
        z = np.asarray(z, float).ravel()
        if self.variant == "zero":
            return 0.0
        if self.variant == "quadratic":
            return float(0.5 * z @ self.H @ z + self.h @ z + self.const)
        cuts = self.values + np.einsum("lk,lk->l", self.gradients, z - self.points)
        return float(cuts.max())

    def to_dict(self):
        d = {"variant": self.variant, "dim": self.dim}
        if self.variant == "quadratic":
            d.update(H=self.H.tolist(), h=self.h.tolist(), const=self.const)
        elif self.variant == "pwl":
            d.update(points=self.points.tolist(), values=self.values.tolist(),
                     gradients=self.gradients.tolist())
        return d


@dataclass(frozen=True, eq=False)
class CouplingSetApprox:
    """Set of coupling values a subtree can complete: exact projection or an inner shape."""

    variant: str  # exact | box | ellipsoid | hull
    shape: object
    certified: bool = True
    exact: HPolyhedron | None = None
    certificate: float = float("nan")

    @property
    def dim(self):
        return self.shape.dim

    def contains(self, z, tol=1e-8):
        if isinstance(self.shape, HPolyhedron):
            return self.shape.contains(z, tol)
        return self.shape.contains(z, tol)

    def as_polyhedron(self) -> HPolyhedron:
        """A polyhedral subset of this set (the set itself unless it is an ellipsoid)."""
        if isinstance(self.shape, HPolyhedron):
            return self.shape
        if isinstance(self.shape, Box):
            return self.shape.as_polyhedron()
        return self.shape.inner_polytope()

    def to_dict(self):
        return {"variant": self.variant, "certified": self.certified,
                "data": self.shape.to_dict()}


@dataclass
class BackwardArtifacts:
    sets: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    root: int | None = None

    def __contains__(self, sid):
        return sid in self.sets


@dataclass
class FeasibilityReport:
    per_subsystem: dict
    max_violation: float
    tol: float

    @property
    def feasible(self):
        return self.max_violation <= self.tol


@dataclass
class ForwardResult:
    x: np.ndarray
    local: dict
    cost: float
    subsystem_costs: dict
    report: FeasibilityReport

    @property
    def feasible(self):
        return self.report.feasible


@dataclass
class SweepConfig:
    """Per-subsystem choices for the backward sweep.

    ``set_variant`` and ``value_fn`` are either one name for all subsystems or a
    mapping from subsystem id to name. ``set_overrides``/``value_overrides``
    supply precomputed artifacts (e.g. sampled hulls or exact quadratics).
    """

    set_variant: str | Mapping = "exact"
    value_fn: str | Mapping = "zero"
    set_overrides: Mapping = field(default_factory=dict)
    value_overrides: Mapping = field(default_factory=dict)
    allow_uncertified: bool = False
    n_fit_samples: int | None = None
    seed: int = 42

    def variant_for(self, sid):
        v = self.set_variant.get(sid, "exact") if isinstance(self.set_variant, Mapping) \
            else self.set_variant
        if v not in SET_VARIANTS:
            raise InputError(f"unknown coupling-set variant {v!r}")
        return v

    def value_for(self, sid):
        v = self.value_fn.get(sid, "zero") if isinstance(self.value_fn, Mapping) \
            else self.value_fn
        if v not in VALUE_VARIANTS:
            raise InputError(f"unknown value-function variant {v!r}")
        return v


# --------------------------------------------------------------------------
# local subproblem
# --------------------------------------------------------------------------
@dataclass
class _LocalSolution:
    status: Status
    x: np.ndarray | None = None
    cost: float = float("nan")  # subsystem objective plus children's surrogate values
    own_cost: float = float("nan")
    gradient: np.ndarray | None = None  # d cost / d fixed coupling values
    kkt: float = float("nan")


def _positions(problem, topo, sid):
    sub = problem[sid]
    wpos = topo.coupling[sid].positions_in(sub.indices)
    return sub, wpos


def _local_solve(problem: TreeProblem, topo: TreeTopology, art: BackwardArtifacts, sid,
                 w=None) -> _LocalSolution:
    """Solve subsystem ``sid`` with its parent-coupling block fixed to ``w``.

    Children enter through their coupling sets (rows or cones) and value
    surrogates. Fixed values are substituted, so they appear bit-exactly in
    the returned local vector.
    """
    sub, wpos = _positions(problem, topo, sid)
    n = sub.dim
    w = np.zeros(0) if w is None else np.asarray(w, float).ravel()
    if w.size != len(wpos):
        raise DimensionMismatch(f"subsystem {sid}: expected {len(wpos)} coupling values")
    free = [k for k in range(n) if k not in set(wpos)]
    Q = sub.objective.Q.copy()
    q = sub.objective.q.copy()
    const = sub.objective.const
    P = sub.constraints
    Aeq, beq, Ain, bin_ = [P.Aeq], [P.beq], [P.Ain], [P.bin]
    cones = []  # (positions, Ellipsoid)
    pwl = []  # (positions, ValueFunctionApprox)
    for c in topo.children[sid]:
        cpos = topo.coupling[c].positions_in(sub.indices)
        cset = art.sets[c]
        if isinstance(cset.shape, Ellipsoid):
            cones.append((cpos, cset.shape))
        else:
            S = cset.as_polyhedron().lift(cpos, n)
            Aeq.append(S.Aeq), beq.append(S.beq), Ain.append(S.Ain), bin_.append(S.bin)
        V = art.values[c]
        if V.variant == "quadratic":
            Q[np.ix_(cpos, cpos)] += V.H
            q[cpos] += V.h
            const += V.const
        elif V.variant == "pwl":
            pwl.append((cpos, V))
    Aeq, beq = np.vstack(Aeq), np.concatenate(beq)
    Ain, bin_ = np.vstack(Ain), np.concatenate(bin_)

    # substitute the fixed block
    beq_r = beq - Aeq[:, wpos] @ w
    bin_r = bin_ - Ain[:, wpos] @ w
    Aeq_f, Ain_f = Aeq[:, free], Ain[:, free]
    live_eq = np.any(Aeq_f != 0, axis=1)
    live_in = np.any(Ain_f != 0, axis=1)
    fixed_viol = max(float(np.max(np.abs(beq_r[~live_eq]), initial=0.0)),
                     float(np.max(-bin_r[~live_in], initial=0.0)))
    if fixed_viol > FIXED_ROW_TOL:
        return _LocalSolution(Status.INFEASIBLE)

    nf = len(free)
    n_aux = len(pwl)
    m = nf + n_aux
    Qf = np.zeros((m, m))
    Qf[:nf, :nf] = Q[np.ix_(free, free)]
    qf = np.zeros(m)
    qf[:nf] = q[free] + Q[np.ix_(free, wpos)] @ w
    qf[nf:] = 1.0
    fidx = {k: j for j, k in enumerate(free)}
    rows_A = [np.hstack([Ain_f[live_in], np.zeros((int(live_in.sum()), n_aux))])]
    rows_b = [bin_r[live_in]]
    for a, (cpos, V) in enumerate(pwl):
        # values_l + g_l'(z - z_l) <= t
        G = np.zeros((len(V.values), m))
        G[:, [fidx[k] for k in cpos]] = V.gradients
        G[:, nf + a] = -1.0
        rows_A.append(G)
        rows_b.append(np.einsum("lk,lk->l", V.gradients, V.points) - V.values)
    A_in = np.vstack(rows_A)
    b_in = np.concatenate(rows_b)
    A_eq = np.hstack([Aeq_f[live_eq], np.zeros((int(live_eq.sum()), n_aux))])
    b_eq = beq_r[live_eq]
    soc = []
    for cpos, E in cones:
        Ainv = np.linalg.inv(E.A)
        F = np.zeros((E.dim, m))
        F[:, [fidx[k] for k in cpos]] = Ainv
        soc.append(SecondOrderCone(F, -Ainv @ E.c, 1.0))

    x = np.empty(n)
    x[wpos] = w
    if m == 0:
        y = np.zeros(0)
        kkt = 0.0
        z_in = np.zeros(0)
        n_eq_rows = 0
    else:
        qp = QuadraticProgram(Qf, qf, HPolyhedron(A_eq, b_eq, A_in, b_in, m), soc)
        sol = solve_qp(qp)
        if sol.status is Status.INFEASIBLE:
            return _LocalSolution(Status.INFEASIBLE)
        if sol.status is Status.UNBOUNDED:
            raise Unbounded(f"subproblem of subsystem {sid} is unbounded")
        if not sol.optimal:
            return _LocalSolution(sol.status)
        y = sol.x
        kkt = sol.kkt_residual
        z = sol.duals.get("z", np.zeros(0))
        n_eq_rows = sol.duals.get("n_eq", 0)
        z_in = z[n_eq_rows:n_eq_rows + sol.duals.get("n_in", 0)]
        z_eq = z[:n_eq_rows]
    x[free] = y[:nf]
    own = sub.objective(x)
    total = 0.5 * x @ Q @ x + q @ x + const + float(np.sum(y[nf:]))
    # sensitivity of the optimal cost to the fixed block
    grad = (Q @ x + q)[wpos]
    if len(wpos) and m:
        if n_eq_rows:
            grad = grad + Aeq[live_eq][:, wpos].T @ z_eq
        if z_in.size:
            grad = grad + Ain[live_in][:, wpos].T @ z_in[:int(live_in.sum())]
    return _LocalSolution(Status.OPTIMAL, x, float(total), own, grad, kkt)


# --------------------------------------------------------------------------
# backward sweep
# --------------------------------------------------------------------------
def subsystem_domain(problem: TreeProblem, topo: TreeTopology, art: BackwardArtifacts,
                     sid) -> HPolyhedron:
    """Local constraints intersected with every child's (polyhedral) coupling set."""
    sub = problem[sid]
    if not isinstance(sub.constraints, HPolyhedron):
        raise Unsupported(f"subsystem {sid} has nonpolyhedral constraints; supply a set override")
    D = sub.constraints
    for c in topo.children[sid]:
        cpos = topo.coupling[c].positions_in(sub.indices)
        D = D.intersect(art.sets[c].as_polyhedron().lift(cpos, sub.dim))
    return D


def _sample_in_set(P: HPolyhedron, count: int, rng) -> np.ndarray:
    """Random convex combinations of boundary points found by linear objectives."""
    from itertools import product

    from .solvers import lp_minimize

    pts = []
    for c in product((-1.0, 0.0, 1.0), repeat=P.dim):
        if not any(c):
            continue
        sol = lp_minimize(np.asarray(c), P)
        if sol.optimal:
            pts.append(sol.x)
    if not pts:
        raise Infeasible("no boundary points found")
    V = np.array(pts)
    W = rng.dirichlet(np.full(len(V), 0.5), size=count)
    return np.vstack([V, W @ V])


def _fit_value(problem, topo, art, sid, P: HPolyhedron, variant, config) -> ValueFunctionApprox:
    m = P.dim
    if variant == "zero":
        return ValueFunctionApprox.zero(m)
    n_params = (m + 1) * (m + 2) // 2
    count = config.n_fit_samples or max(20, 4 * n_params)
    rng = np.random.default_rng([config.seed, sid])
    Z = _sample_in_set(P, count, rng)
    vals, grads, pts = [], [], []
    for z in Z:
        res = _local_solve(problem, topo, art, sid, z)
        if res.status is Status.OPTIMAL:
            pts.append(z)
            vals.append(res.cost)
            grads.append(res.gradient)
    if not pts:
        raise EmptyCouplingSet(sid, f"no evaluable points for the value fit of subsystem {sid}")
    pts, vals, grads = np.array(pts), np.array(vals), np.array(grads)
    if variant == "pwl":
        return ValueFunctionApprox("pwl", m, points=pts, values=vals, gradients=grads)
    iu = np.triu_indices(m)
    feats = np.hstack([pts[:, iu[0]] * pts[:, iu[1]], pts, np.ones((len(pts), 1))])
    coef = np.linalg.lstsq(feats, vals, rcond=None)[0]
    k2 = len(iu[0])
    H = np.zeros((m, m))
    H[iu] = coef[:k2]
    H = H + H.T  # diagonal doubles, off-diagonal splits symmetrically
    w, U = np.linalg.eigh(H)
    H = (U * np.clip(w, 0.0, None)) @ U.T  # keep the parent problem convex
    return ValueFunctionApprox.quadratic(H, coef[k2:k2 + m], coef[-1])


def _inner_set(variant, P: HPolyhedron, sid) -> CouplingSetApprox:
    if variant == "exact":
        return CouplingSetApprox("exact", P, True, P, 0.0)
    if variant == "box":
        shape = inscribed_box(P)
        cert = box_row_certificate(shape, P)
    else:
        shape = max_volume_inscribed_ellipsoid(P) if variant == "ellipsoid" else inscribed_ball(P)
        cert = ellipsoid_row_certificate(shape, P)
    if cert > CERTIFICATE_TOL:
        raise UncertifiedInnerApproximation(
            f"subsystem {sid}: {variant} violates its containment certificate by {cert:.3g}")
    return CouplingSetApprox("box" if variant == "box" else "ellipsoid", shape, True, P, cert)


def backward_sweep(problem: TreeProblem, topo: TreeTopology | None = None,
                   config: SweepConfig | None = None) -> BackwardArtifacts:
    """Leaves-to-root pass producing a coupling set and value surrogate per non-root subsystem."""
    topo = topo or verify_tree(problem)
    config = config or SweepConfig()
    art = BackwardArtifacts(root=topo.root)
    for sid in topo.postorder():
        if sid == topo.root:
            # the root keeps no set, but an empty domain means the sweep has failed
            root = problem[sid]
            if isinstance(root.constraints, HPolyhedron) and all(
                    c in art.sets for c in topo.children[sid]):
                if any(isinstance(art.sets[c].shape, Ellipsoid) for c in topo.children[sid]):
                    # the polyhedral stand-in for an ellipsoid is too small to decide this
                    empty = _local_solve(problem, topo, art, sid).status is Status.INFEASIBLE
                else:
                    empty = subsystem_domain(problem, topo, art, sid).is_empty()
                if empty:
                    raise EmptyCouplingSet(sid, f"root subsystem {sid} has no feasible point "
                                                "given its children's coupling sets")
            continue
        if sid in config.set_overrides:
            cset = config.set_overrides[sid]
            if not cset.certified and not config.allow_uncertified:
                raise UncertifiedInnerApproximation(
                    f"subsystem {sid}: coupling set is not certified as an inner approximation")
            art.sets[sid] = cset
            art.values[sid] = config.value_overrides.get(sid, ValueFunctionApprox.zero(cset.dim))
            continue
        sub, wpos = _positions(problem, topo, sid)
        D = subsystem_domain(problem, topo, art, sid)
        if D.is_empty():
            raise EmptyCouplingSet(sid)
        P = fourier_motzkin_project(D, wpos)
        art.sets[sid] = _inner_set(config.variant_for(sid), P, sid)
        if sid in config.value_overrides:
            art.values[sid] = config.value_overrides[sid]
        else:
            art.values[sid] = _fit_value(problem, topo, art, sid, art.sets[sid].as_polyhedron(),
                                         config.value_for(sid), config)
        logger.debug("backward: subsystem %d set=%s value=%s", sid, art.sets[sid].variant,
                     art.values[sid].variant)
    return art


# --------------------------------------------------------------------------
# forward sweep and auditing
# --------------------------------------------------------------------------
def check_feasibility(problem: TreeProblem, x, tol: float = FEASIBILITY_TOL) -> FeasibilityReport:
    """Per-subsystem worst equality and inequality violation at the global point ``x``."""
    x = np.asarray(x, float).ravel()
    per = {}
    worst = 0.0
    for s in problem.subsystems:
        xs = x[s.indices.zero_based()]
        P = s.constraints
        if isinstance(P, HPolyhedron):
            eq = float(np.max(np.abs(P.Aeq @ xs - P.beq), initial=0.0))
            ineq = float(np.max(P.Ain @ xs - P.bin, initial=0.0))
        else:
            check = getattr(P.spec, "violation", None)
            if check is None:
                raise Unsupported(f"subsystem {s.id}: no violation evaluator")
            eq, ineq = check(xs)
        if not (np.isfinite(eq) and np.isfinite(ineq)):
            eq = ineq = float("inf")
        per[s.id] = {"eq": eq, "ineq": max(ineq, 0.0)}
        worst = max(worst, eq, ineq)
    return FeasibilityReport(per, worst, tol)


def forward_sweep(problem: TreeProblem, topo: TreeTopology,
                  art: BackwardArtifacts) -> ForwardResult:
    """Root-to-leaves pass dispatching coupling values; raises on any infeasible subproblem."""
    missing = [s for s in topo.order if s != topo.root and s not in art]
    if missing:
        raise InputError(f"artifacts missing for subsystems {missing}")
    x = np.full(problem.n_x, np.nan)
    local, costs = {}, {}
    for sid in topo.order:
        sub = problem[sid]
        w = x[topo.coupling[sid].zero_based()]
        res = _local_solve(problem, topo, art, sid, w)
        if res.status is not Status.OPTIMAL:
            raise SubproblemInfeasible(sid)
        x[sub.indices.zero_based()] = res.x
        local[sid] = res.x
        costs[sid] = res.own_cost
    x = np.where(np.isnan(x), 0.0, x)
    report = check_feasibility(problem, x)
    return ForwardResult(x, local, problem.objective_value(x), costs, report)


def solve_monolithic(problem: TreeProblem):
    """Reference optimum of the stacked problem: ``(x, cost)``."""
    qp, const = assemble_monolithic(problem)
    sol = solve_qp(qp)
    if sol.status is Status.INFEASIBLE:
        raise Infeasible("monolithic problem is infeasible")
    if not sol.optimal:
        raise Unbounded(f"monolithic problem returned {sol.status.value}")
    return sol.x, sol.objective + const


def evaluate_value_function(problem: TreeProblem, topo: TreeTopology, sid, grid):
    """Optimal subtree cost with the coupling block fixed at each grid point.

    Returns a list of ``(z, value, kkt)``; ``value`` is ``None`` where the
    subtree has no feasible completion.
    """
    nodes = [sid]
    k = 0
    while k < len(nodes):
        nodes.extend(topo.children[nodes[k]])
        k += 1
    sub = TreeProblem(problem.n_x, tuple(problem[i] for i in nodes))
    qp, const = assemble_monolithic(sub)
    cols = topo.coupling[sid].zero_based()
    table = []
    for z in np.atleast_2d(np.asarray(grid, float)):
        fix = np.zeros((len(cols), problem.n_x))
        fix[np.arange(len(cols)), cols] = 1.0
        cons = qp.constraints.intersect(HPolyhedron(fix, z, dim=problem.n_x))
        sol = solve_qp(QuadraticProgram(qp.Q, qp.q, cons))
        if sol.status is Status.INFEASIBLE:
            table.append((z, None, float("nan")))
        elif sol.optimal:
            table.append((z, sol.objective + const, sol.kkt_residual))
        else:
            raise Unbounded(f"value evaluation at {z} returned {sol.status.value}")
    return table


def audit_projection(problem, topo, art, sid, n_points=1000, seed=0, tol=1e-8) -> int:
    """Count disagreements between an exact coupling set and the LP membership oracle."""
    cset = art.sets[sid]
    if cset.exact is None:
        raise InputError("no exact projection stored for this subsystem")
    _, wpos = _positions(problem, topo, sid)
    D = subsystem_domain(problem, topo, art, sid)
    lo, hi = cset.exact.bounding_box()
    span = np.where(np.isfinite(hi - lo), hi - lo, 2.0)
    mid = np.where(np.isfinite(lo + hi), 0.5 * (lo + hi), 0.0)
    rng = np.random.default_rng(seed)
    Z = mid + span * (rng.random((n_points, len(wpos))) - 0.5) * 1.5
    fm = cset.exact.contains_many(Z, tol)
    orc = membership_oracle_batch(D, wpos, Z, tol)
    return int(np.sum(fm != orc))


# --------------------------------------------------------------------------
# classic dynamic programming for equality-constrained quadratic trees
# --------------------------------------------------------------------------
def classic_dp(problem: TreeProblem, topo: TreeTopology | None = None):
    """Exact quadratic value functions and the optimal point for equality-only QP trees.

    Each subsystem's minimizer is an affine function of its coupling block,
    obtained from the parametric KKT system; substituting it gives the exact
    quadratic value function handed to the parent.
    """
    topo = topo or verify_tree(problem)
    values, laws = {}, {}
    for sid in topo.postorder():
        sub, wpos = _positions(problem, topo, sid)
        if not sub.is_polyhedral:
            raise Unsupported(f"subsystem {sid} is not a quadratic program")
        if sub.constraints.n_in:
            raise Unsupported(f"subsystem {sid} has inequality constraints")
        n = sub.dim
        Q = sub.objective.Q.copy()
        q = sub.objective.q.copy()
        const = sub.objective.const
        for c in topo.children[sid]:
            cpos = topo.coupling[c].positions_in(sub.indices)
            V = values[c]
            Q[np.ix_(cpos, cpos)] += V.H
            q[cpos] += V.h
            const += V.const
        A, b = sub.constraints.Aeq, sub.constraints.beq
        free = [k for k in range(n) if k not in set(wpos)]
        m, nf, r = len(wpos), len(free), A.shape[0]
        K = np.block([[Q[np.ix_(free, free)], A[:, free].T], [A[:, free], np.zeros((r, r))]])
        rhs_w = np.vstack([-Q[np.ix_(free, wpos)], -A[:, wpos]])
        rhs_0 = np.concatenate([-q[free], b])
        Kp = np.linalg.pinv(K)
        sol_w, sol_0 = Kp @ rhs_w, Kp @ rhs_0
        scale = max(1.0, np.abs(K).max(initial=0.0))
        if (np.abs(K @ sol_w - rhs_w).max(initial=0.0) > 1e-8 * scale
                or np.abs(K @ sol_0 - rhs_0).max(initial=0.0) > 1e-8 * scale):
            raise Infeasible(f"subsystem {sid}: no stationary point for some coupling values "
                             "(inconsistent constraints or unbounded cost)")
        X1 = np.zeros((n, m))
        x0 = np.zeros(n)
        X1[wpos, np.arange(m)] = 1.0
        X1[free] = sol_w[:nf]
        x0[free] = sol_0[:nf]
        laws[sid] = (X1, x0)
        H = X1.T @ Q @ X1
        h = X1.T @ (Q @ x0 + q)
        k = 0.5 * x0 @ Q @ x0 + q @ x0 + const
        values[sid] = ValueFunctionApprox.quadratic(H, h, k)
    x = np.zeros(problem.n_x)
    local, costs = {}, {}
    for sid in topo.order:
        sub = problem[sid]
        X1, x0 = laws[sid]
        w = x[topo.coupling[sid].zero_based()]
        xl = X1 @ w + x0
        xl[topo.coupling[sid].positions_in(sub.indices)] = w
        x[sub.indices.zero_based()] = xl
        local[sid] = xl
        costs[sid] = sub.objective(xl)
    result = ForwardResult(x, local, problem.objective_value(x), costs,
                           check_feasibility(problem, x))
    return values, result


# --------------------------------------------------------------------------
# facade and trace
# --------------------------------------------------------------------------
def sweep_trace(problem, topo, art: BackwardArtifacts, result: ForwardResult | None = None):
    """Per-subsystem records in traversal order, suitable for JSON export."""
    out = []
    for sid in topo.order:
        rec = {"id": sid}
        if sid in art.sets:
            rec["set_variant"] = art.sets[sid].variant
            rec["set_data"] = art.sets[sid].to_dict()["data"]
            rec["value_fn_variant"] = art.values[sid].variant
        else:
            rec["set_variant"] = None
            rec["set_data"] = None
            rec["value_fn_variant"] = None
        if result is not None:
            rec["dispatch"] = result.local[sid].tolist()
            rec["cost"] = result.subsystem_costs[sid]
            rec["residuals"] = result.report.per_subsystem[sid]
        out.append(rec)
    return out


class FPADP:
    """One backward and one forward sweep over a tree problem."""

    def __init__(self, problem: TreeProblem, root=None, config: SweepConfig | None = None):
        self.problem = problem
        self.topology = verify_tree(problem, root=root)
        self.config = config or SweepConfig()
        self.artifacts: BackwardArtifacts | None = None
        self.result: ForwardResult | None = None

    def backward(self):
        self.artifacts = backward_sweep(self.problem, self.topology, self.config)
        return self.artifacts

    def forward(self):
        if self.artifacts is None:
            self.backward()
        self.result = forward_sweep(self.problem, self.topology, self.artifacts)
        return self.result

    def solve(self) -> ForwardResult:
        self.backward()
        return self.forward()

    def trace(self):
        return sweep_trace(self.problem, self.topology, self.artifacts, self.result)

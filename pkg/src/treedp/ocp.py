"""Constrained linear-quadratic optimal control as a path-graph tree problem.

Variable layout (1-based, ``n`` states, ``m`` inputs)::

    z_0 | u_0 z_1 | u_1 z_2 | ... | u_{T-1} z_T

Subsystem 0 (the root) owns ``z_0`` and pins it to the initial state.
Subsystem ``t`` in ``1..T`` owns ``(z_{t-1}, u_{t-1}, z_t)`` and carries the
dynamics row block, the input set and the state set (terminal set at ``T``).
The variable shared with the parent is therefore always the previous state.

Costs: the root pays ``l_z(z_0)``; stage ``t < T`` pays ``l_u(u_{t-1}) + l_z(z_t)``;
the last stage pays ``l_u(u_{T-1}) + z_T' P z_T``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .centering import Ellipsoid
from .dp import (ForwardResult, SweepConfig, ValueFunctionApprox, backward_sweep, classic_dp,
                 forward_sweep, solve_monolithic)
from .errors import DimensionMismatch, EmptyCouplingSet, InputError
from .model import (QuadraticObjective, Subsystem, TreeProblem, TreeTopology, verify_tree)
from .polyhedra import HPolyhedron, fourier_motzkin_project

DEMO_A = [[1.5, 1.0], [0.0, 1.5]]
DEMO_B = [[0.0], [0.8]]
DEMO_P = [[7.80, 4.87], [4.87, 4.82]]
DEMO_Z0 = [-0.3, -0.2]
STATE_BOUND = 1e6


@dataclass(frozen=True, eq=False)
class LtiOcpSpec:
    A: np.ndarray
    B: np.ndarray
    state_weight: np.ndarray
    input_weight: np.ndarray
    Z: HPolyhedron
    U: HPolyhedron
    terminal_weight: np.ndarray
    Z_T: HPolyhedron
    z0: np.ndarray
    T: int

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, float))
        n = A.shape[0]
        B = np.asarray(self.B, float).reshape(n, -1)
        m = B.shape[1]
        to_mat = lambda W, k: (np.eye(k) * float(W) if np.ndim(W) == 0  # noqa: E731
                               else np.asarray(W, float).reshape(k, k))
        Qz, Ru, P = to_mat(self.state_weight, n), to_mat(self.input_weight, m), \
            to_mat(self.terminal_weight, n)
        for name, val in (("A", A), ("B", B), ("state_weight", Qz), ("input_weight", Ru),
                          ("terminal_weight", P), ("z0", self.z0)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "z0", np.asarray(self.z0, float).ravel())
        if A.shape != (n, n) or self.z0.size != n:
            raise DimensionMismatch("A must be square and match z0")
        if self.Z.dim != n or self.Z_T.dim != n or self.U.dim != m:
            raise DimensionMismatch("state/input sets do not match A and B")
        if int(self.T) < 1:
            raise InputError("horizon T must be at least 1")
        object.__setattr__(self, "T", int(self.T))
        for name, W in (("state_weight", Qz), ("input_weight", Ru), ("terminal_weight", P)):
            if not np.allclose(W, W.T) or np.linalg.eigvalsh(0.5 * (W + W.T)).min() < -1e-12:
                raise InputError(f"{name} must be symmetric positive semidefinite")
        if self.Z_T.is_empty():
            raise InputError("terminal set is empty")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @classmethod
    def demo_instance(cls, state_bound=STATE_BOUND, input_bound=1.0, terminal_bound=0.19):
        return cls(DEMO_A, DEMO_B, 1.0, 0.1,
                   HPolyhedron.box(-np.full(2, state_bound), np.full(2, state_bound)),
                   HPolyhedron.box([-input_bound], [input_bound]), DEMO_P,
                   HPolyhedron.box(-np.full(2, terminal_bound), np.full(2, terminal_bound)),
                   DEMO_Z0, 3)

    # global 0-based positions
    def state_cols(self, t):
        start = 0 if t == 0 else self.n + (t - 1) * (self.m + self.n) + self.m
        return np.arange(start, start + self.n)

    def input_cols(self, t):
        start = self.n + t * (self.m + self.n)
        return np.arange(start, start + self.m)

    @property
    def n_x(self):
        return self.n + self.T * (self.m + self.n)


def _stage(spec: LtiOcpSpec, t: int) -> Subsystem:
    n, m = spec.n, spec.m
    d = 2 * n + m
    idx = np.concatenate([spec.state_cols(t - 1), spec.input_cols(t - 1), spec.state_cols(t)]) + 1
    sz_prev, su, sz = slice(0, n), slice(n, n + m), slice(n + m, d)
    Aeq = np.zeros((n, d))
    Aeq[:, sz_prev] = -spec.A
    Aeq[:, su] = -spec.B
    Aeq[:, sz] = np.eye(n)
    Zt = spec.Z_T if t == spec.T else spec.Z
    rows = [spec.U.lift(np.arange(n, n + m), d), Zt.lift(np.arange(n + m, d), d)]
    P = HPolyhedron(Aeq, np.zeros(n), dim=d)
    for R in rows:
        P = P.intersect(R)
    Q = np.zeros((d, d))
    Q[su, su] = 2.0 * spec.input_weight
    Q[sz, sz] = 2.0 * (spec.terminal_weight if t == spec.T else spec.state_weight)
    return Subsystem(t, idx, QuadraticObjective(Q, np.zeros(d)), P)


def ocp_to_tree(spec: LtiOcpSpec) -> tuple[TreeProblem, TreeTopology]:
    n = spec.n
    root_cons = HPolyhedron(np.eye(n), spec.z0, dim=n).intersect(spec.Z)
    root = Subsystem(0, spec.state_cols(0) + 1,
                     QuadraticObjective(2.0 * spec.state_weight, np.zeros(n)), root_cons)
    problem = TreeProblem(spec.n_x, (root,) + tuple(_stage(spec, t)
                                                    for t in range(1, spec.T + 1)))
    return problem, verify_tree(problem, root=0)


def backward_reachable_sets(spec: LtiOcpSpec, N: int) -> list[HPolyhedron]:
    """``sets[k]`` holds the states that reach ``Z_T`` in exactly ``k`` admissible steps.

    ``sets[0]`` is ``Z_T``; intermediate states must lie in ``Z``.
    """
    n, m = spec.n, spec.m
    d = 2 * n + m
    sets = [spec.Z_T]
    for _ in range(N):
        # variables (z_prev, u, z_next)
        Aeq = np.hstack([-spec.A, -spec.B, np.eye(n)])
        G = HPolyhedron(Aeq, np.zeros(n), dim=d)
        G = G.intersect(spec.U.lift(np.arange(n, n + m), d))
        G = G.intersect(sets[-1].lift(np.arange(n + m, d), d))
        if len(sets) > 1:
            G = G.intersect(spec.Z.lift(np.arange(n + m, d), d))
        if G.is_empty():
            raise EmptyCouplingSet(len(sets), f"predecessor set after {len(sets) - 1} steps "
                                              "has no predecessor")
        sets.append(fourier_motzkin_project(G, list(range(n))))
    return sets


def trajectory(spec: LtiOcpSpec, x) -> tuple[np.ndarray, np.ndarray]:
    """States ``(T+1, n)`` and inputs ``(T, m)`` read from a global vector."""
    x = np.asarray(x, float)
    Zs = np.array([x[spec.state_cols(t)] for t in range(spec.T + 1)])
    Us = np.array([x[spec.input_cols(t)] for t in range(spec.T)])
    return Zs, Us


def trajectory_residuals(spec: LtiOcpSpec, x) -> dict:
    Zs, Us = trajectory(spec, x)
    dyn = Zs[1:] - Zs[:-1] @ spec.A.T - Us @ spec.B.T
    return {
        "dynamics": float(np.abs(dyn).max(initial=0.0)),
        "initial_state": float(np.abs(Zs[0] - spec.z0).max()),
        "input_set": float(max(spec.U.violation(u) for u in Us)),
        "terminal_set": float(spec.Z_T.violation(Zs[-1])),
        "state_set": float(max(spec.Z.violation(z) for z in Zs[:-1])),
        "u_max_abs": float(np.abs(Us).max(initial=0.0)),
        "z_T_inf_norm": float(np.abs(Zs[-1]).max()),
    }


def _relaxed(spec: LtiOcpSpec) -> TreeProblem:
    """The same tree with every inequality dropped (dynamics and z_0 only)."""
    problem, _ = ocp_to_tree(spec)
    subs = tuple(replace(s, constraints=HPolyhedron(s.constraints.Aeq, s.constraints.beq,
                                                    dim=s.dim))
                 for s in problem.subsystems)
    return TreeProblem(problem.n_x, subs)


@dataclass
class OcpDemoReport:
    variant: str
    value_fn: str
    stage_sets: dict  # t -> exact projection onto z_{t-1}
    ellipsoid: Ellipsoid | None
    x_monolithic: np.ndarray
    cost_monolithic: float
    fpadp: ForwardResult
    residuals: dict
    runtimes: dict = field(default_factory=dict)
    z0_in_ellipsoid: bool | None = None

    @property
    def cost_fpadp(self):
        return self.fpadp.cost

    @property
    def feasible(self):
        return self.fpadp.feasible

    def to_dict(self):
        return {
            "variant": self.variant,
            "value_fn": self.value_fn,
            "feasible": bool(self.feasible),
            "costs": {"monolithic": self.cost_monolithic, "fpadp": self.cost_fpadp,
                      "gap": self.cost_fpadp - self.cost_monolithic},
            "residuals": self.residuals,
            "max_violation": self.fpadp.report.max_violation,
            "z0_in_ellipsoid": self.z0_in_ellipsoid,
        }


def run_ocp_demo(variant: str = "exact", value_fn: str = "zero",
                 spec: LtiOcpSpec | None = None) -> OcpDemoReport:
    """Backward sweep, forward sweep and the monolithic reference on one OCP.

    ``variant`` is ``exact`` (projections at every stage) or ``ellipsoid``
    (inscribed ellipsoid at stage 1). ``value_fn`` is ``zero`` or
    ``terminal_quadratic``; the latter feeds each stage the exact quadratic
    cost-to-go of the problem without inequalities.
    """
    if variant not in ("exact", "ellipsoid"):
        raise InputError(f"unknown OCP variant {variant!r}")
    if value_fn not in ("zero", "terminal_quadratic"):
        raise InputError(f"unknown OCP value function {value_fn!r}")
    spec = spec or LtiOcpSpec.demo_instance()
    problem, topo = ocp_to_tree(spec)
    t0 = time.perf_counter()
    overrides: dict[int, ValueFunctionApprox] = {}
    if value_fn == "terminal_quadratic":
        values, _ = classic_dp(_relaxed(spec), topo)
        overrides = {t: values[t] for t in range(1, spec.T + 1)}
    config = SweepConfig(set_variant={1: "ellipsoid"} if variant == "ellipsoid" else "exact",
                         value_fn="zero", value_overrides=overrides)
    art = backward_sweep(problem, topo, config)
    t1 = time.perf_counter()
    result = forward_sweep(problem, topo, art)
    t2 = time.perf_counter()
    x_star, cost_star = solve_monolithic(problem)
    t3 = time.perf_counter()
    ell = art.sets[1].shape if variant == "ellipsoid" else None
    return OcpDemoReport(
        variant, value_fn,
        {t: art.sets[t].exact for t in range(1, spec.T + 1)},
        ell, x_star, cost_star, result, trajectory_residuals(spec, result.x),
        {"backward": t1 - t0, "forward": t2 - t1, "monolithic": t3 - t2},
        None if ell is None else bool(ell.contains(spec.z0, 0.0)))

"""Sample-based approximations of (possibly nonconvex) projections.

Two constraint descriptions are supported:

* :class:`NlpConstraintSpec` -- ``g(z, y) = 0, h(z, y) <= 0`` with simple
  bounds on ``y``. Decision-variable sampling draws the *sampled* components
  of ``y`` uniformly and solves ``g = 0`` for everything else by Newton.
* :class:`ConvexSetSpec` -- a polyhedron, optionally with second-order cones,
  over a vector whose ``keep`` positions form ``z``. Boundary points come
  from linear objectives ``c'z``.

Every retained sample stores its witness and the residuals it was certified
with, so a :class:`SampleSet` can always be re-audited.
"""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import ConvexHull, QhullError

from .errors import (ComponentUnbounded, DegenerateHull, DimensionMismatch, Infeasible,
                     InputError, NoFeasibleSamples, NumericalFailure)
from .io import fmt
from .polyhedra import HPolyhedron
from .solvers import (NonlinearSystem, QuadraticProgram, Status, lp_minimize,
                      newton_solve, solve_qp)

logger = logging.getLogger(__name__)

CERT_TOL = 1e-8
HULL_TOL = 1e-9


# --------------------------------------------------------------------------
# constraint descriptions
# --------------------------------------------------------------------------
def _fd_jacobian(fun, x, step=1e-7):
    f0 = np.asarray(fun(x), float)
    J = np.empty((f0.size, x.size))
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step * max(1.0, abs(x[k]))
        J[:, k] = (np.asarray(fun(x + e), float) - np.asarray(fun(x - e), float)) / (2 * e[k])
    return J


@dataclass(frozen=True, eq=False)
class NlpConstraintSpec:
    """``{(z, y) : g(z, y) = 0, h(z, y) <= 0, y_lower <= y <= y_upper}``.

    ``sampled`` lists the positions of ``y`` drawn in decision-variable
    sampling; ``z`` and the remaining ``y`` entries are the Newton unknowns,
    so ``g`` must have exactly that many rows. ``jac_g``/``jac_h`` return the
    Jacobian with respect to the stacked vector ``(z, y)``; finite
    differences are used when they are omitted. ``start`` returns the Newton
    starting vector ``(z, y)`` for given sampled values.
    """

    n_z: int
    n_y: int
    g: Callable
    h: Callable | None = None
    y_lower: np.ndarray | None = None
    y_upper: np.ndarray | None = None
    sampled: tuple = ()
    jac_g: Callable | None = None
    jac_h: Callable | None = None
    start: Callable | None = None
    convex: bool = False

    def __post_init__(self):
        lo = np.full(self.n_y, -np.inf) if self.y_lower is None else \
            np.asarray(self.y_lower, float).ravel()
        hi = np.full(self.n_y, np.inf) if self.y_upper is None else \
            np.asarray(self.y_upper, float).ravel()
        if lo.size != self.n_y or hi.size != self.n_y:
            raise DimensionMismatch("y bounds do not match n_y")
        object.__setattr__(self, "y_lower", lo)
        object.__setattr__(self, "y_upper", hi)
        object.__setattr__(self, "sampled", tuple(int(k) for k in self.sampled))
        if not (np.all(np.isfinite(lo[list(self.sampled)]))
                and np.all(np.isfinite(hi[list(self.sampled)]))):
            raise InputError("sampled components need finite bounds")

    @property
    def dependent(self) -> list[int]:
        s = set(self.sampled)
        return [k for k in range(self.n_y) if k not in s]

    def split(self, w):
        w = np.asarray(w, float).ravel()
        return w[:self.n_z], w[self.n_z:]

    def eq(self, w) -> np.ndarray:
        z, y = self.split(w)
        return np.asarray(self.g(z, y), float).ravel()

    def ineq(self, w) -> np.ndarray:
        """``h`` followed by the finite bound rows on ``y``, all in ``<= 0`` form."""
        z, y = self.split(w)
        parts = [np.asarray(self.h(z, y), float).ravel()] if self.h is not None else []
        lo_ok, hi_ok = np.isfinite(self.y_lower), np.isfinite(self.y_upper)
        parts += [self.y_lower[lo_ok] - y[lo_ok], y[hi_ok] - self.y_upper[hi_ok]]
        return np.concatenate(parts) if parts else np.zeros(0)

    def eq_jacobian(self, w):
        w = np.asarray(w, float)
        if self.jac_g is not None:
            return np.asarray(self.jac_g(*self.split(w)), float)
        return _fd_jacobian(self.eq, w)

    def ineq_jacobian(self, w):
        w = np.asarray(w, float)
        rows = []
        if self.h is not None:
            if self.jac_h is not None:
                rows.append(np.asarray(self.jac_h(*self.split(w)), float))
            else:
                rows.append(_fd_jacobian(lambda v: np.asarray(self.h(*self.split(v)), float), w))
        eye = np.eye(self.n_z + self.n_y)[self.n_z:]
        rows += [-eye[np.isfinite(self.y_lower)], eye[np.isfinite(self.y_upper)]]
        return np.vstack(rows)

    def violation(self, z, y=None) -> tuple[float, float]:
        """``(max |g|, max(h, bounds))`` at ``(z, y)``; a single argument is the stacked vector."""
        w = np.asarray(z, float).ravel() if y is None else np.concatenate(
            [np.asarray(z, float).ravel(), np.asarray(y, float).ravel()])
        try:
            e = self.eq(w)
            i = self.ineq(w)
        except (FloatingPointError, ValueError, ZeroDivisionError):
            return float("inf"), float("inf")
        return (float(np.max(np.abs(e), initial=0.0)), float(np.max(i, initial=0.0)))

    def complete(self, y_sampled, w0=None, tol=1e-10, max_iter=50):
        """Solve ``g = 0`` for ``z`` and the dependent ``y`` with the sampled ``y`` held fixed.

        Returns the stacked ``(z, y)`` or ``None`` when Newton fails.
        """
        y_sampled = np.asarray(y_sampled, float).ravel()
        if w0 is None:
            w0 = (np.asarray(self.start(y_sampled), float).ravel() if self.start is not None
                  else np.zeros(self.n_z + self.n_y))
        w0 = np.array(w0, float)
        s_cols = self.n_z + np.asarray(self.sampled, dtype=int)
        u_cols = np.array(list(range(self.n_z)) + [self.n_z + k for k in self.dependent],
                          dtype=int)
        w0[s_cols] = y_sampled
        if len(self.eq(w0)) != u_cols.size:
            raise DimensionMismatch(f"g has {len(self.eq(w0))} rows but there are "
                                    f"{u_cols.size} unknowns")

        def full(u):
            w = w0.copy()
            w[u_cols] = u
            return w

        system = NonlinearSystem(lambda u: self.eq(full(u)),
                                 lambda u: self.eq_jacobian(full(u))[:, u_cols], w0[u_cols])
        try:
            sol = newton_solve(system, max_iter=max_iter, tol=tol)
        except NumericalFailure:
            return None
        return full(sol.x) if sol.optimal else None


@dataclass(frozen=True, eq=False)
class ConvexSetSpec:
    """A polyhedron over ``w`` (plus optional cones) whose ``keep`` entries are ``z``."""

    P: HPolyhedron
    keep: tuple | None = None
    cones: tuple = ()

    def __post_init__(self):
        keep = tuple(range(self.P.dim)) if self.keep is None else tuple(int(k) for k in self.keep)
        object.__setattr__(self, "keep", keep)
        object.__setattr__(self, "cones", tuple(self.cones))

    @property
    def n_z(self):
        return len(self.keep)

    convex = True

    def violation(self, w) -> tuple[float, float]:
        w = np.asarray(w, float).ravel()
        P = self.P
        eq = float(np.max(np.abs(P.Aeq @ w - P.beq), initial=0.0))
        ineq = float(np.max(P.Ain @ w - P.bin, initial=0.0))
        for K in self.cones:
            ineq = max(ineq, float(np.linalg.norm(K.F @ w + K.g) - K.e))
        return eq, max(ineq, 0.0)

    def minimize(self, c_z, extra: HPolyhedron | None = None):
        """Minimize ``c_z @ z``; returns the optimal ``w`` or ``None`` (infeasible/unbounded)."""
        c = np.zeros(self.P.dim)
        c[list(self.keep)] = c_z
        P = self.P if extra is None else self.P.intersect(extra)
        if self.cones:
            sol = solve_qp(QuadraticProgram(np.zeros((P.dim, P.dim)), c, P, self.cones))
        else:
            sol = lp_minimize(c, P)
        if sol.status is Status.INFEASIBLE:
            raise Infeasible("constraint set is empty")
        return sol.x if sol.optimal else None


# --------------------------------------------------------------------------
# sample sets
# --------------------------------------------------------------------------
def _tag(prov: dict) -> str:
    kind = prov["kind"]
    join = lambda v: ";".join(fmt(a) for a in np.ravel(v))  # noqa: E731
    if kind == "decision":
        return f"decision:{prov['index']}"
    if kind == "boundary":
        return f"boundary:c={join(prov['c'])}"
    return (f"grid:component={prov['component']}:value={join(prov['value'])}"
            f":direction={join(prov['direction'])}")


def _parse_tag(tag: str) -> dict:
    parts = tag.split(":")
    vec = lambda s: [float(a) for a in s.split(";")] if s else []  # noqa: E731
    if parts[0] == "decision":
        return {"kind": "decision", "index": int(parts[1])}
    if parts[0] == "boundary":
        return {"kind": "boundary", "c": vec(parts[1].split("=", 1)[1])}
    if parts[0] == "grid":
        kv = dict(p.split("=", 1) for p in parts[1:])
        return {"kind": "grid", "component": int(kv["component"]),
                "value": vec(kv["value"])[0], "direction": vec(kv["direction"])}
    raise InputError(f"unknown provenance tag {tag!r}")


@dataclass
class SampleSet:
    """Certified coupling-space samples with witnesses and provenance."""

    n_z: int
    points: list = field(default_factory=list)
    witnesses: list = field(default_factory=list)
    provenance: list = field(default_factory=list)
    residuals: list = field(default_factory=list)  # (eq, ineq)
    rejected: int = 0
    convex: bool = False

    def __len__(self):
        return len(self.points)

    @property
    def Z(self) -> np.ndarray:
        return np.array(self.points, float).reshape(-1, self.n_z)

    def add(self, z, w, prov, res):
        self.points.append(np.asarray(z, float).ravel())
        self.witnesses.append(np.asarray(w, float).ravel())
        self.provenance.append(prov)
        self.residuals.append((float(res[0]), float(res[1])))

    def merged(self, other: "SampleSet") -> "SampleSet":
        if other.n_z != self.n_z:
            raise DimensionMismatch("sample sets live in different spaces")
        return SampleSet(self.n_z, self.points + other.points, self.witnesses + other.witnesses,
                         self.provenance + other.provenance, self.residuals + other.residuals,
                         self.rejected + other.rejected, self.convex and other.convex)

    def audit(self, spec) -> float:
        """Recompute the worst residual over all witnesses."""
        worst = 0.0
        for w in self.witnesses:
            worst = max(worst, *spec.violation(w))
        return worst

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow([f"z{k + 1}" for k in range(self.n_z)]
                        + ["provenance", "residual_eq", "residual_ineq"])
            for z, prov, (re, ri) in zip(self.points, self.provenance, self.residuals):
                wr.writerow([fmt(v) for v in z] + [_tag(prov), fmt(re), fmt(ri)])

    @classmethod
    def read_csv(cls, path) -> "SampleSet":
        """Load points, provenance and residuals (witnesses are not exported)."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise InputError(f"{path}: empty sample file")
        n_z = sum(1 for h in rows[0] if h.startswith("z"))
        out = cls(n_z)
        for r in rows[1:]:
            out.points.append(np.array([float(v) for v in r[:n_z]]))
            out.witnesses.append(np.zeros(0))
            out.provenance.append(_parse_tag(r[n_z]))
            out.residuals.append((float(r[n_z + 1]), float(r[n_z + 2])))
        return out


def _certify(spec, w, tol=CERT_TOL):
    res = spec.violation(w)
    return res if (res[0] <= tol and res[1] <= tol) else None


def _z_of(spec, w):
    w = np.asarray(w, float)
    if isinstance(spec, ConvexSetSpec):
        return w[list(spec.keep)]
    return w[:spec.n_z]


# --------------------------------------------------------------------------
# algorithms
# --------------------------------------------------------------------------
def decision_variable_sampling(spec: NlpConstraintSpec, n_samples: int, seed: int = 42,
                               tol: float = CERT_TOL) -> SampleSet:
    """Draw the sampled ``y`` uniformly within bounds, complete by Newton, keep certified points."""
    rng = np.random.default_rng(seed)
    s = list(spec.sampled)
    lo, hi = spec.y_lower[s], spec.y_upper[s]
    draws = lo + (hi - lo) * rng.random((n_samples, len(s)))
    out = SampleSet(spec.n_z, convex=spec.convex)
    for idx, ys in enumerate(draws):
        w = spec.complete(ys)
        res = None if w is None else _certify(spec, w, tol)
        if res is None:
            out.rejected += 1
            continue
        out.add(_z_of(spec, w), w, {"kind": "decision", "index": idx}, res)
    logger.info("decision sampling: kept %d of %d", len(out), n_samples)
    if not len(out):
        raise NoFeasibleSamples(f"all {n_samples} decision-variable samples were rejected")
    return out


def default_costs(n_z: int) -> list[np.ndarray]:
    """All vectors of ``{-1, 0, 1}^n`` except the origin, in lexicographic order."""
    return [np.array(c, float) for c in itertools.product((-1.0, 0.0, 1.0), repeat=n_z)
            if any(c)]


def optimization_based_sampling(spec: ConvexSetSpec | HPolyhedron, costs=None,
                                tol: float = CERT_TOL) -> SampleSet:
    """One boundary point per cost vector ``c``, from ``min c'z`` over the set."""
    if isinstance(spec, HPolyhedron):
        spec = ConvexSetSpec(spec)
    costs = default_costs(spec.n_z) if costs is None else [np.asarray(c, float) for c in costs]
    out = SampleSet(spec.n_z, convex=True)
    for c in costs:
        if c.size != spec.n_z:
            raise DimensionMismatch(f"cost vector has length {c.size}, expected {spec.n_z}")
        w = spec.minimize(c)
        res = None if w is None else _certify(spec, w, tol)
        if res is None:
            out.rejected += 1
            continue
        out.add(_z_of(spec, w), w, {"kind": "boundary", "c": c.tolist()}, res)
    return out


def _slsqp_boundary(spec: NlpConstraintSpec, w0, m, value, d):
    """``min d'z`` subject to the NLP and ``z_m = value``, then a Newton polish."""
    n = spec.n_z + spec.n_y
    c = np.zeros(n)
    c[:spec.n_z] = d
    e_m = np.zeros(n)
    e_m[m] = 1.0
    cons = [
        {"type": "eq", "fun": spec.eq, "jac": spec.eq_jacobian},
        {"type": "eq", "fun": lambda w: np.array([w[m] - value]),
         "jac": lambda w: e_m[None, :]},
    ]
    if spec.ineq(w0).size:
        cons.append({"type": "ineq", "fun": lambda w: -spec.ineq(w),
                     "jac": lambda w: -spec.ineq_jacobian(w)})
    res = minimize(lambda w: c @ w, w0, jac=lambda w: c, method="SLSQP", constraints=cons,
                   options={"maxiter": 300, "ftol": 1e-12})
    w = res.x
    # the polish restores g = 0 to Newton accuracy; it keeps the sampled y fixed
    ys = w[spec.n_z + np.asarray(spec.sampled, dtype=int)]
    return spec.complete(ys, w)


def gridding_refinement(spec, base: SampleSet, m: int, n_grid: int, directions=None,
                        tol: float = CERT_TOL) -> SampleSet:
    """Re-solve boundary problems with ``z_m`` fixed at ``n_grid`` equidistant values.

    The grid spans the range of ``z_m`` over ``base``. ``directions`` are the
    cost vectors in z-space (default ``+-e_k`` for every ``k != m``).
    Convex specs are solved exactly; NLP specs go through SLSQP started from
    the base sample closest in ``z_m`` and are then polished by Newton.
    """
    if isinstance(spec, HPolyhedron):
        spec = ConvexSetSpec(spec)
    n_z = spec.n_z
    if not 0 <= m < n_z:
        raise DimensionMismatch(f"component {m} outside 0..{n_z - 1}")
    if not len(base):
        raise ComponentUnbounded("no base samples to bound the gridded component")
    zm = base.Z[:, m]
    lo, hi = float(zm.min()), float(zm.max())
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ComponentUnbounded(f"component {m} is unbounded over the base samples")
    grid = np.linspace(lo, hi, n_grid) if n_grid > 1 else np.array([0.5 * (lo + hi)])
    if directions is None:
        directions = []
        for k in range(n_z):
            if k != m:
                for sgn in (-1.0, 1.0):
                    d = np.zeros(n_z)
                    d[k] = sgn
                    directions.append(d)
    directions = [np.asarray(d, float) for d in directions]
    out = SampleSet(n_z, convex=base.convex)
    previous: dict[int, np.ndarray] = {}  # warm starts along each direction
    for v in grid:
        for di, d in enumerate(directions):
            prov = {"kind": "grid", "component": m, "value": float(v), "direction": d.tolist()}
            if isinstance(spec, ConvexSetSpec):
                row = np.zeros((1, spec.P.dim))
                row[0, spec.keep[m]] = 1.0
                try:
                    w = spec.minimize(d, HPolyhedron(row, [v], dim=spec.P.dim))
                except Infeasible:
                    w = None
            else:
                near = int(np.argmin(np.abs(zm - v)))
                w0 = previous.get(di, base.witnesses[near])
                if w0.size != spec.n_z + spec.n_y:
                    raise InputError("base samples carry no witnesses")
                w = _slsqp_boundary(spec, w0, m, v, d)
            res = None if w is None else _certify(spec, w, tol)
            if res is None:
                out.rejected += 1
                continue
            previous[di] = w
            out.add(_z_of(spec, w), w, prov, res)
    return out


# --------------------------------------------------------------------------
# hulls
# --------------------------------------------------------------------------
@dataclass
class SampleHull:
    """Convex hull of samples; ``certified_inner`` only when the sampled set is convex."""

    polyhedron: HPolyhedron
    vertices: np.ndarray
    certified_inner: bool

    def to_dict(self):
        d = self.polyhedron.to_dict()
        d["vertices"] = self.vertices.tolist()
        d["certified_inner"] = self.certified_inner
        return d


def _affine_rank(Z, tol):
    C = Z - Z.mean(axis=0)
    s = np.linalg.svd(C, compute_uv=False)
    scale = max(1.0, float(np.abs(Z).max()))
    return int(np.sum(s > tol * scale * max(1, len(Z))))


def gift_wrap(Z: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Indices of the 2-D hull vertices in counterclockwise order (Jarvis march)."""
    Z = np.asarray(Z, float)
    n = len(Z)
    scale = max(1.0, float(np.abs(Z).max())) ** 2
    start = min(range(n), key=lambda i: (Z[i, 0], Z[i, 1]))
    hull = [start]
    p = start
    while True:
        q = (p + 1) % n
        for r in range(n):
            if r == p:
                continue
            a, b = Z[q] - Z[p], Z[r] - Z[p]
            cross = a[0] * b[1] - a[1] * b[0]
            # r is clockwise of p->q, or collinear and farther
            if cross < -tol * scale or (abs(cross) <= tol * scale and b @ b > a @ a):
                q = r
        if q == start:
            break
        if len(hull) > n:
            raise NumericalFailure("gift wrapping did not close")
        hull.append(q)
        p = q
    return np.array(hull)


def hull_of_samples(samples: SampleSet | np.ndarray, certified_inner: bool | None = None,
                    tol: float = HULL_TOL) -> SampleHull:
    """H-representation of ``conv(samples)``; every sample satisfies every row."""
    if isinstance(samples, SampleSet):
        Z = samples.Z
        convex = samples.convex
    else:
        Z = np.atleast_2d(np.asarray(samples, float))
        convex = False
    if certified_inner is None:
        certified_inner = convex
    n = Z.shape[1]
    if len(Z) < n + 1 or _affine_rank(Z, 1e-10) < n:
        raise DegenerateHull(f"{len(Z)} samples do not span {n} dimensions")
    if n == 1:
        A = np.array([[1.0], [-1.0]])
        verts = np.array([[Z.min()], [Z.max()]])
    elif n == 2:
        idx = gift_wrap(Z)
        verts = Z[idx]
        edges = np.roll(verts, -1, axis=0) - verts
        A = np.column_stack([edges[:, 1], -edges[:, 0]])  # outward for ccw order
    else:
        try:
            H = ConvexHull(Z)
        except QhullError as exc:
            raise DegenerateHull(str(exc)) from exc
        A = H.equations[:, :-1]
        verts = Z[H.vertices]
    A = A / np.linalg.norm(A, axis=1, keepdims=True)
    b = (Z @ A.T).max(axis=0)  # tight and sound by construction
    keep = np.ones(len(A), bool)
    for i in range(len(A)):  # merge duplicate facets from coplanar triangles
        if keep[i]:
            dup = (np.abs(A[i + 1:] - A[i]).max(axis=1) <= 1e-12) & (
                np.abs(b[i + 1:] - b[i]) <= 1e-12)
            keep[i + 1:][dup] = False
    P = HPolyhedron(Ain=A[keep], bin=b[keep], dim=n)
    assert P.contains_many(Z, tol).all()
    return SampleHull(P, verts, bool(certified_inner))


def hull_coupling_set(hull: SampleHull):
    """Wrap a sample hull for use as a coupling-set override in the backward sweep."""
    from .dp import CouplingSetApprox

    return CouplingSetApprox("hull", hull.polyhedron, hull.certified_inner, None, float("nan"))

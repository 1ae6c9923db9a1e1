"""Convex polyhedra in H-representation and their exact projections.

A polyhedron is ``{x : Aeq x = beq, Ain x <= bin}``. Projections are
computed by substituting equalities away and then running Fourier-Motzkin
elimination, with redundant rows removed after every eliminated column. Column indices in this module are 0-based.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import null_space
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError

from .errors import (DimensionMismatch, EmptyPolyhedron, InconsistentEqualities,
                     NumericalFailure, UnboundedRadius)
from .solvers import LpSession, Status, _lp_arrays

logger = logging.getLogger(__name__)

REDUNDANCY_TOL = 1e-9
MEMBERSHIP_TOL = 1e-8
DEDUP_TOL = 1e-12
ZERO_COEF = 1e-12


def _as_matrix(A, ncols):
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros((0, ncols))
    return A.reshape(-1, ncols)


@dataclass(frozen=True, eq=False)
class HPolyhedron:
    Aeq: np.ndarray
    beq: np.ndarray
    Ain: np.ndarray
    bin: np.ndarray
    dim: int

    def __init__(self, Aeq=None, beq=None, Ain=None, bin=None, dim=None):
        if dim is None:
            for M in (Ain, Aeq):
                if M is not None and np.asarray(M).ndim == 2:
                    dim = np.asarray(M).shape[1]
                    break
            else:
                raise DimensionMismatch("cannot infer dimension of an empty description")
        dim = int(dim)
        Aeq = _as_matrix([] if Aeq is None else Aeq, dim)
        Ain = _as_matrix([] if Ain is None else Ain, dim)
        beq = np.asarray([] if beq is None else beq, dtype=float).ravel()
        bin_ = np.asarray([] if bin is None else bin, dtype=float).ravel()
        if Aeq.shape[0] != beq.size or Ain.shape[0] != bin_.size:
            raise DimensionMismatch("row counts do not match right-hand sides")
        for name, val in (("Aeq", Aeq), ("beq", beq), ("Ain", Ain), ("bin", bin_),
                          ("dim", dim)):
            object.__setattr__(self, name, val)

    # -- constructors -------------------------------------------------------
    @classmethod
    def from_inequalities(cls, A, b):
        A = np.atleast_2d(np.asarray(A, float))
        return cls(Ain=A, bin=b, dim=A.shape[1])

    @classmethod
    def box(cls, lower, upper):
        lower = np.asarray(lower, float).ravel()
        upper = np.asarray(upper, float).ravel()
        n = lower.size
        eye = np.eye(n)
        return cls(Ain=np.vstack([eye, -eye]), bin=np.concatenate([upper, -lower]), dim=n)

    @classmethod
    def universe(cls, dim):
        return cls(dim=dim)

    @classmethod
    def empty(cls, dim):
        return cls(Ain=np.zeros((1, dim)), bin=[-1.0], dim=dim)

    @classmethod
    def from_dict(cls, d):
        dim = int(d["dim"])
        return cls(d.get("Aeq") or None, d.get("beq") or None,
                   d.get("Ain") or None, d.get("bin") or None, dim)

    def to_dict(self):
        return {"dim": self.dim,
                "Aeq": self.Aeq.tolist(), "beq": self.beq.tolist(),
                "Ain": self.Ain.tolist(), "bin": self.bin.tolist()}

    # -- queries ------------------------------------------------------------
    @property
    def n_eq(self):
        return self.Aeq.shape[0]

    @property
    def n_in(self):
        return self.Ain.shape[0]

    def violation(self, x):
        """Largest constraint violation at ``x`` (0 when feasible)."""
        x = np.asarray(x, float).ravel()
        v = 0.0
        if self.n_eq:
            v = max(v, float(np.max(np.abs(self.Aeq @ x - self.beq))))
        if self.n_in:
            v = max(v, float(np.max(self.Ain @ x - self.bin)))
        return v

    def contains(self, x, tol=MEMBERSHIP_TOL):
        return self.violation(x) <= tol

    def contains_many(self, X, tol=MEMBERSHIP_TOL):
        X = np.atleast_2d(np.asarray(X, float))
        ok = np.ones(X.shape[0], dtype=bool)
        if self.n_eq:
            ok &= np.all(np.abs(X @ self.Aeq.T - self.beq) <= tol, axis=1)
        if self.n_in:
            ok &= np.all(X @ self.Ain.T - self.bin <= tol, axis=1)
        return ok

    def feasible_point(self):
        """Some point of the set, or ``None`` if it is empty."""
        if self.dim == 0:
            return np.zeros(0) if self.violation(np.zeros(0)) <= MEMBERSHIP_TOL else None
        sol = _lp_arrays(np.zeros(self.dim), self.Ain, self.bin, self.Aeq, self.beq)
        if sol.status is Status.OPTIMAL:
            return sol.x
        if sol.status is Status.INFEASIBLE:
            return None
        raise NumericalFailure(f"feasibility LP returned {sol.status.value}")

    def is_empty(self):
        return self.feasible_point() is None

    def intersect(self, other: "HPolyhedron") -> "HPolyhedron":
        if other.dim != self.dim:
            raise DimensionMismatch("intersection of polyhedra of different dimension")
        return HPolyhedron(np.vstack([self.Aeq, other.Aeq]), np.concatenate([self.beq, other.beq]),
                           np.vstack([self.Ain, other.Ain]), np.concatenate([self.bin, other.bin]),
                           self.dim)

    def lift(self, columns: Sequence[int], dim: int) -> "HPolyhedron":
        """Embed into ``R^dim`` with this set's coordinates placed at ``columns``."""
        columns = list(columns)
        if len(columns) != self.dim:
            raise DimensionMismatch("lift needs one target column per coordinate")
        Aeq = np.zeros((self.n_eq, dim))
        Ain = np.zeros((self.n_in, dim))
        Aeq[:, columns] = self.Aeq
        Ain[:, columns] = self.Ain
        return HPolyhedron(Aeq, self.beq, Ain, self.bin, dim)

    def bounding_box(self):
        """Per-coordinate (min, max) via 2*dim LPs; +-inf where unbounded."""
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = 1.0
            for sign in (1.0, -1.0):
                sol = _lp_arrays(sign * e, self.Ain, self.bin, self.Aeq, self.beq)
                if sol.status is Status.INFEASIBLE:
                    raise EmptyPolyhedron("bounding box of an empty polyhedron")
                if sol.status is Status.OPTIMAL:
                    if sign > 0:
                        lo[k] = sol.x[k]
                    else:
                        hi[k] = sol.x[k]
        return lo, hi

    def __repr__(self):
        return f"HPolyhedron(dim={self.dim}, n_eq={self.n_eq}, n_in={self.n_in})"


@dataclass(frozen=True, eq=False)
class AffineMap:
    """``x = offset + basis @ t`` with an orthonormal ``basis``."""

    offset: np.ndarray
    basis: np.ndarray

    def __call__(self, t):
        return self.offset + self.basis @ np.asarray(t, float)

    def inverse(self, x):
        return self.basis.T @ (np.asarray(x, float) - self.offset)


def normalize_rows(A, b):
    """Scale rows to unit 2-norm; rows with (near) zero gradient are returned apart."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    A = A.reshape(len(b), -1)
    norms = np.sqrt((A ** 2).sum(axis=1))
    nz = norms > ZERO_COEF
    return A[nz] / norms[nz, None], b[nz] / norms[nz], b[~nz]


def _dedup(A, b):
    """Merge rows whose normalized gradients agree within DEDUP_TOL (keep tightest rhs)."""
    m = A.shape[0]
    if m < 2:
        return A, b
    order = np.lexsort(A.T[::-1])
    A, b = A[order], b[order].copy()
    keep = np.ones(m, dtype=bool)
    # near-equal gradients are only approximately adjacent after the sort,
    # so compare against every earlier kept row (m is small at desk scale)
    for i in range(1, m):
        prev = np.nonzero(keep[:i])[0]
        d = np.max(np.abs(A[prev] - A[i]), axis=1)
        j = np.nonzero(d <= DEDUP_TOL)[0]
        if j.size:
            k = prev[j[0]]
            b[k] = min(b[k], b[i])
            keep[i] = False
    return A[keep], b[keep]


def eliminate_equalities(P: HPolyhedron):
    """Rewrite ``P`` in nullspace coordinates of its equality rows.

    Returns ``(Q, amap)`` where ``Q`` is inequality-only of dimension
    ``dim - rank(Aeq)`` and ``amap(t)`` maps points of ``Q`` into ``P``.
    """
    n = P.dim
    if P.n_eq == 0:
        return HPolyhedron(Ain=P.Ain, bin=P.bin, dim=n), AffineMap(np.zeros(n), np.eye(n))
    x0, *_ = np.linalg.lstsq(P.Aeq, P.beq, rcond=None)
    scale = max(1.0, float(np.abs(P.beq).max()))
    if np.max(np.abs(P.Aeq @ x0 - P.beq)) > 1e-9 * scale:
        raise InconsistentEqualities("equality rows are inconsistent")
    N = null_space(P.Aeq, rcond=1e-12)
    Ain = P.Ain @ N
    bin_ = P.bin - P.Ain @ x0
    return HPolyhedron(Ain=Ain, bin=bin_, dim=N.shape[1]), AffineMap(x0, N)


def _substitute_equalities(Aeq, beq, Ain, bin_, elim_cols):
    """Pivot equality rows on eliminable columns and substitute them away.

    Returns the reduced inequality system, the equalities that only involve
    kept columns, the list of columns substituted away, and a flag telling
    whether an inconsistent equality was met.
    """
    Aeq = Aeq.copy()
    beq = beq.copy()
    Ain = Ain.copy()
    bin_ = bin_.copy()
    elim = set(elim_cols)
    gone = []
    residual_rows = []
    for r in range(Aeq.shape[0]):
        row = Aeq[r]
        scale = max(1.0, float(np.abs(row).max(initial=0.0)))
        cand = [c for c in sorted(elim) if abs(row[c]) > 1e-10 * scale]
        if not cand:
            residual_rows.append(r)
            continue
        p = max(cand, key=lambda c: (abs(row[c]), -c))
        piv = row[p]
        # x_p = (beq_r - sum_{c != p} row_c x_c) / piv
        for M, v in ((Aeq, beq), (Ain, bin_)):
            f = M[:, p] / piv
            if r < M.shape[0] and M is Aeq:
                f[r] = 0.0
            M -= np.outer(f, row)
            v -= f * beq[r]
            M[:, p] = 0.0
        Aeq[r] = 0.0
        beq[r] = 0.0
        elim.discard(p)
        gone.append(p)
    rows = np.array(residual_rows, dtype=int)
    E, e = Aeq[rows], beq[rows]
    inconsistent = False
    if rows.size:
        norms = np.linalg.norm(E, axis=1)
        zero = norms <= 1e-10 * np.maximum(1.0, np.abs(E).max(axis=1, initial=0.0))
        if np.any(np.abs(e[zero]) > 1e-9 * max(1.0, np.abs(beq).max(initial=0.0))):
            inconsistent = True
        E, e = E[~zero], e[~zero]
    return Ain, bin_, E, e, gone, inconsistent


def fourier_motzkin_project(P: HPolyhedron, keep: Sequence[int], redundancy: bool = True,
                            tol: float = REDUNDANCY_TOL) -> HPolyhedron:
    """Exact orthogonal projection of ``P`` onto the columns ``keep``.

    The result's coordinates follow the order of ``keep``. Equalities are
    substituted first (pivoting on projected-away columns only); remaining
    columns are eliminated one at a time, cheapest ``#pos * #neg`` first.
    """
    keep = [int(k) for k in keep]
    if len(set(keep)) != len(keep) or any(k < 0 or k >= P.dim for k in keep):
        raise DimensionMismatch(f"keep indices {keep} invalid for dimension {P.dim}")
    n = P.dim
    elim_cols = [c for c in range(n) if c not in set(keep)]
    Ain, bin_, E, e, gone, inconsistent = _substitute_equalities(
        P.Aeq, P.beq, P.Ain, P.bin, elim_cols)
    if inconsistent:
        return HPolyhedron.empty(len(keep))
    remaining = [c for c in elim_cols if c not in set(gone)]

    A, b, zero_b = normalize_rows(Ain, bin_)
    if np.any(zero_b < -tol):
        return HPolyhedron.empty(len(keep))
    A, b = _dedup(A, b)
    cols = list(range(n))
    while remaining:
        counts = []
        for c in remaining:
            col = A[:, cols.index(c)]
            counts.append((int(np.sum(col > ZERO_COEF)) * int(np.sum(col < -ZERO_COEF)), c))
        _, c = min(counts)
        j = cols.index(c)
        col = A[:, j]
        pos = np.nonzero(col > ZERO_COEF)[0]
        neg = np.nonzero(col < -ZERO_COEF)[0]
        zer = np.nonzero(np.abs(col) <= ZERO_COEF)[0]
        new_A = [A[zer]]
        new_b = [b[zer]]
        if pos.size and neg.size:
            Ap = A[pos] / col[pos, None]
            bp = b[pos] / col[pos]
            An = A[neg] / (-col[neg])[:, None]
            bn = b[neg] / (-col[neg])
            comb_A = (Ap[:, None, :] + An[None, :, :]).reshape(-1, A.shape[1])
            comb_b = (bp[:, None] + bn[None, :]).ravel()
            new_A.append(comb_A)
            new_b.append(comb_b)
        A = np.vstack(new_A)
        b = np.concatenate(new_b)
        A = np.delete(A, j, axis=1)
        cols.pop(j)
        if E.size:
            E = np.delete(E, j, axis=1)
        A, b, zero_b = normalize_rows(A, b)
        if np.any(zero_b < -tol):
            return HPolyhedron.empty(len(keep))
        A, b = _dedup(A, b)
        remaining.remove(c)
        if redundancy and A.shape[0] > 1:
            mask = _redundant_mask(A, b, E, e, tol)
            A, b = A[~mask], b[~mask]
        logger.debug("FM eliminated column %d: %d rows remain", c, A.shape[0])

    # reorder remaining columns to follow `keep`
    perm = [cols.index(k) for k in keep]
    A = A[:, perm] if A.size else np.zeros((0, len(keep)))
    E = E[:, perm] if E.size else np.zeros((0, len(keep)))
    return HPolyhedron(E, e, A, b, len(keep))


def _interior_point(A, b, E, e):
    """Point maximising the uniform slack of normalized rows (capped at 1)."""
    m, n = A.shape
    G = np.hstack([A, np.ones((m, 1))])
    Eq = np.hstack([E, np.zeros((E.shape[0], 1))]) if E.size else None
    c = np.zeros(n + 1)
    c[-1] = -1.0
    lb = np.concatenate([np.full(n, -np.inf), [-np.inf]])
    ub = np.concatenate([np.full(n, np.inf), [1.0]])
    sol = _lp_arrays(c, G, b, Eq, e if E.size else None, lb=lb, ub=ub)
    if sol.status is not Status.OPTIMAL:
        return None, -np.inf
    return sol.x[:n], float(sol.x[n])


def _ray_shoot_facets(A, b, E, x0, n_rays):
    """Rows certified irredundant: first hit, uniquely, by a ray from ``x0``."""
    m, n = A.shape
    rng = np.random.default_rng(0)
    basis = null_space(E) if E.size else np.eye(n)
    if basis.shape[1] == 0:
        return np.zeros(m, dtype=bool)
    D = basis @ rng.standard_normal((basis.shape[1], n_rays))
    slack = b - A @ x0
    rate = A @ D
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(rate > 1e-12, slack[:, None] / rate, np.inf)
    facet = np.zeros(m, dtype=bool)
    if m == 1:
        facet[:] = np.isfinite(t).any()
        return facet
    part = np.partition(t, 1, axis=0)
    first = np.argmin(t, axis=0)
    unique = np.isfinite(part[0]) & (part[1] > part[0] * (1 + 1e-6) + 1e-12)
    facet[first[unique]] = True
    return facet


def _redundant_mask(A, b, E, e, tol):
    """Flag inequality rows implied by the others.

    With an interior point ``x0`` the set is ``{y : d_i'y <= 1}`` around
    ``x0`` where ``d_i = a_i / (b_i - a_i'x0)``, and row ``i`` is irredundant
    exactly when ``d_i`` is a vertex of ``conv({0} U {d_j})``. Degenerate
    cases (no interior, qhull failure) fall back to one LP per row.
    """
    m, n = A.shape
    mask = np.zeros(m, dtype=bool)
    if n == 0 or m == 0:
        return mask
    x0, r = _interior_point(A, b, E, e)
    if x0 is None or r < -tol:
        # empty sets pass through untouched
        return mask
    if r > 1e-9:
        polar = _polar_redundant(A, b, E, x0)
        if polar is not None:
            return polar
    return _lp_redundant(A, b, E, e, x0, r, tol)


def _polar_redundant(A, b, E, x0):
    N = null_space(E) if E.size else np.eye(A.shape[1])
    k = N.shape[1]
    m = A.shape[0]
    mask = np.zeros(m, dtype=bool)
    if k == 0:
        return np.ones(m, dtype=bool)
    G = A @ N
    s = b - A @ x0
    live = np.sqrt((G ** 2).sum(axis=1)) > ZERO_COEF
    mask[~live] = True  # constant rows, satisfied at the interior point
    idx = np.flatnonzero(live)
    D = G[idx] / s[idx, None]
    if k == 1:
        d = D[:, 0]
        keep = []
        if np.any(d > 0):
            keep.append(idx[np.argmax(np.where(d > 0, d, -np.inf))])
        if np.any(d < 0):
            keep.append(idx[np.argmin(np.where(d < 0, d, np.inf))])
        mask[:] = True
        mask[keep] = False
        return mask
    if idx.size < k:
        return None
    try:
        hull = ConvexHull(np.vstack([np.zeros(k), D]))
    except QhullError:
        return None
    vert = set(int(v) - 1 for v in hull.vertices if v > 0)
    for j, i in enumerate(idx):
        mask[i] = j not in vert
    return mask


def _lp_redundant(A, b, E, e, x0, r, tol):
    """Sequential LP test; rows hit first by random rays from ``x0`` skip it."""
    m, n = A.shape
    mask = np.zeros(m, dtype=bool)
    facet = _ray_shoot_facets(A, b, E, x0, 64 * n + 64) if r > 1e-9 else np.zeros(m, bool)
    session = LpSession(A, b, E if E.size else None, e if E.size else None)
    for i in range(m):
        if facet[i]:
            continue
        session.set_row_upper(i, b[i] + 1.0)
        sol = session.minimize(-A[i])
        if sol.status is Status.OPTIMAL and -sol.objective <= b[i] + tol:
            mask[i] = True
            session.set_row_upper(i, np.inf)
        else:
            session.set_row_upper(i, b[i])
    return mask


def remove_redundancy(P: HPolyhedron, tol: float = REDUNDANCY_TOL) -> HPolyhedron:
    """Drop inequality rows implied by the remaining rows."""
    A, b, zero_b = normalize_rows(P.Ain, P.bin)
    if np.any(zero_b < -tol):
        return HPolyhedron(P.Aeq, P.beq, np.vstack([A, np.zeros((1, P.dim))]),
                           np.concatenate([b, [-1.0]]), P.dim)
    A, b = _dedup(A, b)
    mask = _redundant_mask(A, b, P.Aeq, P.beq, tol)
    return HPolyhedron(P.Aeq, P.beq, A[~mask], b[~mask], P.dim)


def _membership_lp(P, keep, Z):
    """Minimal uniform slack ``s`` such that a witness exists, per row of ``Z``."""
    keep = list(keep)
    other = [c for c in range(P.dim) if c not in set(keep)]
    Z = np.atleast_2d(np.asarray(Z, float))
    K = Z.shape[0]
    Ain, bin_, _ = normalize_rows(P.Ain, P.bin)
    zero_rows = P.bin[np.linalg.norm(P.Ain, axis=1) <= ZERO_COEF] if P.n_in else np.zeros(0)
    base = float(max(0.0, -zero_rows.min(initial=0.0)))
    eq_norm = np.linalg.norm(P.Aeq, axis=1) if P.n_eq else np.zeros(0)
    eq_ok = eq_norm > ZERO_COEF
    Aeq = P.Aeq[eq_ok] / eq_norm[eq_ok, None] if P.n_eq else np.zeros((0, P.dim))
    beq = P.beq[eq_ok] / eq_norm[eq_ok] if P.n_eq else np.zeros(0)
    base_eq = float(np.max(np.abs(P.beq[~eq_ok]), initial=0.0)) if P.n_eq else 0.0
    base = max(base, base_eq)
    # stacked rows: Ain, Aeq, -Aeq (two-sided equality slack)
    G = np.vstack([Ain, Aeq, -Aeq])
    h = np.concatenate([bin_, beq, -beq])
    Gz, Gy = G[:, keep], G[:, other]
    rhs = h[None, :] - Z @ Gz.T  # K x m
    m = G.shape[0]
    if m == 0:
        return np.full(K, base)
    ny = len(other)
    if ny == 0:
        return np.maximum(base, np.max(-rhs, axis=1).clip(min=0.0))
    block = sp.csr_matrix(np.hstack([Gy, -np.ones((m, 1))]))
    out = np.empty(K)
    chunk = 50
    for start in range(0, K, chunk):
        k = min(chunk, K - start)
        A_ub = sp.kron(sp.identity(k, format="csr"), block, format="csr")
        c = np.tile(np.concatenate([np.zeros(ny), [1.0]]), k)
        bounds = [(None, None)] * ny + [(0, None)]
        res = linprog(c, A_ub=A_ub, b_ub=rhs[start:start + k].ravel(), bounds=bounds * k,
                      method="highs",
                      options={"primal_feasibility_tolerance": 1e-10,
                               "dual_feasibility_tolerance": 1e-10})
        if res.status != 0:
            raise NumericalFailure(f"membership LP failed: {res.message}")
        out[start:start + k] = np.asarray(res.x).reshape(k, ny + 1)[:, -1]
    return np.maximum(out, base)


def membership_oracle_project(P: HPolyhedron, keep: Sequence[int], z, tol: float = MEMBERSHIP_TOL) -> bool:
    """True iff some completion ``y`` puts ``(z, y)`` in ``P`` (within ``tol``)."""
    return bool(_membership_lp(P, keep, np.atleast_2d(z))[0] <= tol)


def membership_oracle_batch(P: HPolyhedron, keep: Sequence[int], Z, tol: float = MEMBERSHIP_TOL):
    """Vectorised :func:`membership_oracle_project` over the rows of ``Z``."""
    return _membership_lp(P, keep, Z) <= tol


def chebyshev_center(P: HPolyhedron):
    """Center and radius of the largest Euclidean ball inside ``P``."""
    if P.n_eq:
        raise DimensionMismatch("chebyshev_center expects an inequality-only polyhedron")
    A, b, zero_b = normalize_rows(P.Ain, P.bin)
    if np.any(zero_b < -MEMBERSHIP_TOL):
        raise EmptyPolyhedron("polyhedron is empty")
    n = P.dim
    if A.shape[0] == 0:
        raise UnboundedRadius("no inequality rows: the radius is unbounded")
    G = np.hstack([A, np.ones((A.shape[0], 1))])
    c = np.zeros(n + 1)
    c[-1] = -1.0
    lb = np.concatenate([np.full(n, -np.inf), [0.0]])
    sol = _lp_arrays(c, G, b, None, None, lb=lb)
    if sol.status is Status.INFEASIBLE:
        raise EmptyPolyhedron("polyhedron is empty")
    if sol.status is Status.UNBOUNDED:
        raise UnboundedRadius("inscribed ball radius is unbounded")
    if sol.status is not Status.OPTIMAL:
        raise NumericalFailure(f"Chebyshev LP returned {sol.status.value}")
    return sol.x[:n], float(sol.x[n])


def polygon_vertices(P: HPolyhedron):
    """Counter-clockwise vertices of a bounded 2-D polyhedron with interior."""

    if P.dim != 2:
        raise DimensionMismatch("polygon_vertices needs a 2-D polyhedron")
    center, radius = chebyshev_center(P)
    if radius <= 1e-12:
        raise EmptyPolyhedron("polygon has no interior")
    A, b, _ = normalize_rows(P.Ain, P.bin)
    hs = HalfspaceIntersection(np.hstack([A, -b[:, None]]), center)
    V = hs.intersections
    ang = np.arctan2(V[:, 1] - center[1], V[:, 0] - center[0])
    V = V[np.argsort(ang)]
    keep = [0]
    for i in range(1, len(V)):
        if np.max(np.abs(V[i] - V[keep[-1]])) > 1e-10:
            keep.append(i)
    if len(keep) > 1 and np.max(np.abs(V[keep[-1]] - V[keep[0]])) <= 1e-10:
        keep.pop()
    return V[keep]

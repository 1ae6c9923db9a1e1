"""Design centering: inscribed ellipsoids, boxes and balls for polyhedra.

The inscribed-ellipsoid problem

    max log det A   s.t.  ||A b_i|| + b_i'c <= d_i   for every row i

is solved by a small primal barrier method: Newton steps on
``-log det A - mu * sum log(slack_i)`` over the upper triangle of ``A`` and
the center ``c``, with ``mu`` driven to zero. Every iterate is strictly
feasible, so the returned ellipsoid satisfies all row constraints exactly in
exact arithmetic and up to rounding in practice.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .errors import (DegenerateImage, EmptyOrLowerDimensional, EmptyPolyhedron,
                     NumericalFailure, Unbounded, UnboundedRadius)
from .solvers import _lp_arrays
from .polyhedra import HPolyhedron, chebyshev_center, eliminate_equalities, normalize_rows

logger = logging.getLogger(__name__)

MU_START = 1.0
MU_FINAL = 1e-11
MU_FACTOR = 0.1
MAX_NEWTON = 100


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """The set ``{A u + c : ||u||_2 <= 1}`` with ``A`` symmetric positive definite."""

    A: np.ndarray
    c: np.ndarray
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, float))
        c = np.asarray(self.c, float).ravel()
        if A.shape != (c.size, c.size):
            raise ValueError("ellipsoid shape matrix and center disagree in dimension")
        object.__setattr__(self, "A", 0.5 * (A + A.T))
        object.__setattr__(self, "c", c)

    @property
    def dim(self):
        return self.c.size

    def volume_factor(self):
        """``det A``; the volume up to the unit-ball constant."""
        return float(np.linalg.det(self.A))

    def contains(self, x, tol=1e-9):
        return ellipsoid_contains(self, x, tol)

    def boundary_points(self, n=256):
        """Points on the boundary; evenly spaced angles in 2-D, random directions otherwise."""
        if self.dim == 1:
            U = np.array([[-1.0], [1.0]])
        elif self.dim == 2:
            t = 2 * np.pi * np.arange(n) / n
            U = np.column_stack([np.cos(t), np.sin(t)])
        else:
            U = np.random.default_rng(0).standard_normal((n, self.dim))
            U /= np.linalg.norm(U, axis=1, keepdims=True)
        return U @ self.A.T + self.c

    def inner_polytope(self) -> HPolyhedron:
        """The image of the cube ``||u||_inf <= 1/sqrt(n)``, a polytope inside the ellipsoid."""
        n = self.dim
        Ainv = np.linalg.inv(self.A) * np.sqrt(n)
        return HPolyhedron(Ain=np.vstack([Ainv, -Ainv]),
                           bin=np.concatenate([1 + Ainv @ self.c, 1 - Ainv @ self.c]), dim=n)

    def to_dict(self):
        return {"A": self.A.tolist(), "c": self.c.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["A"], float), np.asarray(d["c"], float))


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, float).ravel()
        hi = np.asarray(self.upper, float).ravel()
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box needs lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.size

    def volume(self):
        return float(np.prod(self.upper - self.lower))

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def as_polyhedron(self) -> HPolyhedron:
        return HPolyhedron.box(self.lower, self.upper)

    def to_dict(self):
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["lower"], float), np.asarray(d["upper"], float))


def ellipsoid_contains(E: Ellipsoid, x, tol=1e-9) -> bool:
    """True iff ``||A^{-1}(x - c)|| <= 1 + tol``."""
    u = np.linalg.solve(E.A, np.asarray(x, float) - E.c)
    return bool(np.linalg.norm(u) <= 1 + tol)


def ellipsoid_row_certificate(E: Ellipsoid, P: HPolyhedron) -> float:
    """``max_i ||A b_i|| + b_i'c - d_i`` over normalized rows; <= 0 certifies E inside P."""
    B, d, zero_d = normalize_rows(P.Ain, P.bin)
    worst = float(np.max(-zero_d, initial=-np.inf))
    if B.shape[0]:
        worst = max(worst, float(np.max(np.linalg.norm(B @ E.A, axis=1) + B @ E.c - d)))
    return worst


def box_row_certificate(box: Box, P: HPolyhedron) -> float:
    """Largest row value over the box corners minus rhs; <= 0 certifies the box inside P."""
    B, d, zero_d = normalize_rows(P.Ain, P.bin)
    worst = float(np.max(-zero_d, initial=-np.inf))
    if B.shape[0]:
        top = np.clip(B, 0, None) @ box.upper - np.clip(-B, 0, None) @ box.lower
        worst = max(worst, float(np.max(top - d)))
    return worst


def _check_bounded(B):
    """Raise unless the recession cone ``{d : B d <= 0}`` is ``{0}``."""
    n = B.shape[1]
    if np.linalg.matrix_rank(B) < n:
        raise Unbounded("polyhedron contains a line")
    # with full column rank, the cone is trivial iff no d in it moves any row
    sol = _lp_arrays(B.sum(axis=0), B, np.zeros(B.shape[0]), None, None, lb=-1.0, ub=1.0)
    if not sol.optimal or sol.objective < -1e-9:
        raise Unbounded("polyhedron is unbounded")


def _start(P: HPolyhedron):
    if P.n_eq:
        raise EmptyOrLowerDimensional(
            "polyhedron has equality rows; eliminate them first (inscribed_ellipsoid_affine)")
    try:
        c0, r0 = chebyshev_center(P)
    except EmptyPolyhedron as exc:
        raise EmptyOrLowerDimensional(str(exc)) from exc
    except UnboundedRadius as exc:
        raise Unbounded(str(exc)) from exc
    B, _, _ = normalize_rows(P.Ain, P.bin)
    _check_bounded(B)
    if r0 <= 1e-9 * max(1.0, float(np.abs(c0).max(initial=0.0))):
        raise EmptyOrLowerDimensional("polyhedron has no interior")
    return c0, r0


def _sym_basis(n):
    idx = [(i, j) for i in range(n) for j in range(i, n)]
    E = np.zeros((len(idx), n, n))
    for k, (i, j) in enumerate(idx):
        E[k, i, j] = 1.0
        E[k, j, i] = 1.0
    return E


def _barrier_minimize(x, value, derivatives, slack=None):
    """Follow the barrier path from ``mu = MU_START`` down to ``MU_FINAL``.

    Intermediate centering is loose; the last stage is converged tightly.
    Returns the final iterate and the number of Newton steps taken.
    """
    mu = MU_START
    steps = 0
    while True:
        final = mu <= MU_FINAL
        stop = 1e-14 if final else 1e-8
        for _ in range(MAX_NEWTON):
            g, H = derivatives(x, mu)
            # symmetric Jacobi scaling keeps the near-boundary Hessian solvable
            sc = 1.0 / np.sqrt(np.abs(np.diag(H)) + 1e-300)
            Hs = H * sc[:, None] * sc[None, :]
            try:
                step = sc * np.linalg.solve(Hs, -g * sc)
            except np.linalg.LinAlgError:
                # numerically singular close to the optimum: least-squares step
                step = sc * np.linalg.lstsq(Hs, -g * sc, rcond=1e-14)[0]
            if not np.all(np.isfinite(step)):
                raise NumericalFailure("non-finite Newton step in barrier method")
            dec = float(-g @ step)
            if dec < stop:
                break
            f0 = value(x, mu)
            t = 1.0
            if slack is not None:
                # fraction to the boundary: no slack shrinks by more than 99%
                s0, s1 = slack(x), slack(x + step)
                shrink = s0 - s1
                with np.errstate(divide="ignore", invalid="ignore"):
                    lim = np.where(shrink > 0, 0.99 * s0 / shrink, np.inf)
                t = min(1.0, float(lim.min(initial=np.inf)))
            while t > 1e-12 and value(x + t * step, mu) > f0 - 0.25 * t * dec:
                t *= 0.5
            if t <= 1e-12:
                break
            x = x + t * step
            steps += 1
        if final:
            return x, steps
        mu = max(mu * MU_FACTOR, MU_FINAL)


def _interval(P: HPolyhedron):
    """Endpoints of a bounded 1-D inequality set with nonempty interior."""
    a, b = P.Ain[:, 0], P.bin
    with np.errstate(divide="ignore"):
        hi = np.min(np.where(a > 0, b / a, np.inf), initial=np.inf)
        lo = np.max(np.where(a < 0, b / a, -np.inf), initial=-np.inf)
    return lo, hi


def max_volume_inscribed_ellipsoid(P: HPolyhedron) -> Ellipsoid:
    """Maximum-volume ellipsoid inside a bounded, full-dimensional polyhedron."""
    c0, r0 = _start(P)
    B, d, _ = normalize_rows(P.Ain, P.bin)
    n = P.dim
    if n == 1:
        lo, hi = _interval(P)
        A, c = np.array([[0.5 * (hi - lo)]]), np.array([0.5 * (hi + lo)])
        return Ellipsoid(A, c, {"newton_steps": 0, "stationarity": 0.0,
                                "min_slack": float(np.min(d - B @ c - np.abs(B[:, 0]) * A[0, 0]))})
    E = _sym_basis(n)
    K = E.shape[0]
    iu = np.triu_indices(n)
    sym = np.zeros((n, n), dtype=int)
    sym[iu] = np.arange(K)
    sym = np.maximum(sym, sym.T)
    M = np.einsum("kab,ib->iak", E, B)  # (rows, n, K): A b_i = M_i @ vech(A)
    Mt = M.transpose(0, 2, 1)
    eye = np.eye(n)

    def unpack(theta):
        return theta[:K][sym], theta[K:]

    def value(theta, mu):
        A, c = unpack(theta)
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            return np.inf
        s = d - B @ c - np.sqrt(((B @ A) ** 2).sum(axis=1))
        if np.any(s <= 0):
            return np.inf
        return -2 * np.log(np.diag(L)).sum() - mu * np.log(s).sum()

    def derivatives(theta, mu):
        A, c = unpack(theta)
        Ainv = np.linalg.inv(A)
        W = B @ A  # rows are w_i = A b_i (A symmetric)
        wn = np.sqrt((W ** 2).sum(axis=1))
        What = W / wn[:, None]
        s = d - B @ c - wn
        AE = Ainv @ E  # (K, n, n)
        g_a = -np.trace(AE, axis1=1, axis2=2)
        H_aa = np.tensordot(AE, AE.transpose(0, 2, 1), axes=([1, 2], [1, 2]))
        ds = np.hstack([-(Mt @ What[:, :, None])[:, :, 0], -B]) / s[:, None]
        g = np.concatenate([g_a, np.zeros(n)]) - mu * ds.sum(axis=0)
        H = mu * ds.T @ ds
        Hw = (eye - What[:, :, None] * What[:, None, :]) / wn[:, None, None]
        curv = Mt @ Hw @ M
        H[:K, :K] += H_aa + mu * np.tensordot(1.0 / s, curv, axes=1)
        return g, H

    theta = np.concatenate([0.5 * r0 * eye[iu], c0])
    theta, newton_steps = _barrier_minimize(theta, value, derivatives)
    A, c = unpack(theta)
    s = d - B @ c - np.linalg.norm(B @ A, axis=1)
    info = {"newton_steps": newton_steps, "barrier": MU_FINAL, "min_slack": float(s.min()),
            "stationarity": mvie_stationarity(A, c, B, d)}
    logger.debug("ellipsoid fit: %d Newton steps, det=%.6g", newton_steps, np.linalg.det(A))
    return Ellipsoid(A, c, info)


def mvie_stationarity(A, c, B, d, active_tol=1e-6):
    """First-order residual of the log-det problem with multipliers fitted by NNLS.

    Only rows whose slack is below ``active_tol`` get a multiplier. Returns
    the residual norm of ``A^{-1} = sum lam_i sym(w_i b_i')``, ``sum lam_i b_i = 0``
    where ``w_i`` is the unit vector along ``A b_i``.
    """
    W = B @ A
    wn = np.linalg.norm(W, axis=1)
    act = np.flatnonzero(d - B @ c - wn <= active_tol * max(1.0, float(np.abs(d).max())))
    if act.size == 0:
        return float("inf")
    n = A.shape[0]
    cols = []
    for i in act:
        G = np.outer(W[i] / wn[i], B[i])
        cols.append(np.concatenate([(0.5 * (G + G.T)).ravel(), B[i]]))
    target = np.concatenate([np.linalg.inv(A).ravel(), np.zeros(n)])
    _, res = nnls(np.column_stack(cols), target)
    return float(res)


def inscribed_ellipsoid_affine(P: HPolyhedron):
    """Inscribed ellipsoid of a set with equality rows, in nullspace coordinates.

    Returns ``(E, amap)``: ``E`` lives in the coordinates of the reduced set and
    ``amap`` sends those coordinates back into ``P``'s space.
    """
    Q, amap = eliminate_equalities(P)
    return max_volume_inscribed_ellipsoid(Q), amap


def inscribed_box(P: HPolyhedron) -> Box:
    """Maximum-volume axis-aligned box inside a bounded polyhedron."""
    c0, r0 = _start(P)
    B, d, _ = normalize_rows(P.Ain, P.bin)
    n = P.dim
    Bp, Bm = np.clip(B, 0, None), np.clip(-B, 0, None)
    G = np.hstack([-Bm, Bp])  # rows act on (lower, upper)
    D = np.hstack([-np.eye(n), np.eye(n)])  # widths

    def value(x, mu):
        w = D @ x
        s = d - G @ x
        if np.any(w <= 0) or np.any(s <= 0):
            return np.inf
        return -np.sum(np.log(w)) - mu * np.sum(np.log(s))

    def derivatives(x, mu):
        w = D @ x
        s = d - G @ x
        g = -D.T @ (1 / w) + mu * G.T @ (1 / s)
        H = D.T @ (D / w[:, None] ** 2) + mu * G.T @ (G / s[:, None] ** 2)
        return g, H

    if n == 1:
        return Box(*_interval(P))
    h = 0.5 * r0 / np.sqrt(n)
    x, _ = _barrier_minimize(np.concatenate([c0 - h, c0 + h]), value, derivatives)
    return Box(x[:n], x[n:])


def inscribed_ball(P: HPolyhedron) -> Ellipsoid:
    """Chebyshev ball as an :class:`Ellipsoid` (``A = r I``)."""
    c0, r0 = _start(P)
    return Ellipsoid(r0 * np.eye(P.dim), c0)


def linear_map_ellipsoid(E: Ellipsoid, M) -> Ellipsoid:
    """Image ``{M x : x in E}`` in canonical symmetric form.

    Raises :class:`DegenerateImage` if ``M A`` lacks full row rank.
    """
    M = np.atleast_2d(np.asarray(M, float))
    S = M @ E.A
    G = S @ S.T
    w, V = np.linalg.eigh(G)
    if w.min() <= 1e-12 * max(1.0, w.max()):
        raise DegenerateImage("linear map of the ellipsoid is rank deficient")
    A = (V * np.sqrt(w)) @ V.T
    return Ellipsoid(A, M @ E.c)

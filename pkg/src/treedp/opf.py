"""Optimal power flow on a transmission bus with radial distribution feeders.

The grid is split into an upper-level partition (the tree root) and
lower-level partitions (leaves), each attached to the root through exactly
one branch. A leaf owns that branch, so the variables it shares with the
root are the branch flow at the upper end and, for AC, the upper bus
voltage magnitude. The upper bus angle is not shared: flows depend on angle
differences only, so every leaf measures its angles relative to it.

All quantities are per unit. Branches carry a series admittance
``y = g + jb`` and no shunt element.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

import numpy as np
from scipy.optimize import minimize

from .dp import (SweepConfig, backward_sweep, evaluate_value_function, forward_sweep,
                 solve_monolithic)
from .errors import InputError, MultipleInterconnections, NoFeasibleSamples, NotATree
from .model import (NlpReference, QuadraticObjective, Subsystem, TreeProblem, TreeTopology,
                    verify_tree)
from .polyhedra import HPolyhedron, fourier_motzkin_project
from .sampling import (NlpConstraintSpec, SampleHull, SampleSet, decision_variable_sampling,
                       default_costs, gridding_refinement, hull_of_samples)
from .solvers import lp_minimize

CERT_TOL = 1e-8


# --------------------------------------------------------------------------
# grid data
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class Bus:
    id: int
    demand_p: float = 0.0
    demand_q: float = 0.0
    v_min: float = 0.9
    v_max: float = 1.1


@dataclass(frozen=True)
class Branch:
    f: int
    t: int
    g: float
    b: float
    s_max: float

    @property
    def y(self) -> complex:
        return complex(self.g, self.b)


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    s_max: float
    alpha: float | None = None
    cost_c: float = 0.0
    cost_d: float = 0.0


@dataclass(frozen=True, eq=False)
class GridModel:
    buses: tuple
    branches: tuple
    generators: tuple
    reference_bus: int
    name: str = "grid"

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise InputError("duplicate bus ids")
        known = set(ids)
        for br in self.branches:
            if br.f not in known or br.t not in known or br.f == br.t:
                raise InputError(f"branch ({br.f},{br.t}) references unknown buses")
        gb = [g.bus for g in self.generators]
        if len(set(gb)) != len(gb) or not set(gb) <= known:
            raise InputError("at most one generator per existing bus")
        if self.reference_bus not in known:
            raise InputError("reference bus is not a bus")

    @property
    def bus_ids(self):
        return [b.id for b in self.buses]

    def bus(self, k) -> Bus:
        return self.buses[self.bus_ids.index(k)]

    def generator(self, k) -> Generator | None:
        for g in self.generators:
            if g.bus == k:
                return g
        return None

    @classmethod
    def from_dict(cls, d: Mapping):
        allowed = {"name", "notes", "reference_bus", "partition", "buses", "branches",
                   "generators"}
        extra = set(d) - allowed
        if extra:
            raise InputError(f"unknown keys in grid file: {sorted(extra)}")
        try:
            buses = tuple(Bus(int(b["id"]), float(b.get("demand_p", 0.0)),
                              float(b.get("demand_q", 0.0)), float(b.get("v_min", 0.9)),
                              float(b.get("v_max", 1.1))) for b in d["buses"])
            branches = tuple(Branch(int(b["from"]), int(b["to"]), float(b["g"]), float(b["b"]),
                                    float(b["s_max"])) for b in d["branches"])
            gens = tuple(Generator(int(g["bus"]), float(g["p_min"]), float(g["p_max"]),
                                   float(g["s_max"]),
                                   None if g.get("alpha") is None else float(g["alpha"]),
                                   float(g.get("cost_c", 0.0)), float(g.get("cost_d", 0.0)))
                         for g in d["generators"])
            return cls(buses, branches, gens, int(d["reference_bus"]), str(d.get("name", "grid")))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed grid file: {exc}") from exc


@dataclass(frozen=True)
class PartitionSpec:
    """Bus sets per subsystem; ``root`` holds the upper-level grid."""

    subsets: Mapping[int, tuple]
    root: int = 1

    def __post_init__(self):
        subsets = {int(k): tuple(int(b) for b in v) for k, v in self.subsets.items()}
        object.__setattr__(self, "subsets", subsets)
        if self.root not in subsets:
            raise InputError(f"root partition {self.root} is missing")

    @property
    def leaves(self):
        return sorted(k for k in self.subsets if k != self.root)

    def owner(self, bus) -> int:
        for k, v in self.subsets.items():
            if bus in v:
                return k
        raise InputError(f"bus {bus} is not in any partition")


def load_grid(path=None) -> tuple[GridModel, PartitionSpec | None]:
    """Read a grid file; without a path the shipped 18-bus feeder is returned."""
    if path is None:
        text = resources.files("treedp").joinpath("data/feeder18.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: {exc}") from exc
    grid = GridModel.from_dict(d)
    part = None
    if "partition" in d:
        part = PartitionSpec({int(k): v for k, v in d["partition"].items()},
                             root=int(min(d["partition"], key=int)))
    return grid, part


def feeder18() -> tuple[GridModel, PartitionSpec]:
    return load_grid()


def build_admittance(grid: GridModel) -> tuple[np.ndarray, np.ndarray]:
    """Real and imaginary parts of the bus admittance matrix (bus order of ``grid.buses``)."""
    pos = {k: i for i, k in enumerate(grid.bus_ids)}
    n = len(pos)
    Y = np.zeros((n, n), complex)
    for br in grid.branches:
        i, j = pos[br.f], pos[br.t]
        Y[i, i] += br.y
        Y[j, j] += br.y
        Y[i, j] -= br.y
        Y[j, i] -= br.y
    return Y.real.copy(), Y.imag.copy()


def ac_power_flow_residual(grid: GridModel, v, theta, p, q) -> np.ndarray:
    """``[p_k - sum_l p_kl ; q_k - sum_l q_kl]`` with the bus-pair flows built from ``G, B``."""
    G, B = build_admittance(grid)
    v, theta = np.asarray(v, float), np.asarray(theta, float)
    dth = theta[:, None] - theta[None, :]
    vv = v[:, None] * v[None, :]
    pkl = vv * (G * np.cos(dth) + B * np.sin(dth))
    qkl = vv * (G * np.sin(dth) - B * np.cos(dth))
    return np.concatenate([np.asarray(p, float) - pkl.sum(axis=1),
                           np.asarray(q, float) - qkl.sum(axis=1)])


def branch_flow(y: complex, vf, thf, vt, tht) -> complex:
    """Complex power sent from the ``f`` end into a series branch."""
    Vf = vf * np.exp(1j * thf)
    Vt = vt * np.exp(1j * tht)
    return complex(Vf * np.conj(y * (Vf - Vt)))


# --------------------------------------------------------------------------
# partitioning and variable layout
# --------------------------------------------------------------------------
@dataclass
class _Coupling:
    leaf: int
    upper: int  # bus in the root partition
    lower: int  # bus in the leaf
    branch: Branch
    sign: float  # +1 when the branch is stored as (upper, lower)


def _couplings(grid: GridModel, part: PartitionSpec) -> tuple[dict, dict]:
    """Coupling branch per leaf and the internal branches of every partition."""
    owners = {}
    for sid, buses in part.subsets.items():
        for b in buses:
            if b in owners:
                raise InputError(f"bus {b} appears in partitions {owners[b]} and {sid}")
            owners[b] = sid
    missing = set(grid.bus_ids) - set(owners)
    if missing:
        raise InputError(f"buses {sorted(missing)} are not covered by the partition")
    internal = {sid: [] for sid in part.subsets}
    coup: dict[int, list] = {sid: [] for sid in part.leaves}
    for br in grid.branches:
        a, b = owners[br.f], owners[br.t]
        if a == b:
            internal[a].append(br)
        elif part.root in (a, b):
            leaf = b if a == part.root else a
            upper, lower = (br.f, br.t) if a == part.root else (br.t, br.f)
            coup[leaf].append(_Coupling(leaf, upper, lower, br, 1.0 if a == part.root else -1.0))
        else:
            raise NotATree(f"branch ({br.f},{br.t}) joins two lower-level partitions {a} and {b}",
                           edge=(a, b))
    for leaf, lst in coup.items():
        if len(lst) != 1:
            raise MultipleInterconnections(
                f"partition {leaf} has {len(lst)} interconnections; exactly one is supported")
    return {k: v[0] for k, v in coup.items()}, internal


@dataclass
class OpfLayout:
    """Global variable names (1-based position = index + 1) and per-subsystem bus data."""

    model: str
    names: list
    couplings: dict
    internal: dict
    part: PartitionSpec

    def index(self, name) -> int:
        return self.names.index(name) + 1

    def coupling_names(self, leaf) -> list[str]:
        c = self.couplings[leaf]
        pq = [f"p[{c.upper},{c.lower}]"]
        if self.model == "AC":
            return [f"v[{c.upper}]"] + pq + [f"q[{c.upper},{c.lower}]"]
        return pq


def _layout(grid: GridModel, part: PartitionSpec, model: str) -> OpfLayout:
    coup, internal = _couplings(grid, part)
    names: list[str] = []
    lay = OpfLayout(model, names, coup, internal, part)
    for leaf in part.leaves:
        for nm in lay.coupling_names(leaf):
            if nm not in names:
                names.append(nm)

    def own(sid):
        for k in part.subsets[sid]:
            if model == "AC" and f"v[{k}]" not in names:
                names.append(f"v[{k}]")
            names.append(f"theta[{k}]")
        if model == "DC":
            names.extend(f"p[{br.f},{br.t}]" for br in internal[sid])
        for k in part.subsets[sid]:
            if grid.generator(k) is not None:
                names.append(f"pg[{k}]")
                if model == "AC":
                    names.append(f"qg[{k}]")

    own(part.root)
    for leaf in part.leaves:
        own(leaf)
    return lay


def _gen_objective(grid, names_local):
    n = len(names_local)
    Q = np.zeros((n, n))
    q = np.zeros(n)
    for j, nm in enumerate(names_local):
        if nm.startswith("pg["):
            g = grid.generator(int(nm[3:-1]))
            Q[j, j] = 2.0 * g.cost_c
            q[j] = g.cost_d
    return QuadraticObjective(Q, q)


def _subsystem_names(lay: OpfLayout, sid) -> list[str]:
    part = lay.part
    buses = set(part.subsets[sid])
    out = []
    for nm in lay.names:
        head, arg = nm.split("[")
        args = [int(a) for a in arg[:-1].split(",")]
        if head in ("v", "theta", "pg", "qg") and args[0] in buses:
            out.append(nm)
        elif head in ("p", "q") and (tuple(args) in {(br.f, br.t) for br in lay.internal[sid]}):
            out.append(nm)
    if sid == part.root:
        for leaf in part.leaves:
            out += [nm for nm in lay.coupling_names(leaf) if nm not in out]
    else:
        out += [nm for nm in lay.coupling_names(sid) if nm not in out]
    return sorted(out, key=lay.names.index)


# --------------------------------------------------------------------------
# DC model
# --------------------------------------------------------------------------
def _dc_polyhedron(grid: GridModel, lay: OpfLayout, sid, names) -> HPolyhedron:
    col = {nm: j for j, nm in enumerate(names)}
    n = len(names)
    part = lay.part
    Aeq, beq, Ain, bin_ = [], [], [], []

    def row():
        return np.zeros(n)

    def B_of(br):  # off-diagonal susceptance entry of the bus admittance matrix
        return -br.b

    branches = [(br, f"p[{br.f},{br.t}]", br.f, br.t) for br in lay.internal[sid]]
    if sid != part.root:
        c = lay.couplings[sid]
        branches.append((c.branch, f"p[{c.upper},{c.lower}]", c.upper, c.lower))
    for br, pname, f, t in branches:
        r = row()
        r[col[pname]] = 1.0
        # angle of a root bus seen from a leaf is the local reference 0
        for bus, sgn in ((f, -1.0), (t, 1.0)):
            nm = f"theta[{bus}]"
            if nm in col:
                r[col[nm]] += sgn * B_of(br)
        Aeq.append(r), beq.append(0.0)
        for sgn in (1.0, -1.0):
            r = row()
            r[col[pname]] = sgn
            Ain.append(r), bin_.append(br.s_max)
    for k in part.subsets[sid]:
        r = row()
        if f"pg[{k}]" in col:
            r[col[f"pg[{k}]"]] = 1.0
        for br, pname, f, t in branches:
            if f == k:
                r[col[pname]] -= 1.0
            elif t == k:
                r[col[pname]] += 1.0
        if sid == part.root:
            for leaf in part.leaves:
                c = lay.couplings[leaf]
                if c.upper == k:
                    r[col[f"p[{c.upper},{c.lower}]"]] -= 1.0
        Aeq.append(r), beq.append(grid.bus(k).demand_p)
        g = grid.generator(k)
        if g is not None:
            for sgn, bound in ((1.0, g.p_max), (-1.0, -g.p_min)):
                r = row()
                r[col[f"pg[{k}]"]] = sgn
                Ain.append(r), bin_.append(bound)
    if sid == part.root and grid.reference_bus in part.subsets[sid]:
        r = row()
        r[col[f"theta[{grid.reference_bus}]"]] = 1.0
        Aeq.append(r), beq.append(0.0)
    return HPolyhedron(np.array(Aeq).reshape(-1, n), beq, np.array(Ain).reshape(-1, n), bin_, n)


def dc_opf_polyhedron(grid: GridModel, part: PartitionSpec, sid) -> tuple[HPolyhedron, list]:
    """Constraint polyhedron of subsystem ``sid`` and the names of its local variables."""
    lay = _layout(grid, part, "DC")
    names = _subsystem_names(lay, sid)
    return _dc_polyhedron(grid, lay, sid, names), names


# --------------------------------------------------------------------------
# AC model
# --------------------------------------------------------------------------
class AcSubgrid:
    """Power-flow equalities and operating limits of one partition over its local vector.

    ``eq`` holds active/reactive balance at the partition's buses, the
    definitions of the coupling flows (leaves) and the reference constraints
    (root). ``ineq`` holds branch apparent-power limits at both ends,
    generator capability circles and power-factor cones; ``bounds`` are the
    simple box constraints on voltages and active generation.
    """

    def __init__(self, grid: GridModel, lay: OpfLayout, sid, names):
        self.grid, self.lay, self.sid, self.names = grid, lay, sid, list(names)
        self.col = {nm: j for j, nm in enumerate(self.names)}
        self.n = len(self.names)
        part = lay.part
        self.is_root = sid == part.root
        self.buses = list(part.subsets[sid])
        self.gens = [g for g in grid.generators if g.bus in self.buses]
        # branches whose flows are functions of voltages: (branch, f, t, limit_applies)
        self.lines = [(br, br.f, br.t) for br in lay.internal[sid]]
        self.coupled = []  # leaves: own coupling; root: all attached leaves
        if self.is_root:
            self.coupled = [lay.couplings[leaf] for leaf in part.leaves]
        else:
            c = lay.couplings[sid]
            self.coupled = [c]
            self.lines.append((c.branch, c.upper, c.lower))
        self.lo = np.full(self.n, -np.inf)
        self.hi = np.full(self.n, np.inf)
        for k in self.buses:
            b = grid.bus(k)
            self.lo[self.col[f"v[{k}]"]] = b.v_min
            self.hi[self.col[f"v[{k}]"]] = b.v_max
        for g in self.gens:
            self.lo[self.col[f"pg[{g.bus}]"]] = g.p_min
            self.hi[self.col[f"pg[{g.bus}]"]] = g.p_max
            self.lo[self.col[f"qg[{g.bus}]"]] = -g.s_max
            self.hi[self.col[f"qg[{g.bus}]"]] = g.s_max
        self._prepare()

    def _prepare(self):
        """Index arrays for vectorized evaluation; column ``n`` stands for a fixed zero angle."""
        Z = self.n
        rows = {k: i for i, k in enumerate(self.buses)}
        nb = len(self.buses)
        vcol = lambda k: self.col[f"v[{k}]"]  # noqa: E731
        thcol = lambda k: self.col.get(f"theta[{k}]", Z)  # noqa: E731
        L = self.lines
        self._y = np.array([br.y for br, _, _ in L], complex)
        self._cols = np.array([[vcol(f), thcol(f), vcol(t), thcol(t)] for _, f, t in L],
                              dtype=int).reshape(-1, 4)
        self._rf = np.array([rows.get(f, nb) for _, f, _ in L], dtype=int)
        self._rt = np.array([rows.get(t, nb) for _, _, t in L], dtype=int)
        self._smax2 = np.array([br.s_max ** 2 for br, _, _ in L])
        self._nb = nb
        # generation and demand
        self._demand = np.array([self.grid.bus(k).demand_p + 1j * self.grid.bus(k).demand_q
                                 for k in self.buses], complex)
        self._g_row = np.array([rows[g.bus] for g in self.gens], dtype=int)
        self._g_p = np.array([self.col[f"pg[{g.bus}]"] for g in self.gens], dtype=int)
        self._g_q = np.array([self.col[f"qg[{g.bus}]"] for g in self.gens], dtype=int)
        self._g_s2 = np.array([g.s_max ** 2 for g in self.gens])
        pf = [(k, g.alpha) for k, g in enumerate(self.gens) if g.alpha is not None]
        self._pf_idx = np.array([k for k, _ in pf], dtype=int)
        self._pf_alpha = np.array([a for _, a in pf], float)
        # coupling flows: variables (p, q) and, for a leaf, the line that defines them
        self._c_p = np.array([self.col[f"p[{c.upper},{c.lower}]"] for c in self.coupled], int)
        self._c_q = np.array([self.col[f"q[{c.upper},{c.lower}]"] for c in self.coupled], int)
        self._c_row = np.array([rows.get(c.upper, nb) for c in self.coupled], int)
        self._ref = None
        if self.is_root and self.grid.reference_bus in self.buses:
            k = self.grid.reference_bus
            self._ref = (self.col[f"theta[{k}]"], self.col[f"v[{k}]"])

    def _flows(self, x):
        xe = np.append(np.asarray(x, float), 0.0)
        c = self._cols
        vf, thf, vt, tht = xe[c[:, 0]], xe[c[:, 1]], xe[c[:, 2]], xe[c[:, 3]]
        cy = np.conj(self._y)
        E = vf * vt * np.exp(1j * (thf - tht))
        Ec = np.conj(E)
        Sf = cy * (vf * vf - E)
        St = cy * (vt * vt - Ec)
        dSf = np.stack([cy * (2 * vf - E / vf), -cy * 1j * E, -cy * E / vt, cy * 1j * E], 1)
        dSt = np.stack([-cy * Ec / vf, cy * 1j * Ec, cy * (2 * vt - Ec / vt), -cy * 1j * Ec], 1)
        return Sf, St, dSf, dSt

    def eq_and_jac(self, x):
        x = np.asarray(x, float)
        n, nb = self.n, self._nb
        Sf, St, dSf, dSt = self._flows(x)
        S = np.zeros(nb + 1, complex)
        dS = np.zeros((nb + 1, n + 1), complex)
        np.add.at(S, self._rf, Sf)
        np.add.at(S, self._rt, St)
        np.add.at(dS, (self._rf[:, None], self._cols), dSf)
        np.add.at(dS, (self._rt[:, None], self._cols), dSt)
        inj = -self._demand.astype(complex)
        dinj = np.zeros((nb, n), complex)
        inj[self._g_row] += x[self._g_p] + 1j * x[self._g_q]
        dinj[self._g_row, self._g_p] = 1.0
        dinj[self._g_row, self._g_q] = 1j
        extra_r = np.zeros(0)
        extra_J = np.zeros((0, n))
        if self.is_root:
            np.add.at(S, self._c_row, x[self._c_p] + 1j * x[self._c_q])
            np.add.at(dS, (self._c_row, self._c_p), 1.0)
            np.add.at(dS, (self._c_row, self._c_q), 1j)
        else:
            # the leaf's coupling line is the last line; its flow at the upper end defines (p, q)
            j = len(self.lines) - 1
            p, q = self._c_p[0], self._c_q[0]
            extra_r = np.array([x[p] - Sf[j].real, x[q] - Sf[j].imag])
            extra_J = np.zeros((2, n + 1))
            extra_J[0, p] = extra_J[1, q] = 1.0
            np.add.at(extra_J[0], self._cols[j], -dSf[j].real)
            np.add.at(extra_J[1], self._cols[j], -dSf[j].imag)
            extra_J = extra_J[:, :n]
        res = inj - S[:nb]
        J = dinj - dS[:nb, :n]
        r_all = [res.real, res.imag, extra_r]
        J_all = [J.real, J.imag, extra_J]
        if self._ref is not None:
            cth, cv = self._ref
            R = np.zeros((2, n))
            R[0, cth] = R[1, cv] = 1.0
            r_all.append(np.array([x[cth], x[cv] - 1.0]))
            J_all.append(R)
        return np.concatenate(r_all), np.vstack(J_all)

    def ineq_and_jac(self, x):
        """Rows ``<= 0``: line limits at both ends, generator circles and power-factor cones."""
        x = np.asarray(x, float)
        n = self.n
        Sf, St, dSf, dSt = self._flows(x)
        L = len(self.lines)
        r_line = np.concatenate([np.abs(Sf) ** 2 - self._smax2, np.abs(St) ** 2 - self._smax2])
        J_line = np.zeros((2 * L, n + 1))
        ar = np.arange(L)[:, None]
        np.add.at(J_line, (ar, self._cols), 2.0 * np.real(np.conj(Sf)[:, None] * dSf))
        np.add.at(J_line, (L + ar, self._cols), 2.0 * np.real(np.conj(St)[:, None] * dSt))
        p, q = x[self._g_p], x[self._g_q]
        G = len(self.gens)
        r_cap = p * p + q * q - self._g_s2
        J_cap = np.zeros((G, n))
        J_cap[np.arange(G), self._g_p] = 2 * p
        J_cap[np.arange(G), self._g_q] = 2 * q
        k = self._pf_idx
        a = self._pf_alpha
        # -p <= alpha q <= p
        r_pf = np.concatenate([a * q[k] - p[k], -a * q[k] - p[k]])
        J_pf = np.zeros((2 * k.size, n))
        m = np.arange(k.size)
        J_pf[m, self._g_p[k]] = -1.0
        J_pf[m, self._g_q[k]] = a
        J_pf[k.size + m, self._g_p[k]] = -1.0
        J_pf[k.size + m, self._g_q[k]] = -a
        return (np.concatenate([r_line, r_cap, r_pf]),
                np.vstack([J_line[:, :n], J_cap, J_pf]))

    def violation(self, x) -> tuple[float, float]:
        x = np.asarray(x, float).ravel()
        e, _ = self.eq_and_jac(x)
        i, _ = self.ineq_and_jac(x)
        bnd = np.concatenate([self.lo - x, x - self.hi])
        bnd = bnd[np.isfinite(bnd)]
        return (float(np.max(np.abs(e), initial=0.0)),
                max(0.0, float(np.max(i, initial=0.0)), float(np.max(bnd, initial=0.0))))

    def generation_cost(self, x) -> float:
        x = np.asarray(x, float)
        return float(sum(g.cost_c * x[self.col[f"pg[{g.bus}]"]] ** 2
                         + g.cost_d * x[self.col[f"pg[{g.bus}]"]] for g in self.gens))

    def flat_start(self):
        x = np.zeros(self.n)
        for nm, j in self.col.items():
            if nm.startswith("v["):
                x[j] = 1.0
        return x

    def leaf_spec(self, v_fixed: float | None) -> NlpConstraintSpec:
        """NLP view for sampling: ``z`` is the coupling block (without ``v`` when it is fixed)."""
        if self.is_root:
            raise InputError("the NLP sampling view is defined for leaves only")
        cn = self.lay.coupling_names(self.sid)
        zc = [self.col[nm] for nm in (cn[1:] if v_fixed is not None else cn)]
        vcol = self.col[cn[0]]
        ycols = [j for j in range(self.n) if j not in zc and j != vcol]
        sampled = tuple(k for k, j in enumerate(ycols)
                        if self.names[j].startswith(("pg[", "qg[")))
        n_z, n_y = len(zc), len(ycols)

        def full(z, y):
            x = np.empty(self.n)
            x[zc] = z
            x[ycols] = y
            if v_fixed is not None:
                x[vcol] = v_fixed
            return x

        order = zc + ycols

        def g(z, y):
            return self.eq_and_jac(full(z, y))[0]

        def jac_g(z, y):
            return self.eq_and_jac(full(z, y))[1][:, order]

        def h(z, y):
            r = self.ineq_and_jac(full(z, y))[0]
            if v_fixed is None:
                b = self.grid.bus(self.lay.couplings[self.sid].upper)
                r = np.concatenate([r, [b.v_min - z[0], z[0] - b.v_max]])
            return r

        def jac_h(z, y):
            J = self.ineq_and_jac(full(z, y))[1][:, order]
            if v_fixed is None:
                e = np.zeros((2, len(order)))
                e[0, 0], e[1, 0] = -1.0, 1.0
                J = np.vstack([J, e])
            return J

        flat = self.flat_start()
        if v_fixed is not None:
            flat[vcol] = v_fixed

        def start(ys):
            w = np.concatenate([flat[zc], flat[ycols]])
            return w

        spec = NlpConstraintSpec(n_z, n_y, g, h, self.lo[ycols], self.hi[ycols], sampled,
                                 jac_g, jac_h, start, convex=False)
        spec_meta = {"z_cols": zc, "y_cols": ycols, "v_col": vcol, "v_fixed": v_fixed}
        object.__setattr__(spec, "_meta", spec_meta)
        object.__setattr__(spec, "full", full)
        return spec


# --------------------------------------------------------------------------
# tree construction
# --------------------------------------------------------------------------
@dataclass
class OpfTree:
    problem: TreeProblem
    topology: TreeTopology
    layout: OpfLayout
    local_names: dict
    coupling: dict  # leaf -> {"names", "indices"}
    ac_blocks: dict = field(default_factory=dict)


def opf_to_tree(grid: GridModel, part: PartitionSpec, model: str = "DC") -> OpfTree:
    model = model.upper()
    if model not in ("AC", "DC"):
        raise InputError(f"unknown OPF model {model!r}")
    lay = _layout(grid, part, model)
    subs, local, blocks = [], {}, {}
    for sid in [part.root] + part.leaves:
        names = _subsystem_names(lay, sid)
        local[sid] = names
        idx = [lay.index(nm) for nm in names]
        obj = _gen_objective(grid, names)
        if model == "DC":
            cons = _dc_polyhedron(grid, lay, sid, names)
        else:
            blocks[sid] = AcSubgrid(grid, lay, sid, names)
            cons = NlpReference(f"ac-{sid}", blocks[sid])
        subs.append(Subsystem(sid, idx, obj, cons))
    problem = TreeProblem(len(lay.names), tuple(subs))
    topo = verify_tree(problem, root=part.root)
    coupling = {leaf: {"names": lay.coupling_names(leaf),
                       "indices": [lay.index(nm) for nm in lay.coupling_names(leaf)]}
                for leaf in part.leaves}
    return OpfTree(problem, topo, lay, local, coupling, blocks)


# --------------------------------------------------------------------------
# DC projection and value table
# --------------------------------------------------------------------------
@dataclass
class DcProjection:
    leaf: int
    interval: tuple  # FM result
    lp_interval: tuple  # boundary LPs
    polyhedron: HPolyhedron

    @property
    def mismatch(self):
        return max(abs(self.interval[0] - self.lp_interval[0]),
                   abs(self.interval[1] - self.lp_interval[1]))


def dc_projection(tree: OpfTree, leaf: int) -> DcProjection:
    """Coupling interval of a leaf by elimination, cross-checked by two boundary LPs."""
    sub = tree.problem[leaf]
    wpos = tree.topology.coupling[leaf].positions_in(sub.indices)
    P = fourier_motzkin_project(sub.constraints, wpos)
    lo, hi = P.bounding_box()
    ends = []
    for sgn in (1.0, -1.0):
        c = np.zeros(sub.dim)
        c[wpos[0]] = sgn
        sol = lp_minimize(c, sub.constraints)
        ends.append(sgn * sol.objective)
    return DcProjection(leaf, (float(lo[0]), float(hi[0])), (ends[0], ends[1]), P)


def midpoint_convexity_gap(values) -> float:
    """Largest ``V_i - (V_{i-1} + V_{i+1}) / 2`` on an equispaced grid (<= 0 for convex data)."""
    v = np.asarray(values, float)
    if v.size < 3:
        return -np.inf
    return float(np.max(v[1:-1] - 0.5 * (v[:-2] + v[2:])))


# --------------------------------------------------------------------------
# AC sampling and value table
# --------------------------------------------------------------------------
def _solve_fixed_z(spec: NlpConstraintSpec, z, cost, w0):
    """``min cost(y)`` over the leaf NLP with the coupling block fixed, then a Newton polish."""
    z = np.asarray(z, float)
    n_z = spec.n_z
    y0 = np.asarray(w0, float)[n_z:]
    lo, hi = spec.y_lower, spec.y_upper
    bounds = [(None if not np.isfinite(a) else a, None if not np.isfinite(b) else b)
              for a, b in zip(lo, hi)]

    def jg(y):
        return spec.jac_g(z, y)[:, n_z:]

    def jh(y):
        return -spec.jac_h(z, y)[:, n_z:]

    res = minimize(lambda y: cost(z, y)[0], np.clip(y0, np.where(np.isfinite(lo), lo, -np.inf),
                                                     np.where(np.isfinite(hi), hi, np.inf)),
                   jac=lambda y: cost(z, y)[1], method="SLSQP", bounds=bounds,
                   constraints=[{"type": "eq", "fun": lambda y: spec.g(z, y), "jac": jg},
                                {"type": "ineq", "fun": lambda y: -spec.h(z, y), "jac": jh}],
                   options={"maxiter": 300, "ftol": 1e-12})
    y = res.x
    # minimum-norm Gauss-Newton polish of g = 0 with z held fixed
    for _ in range(20):
        r = spec.g(z, y)
        if np.max(np.abs(r)) <= 1e-12:
            break
        y = y - np.linalg.lstsq(jg(y), r, rcond=None)[0]
    return np.concatenate([z, y])


def _leaf_cost(block: AcSubgrid, spec: NlpConstraintSpec):
    def cost(z, y):
        x = spec.full(z, y)
        val = block.generation_cost(x)
        grad_x = np.zeros(block.n)
        for g in block.gens:
            j = block.col[f"pg[{g.bus}]"]
            grad_x[j] = 2 * g.cost_c * x[j] + g.cost_d
        return val, grad_x[spec._meta["y_cols"]]
    return cost


@dataclass
class AcRegion:
    v_fixed: float
    samples: SampleSet  # decision samples
    boundary: SampleSet  # local NLP boundary points
    grid_p: SampleSet
    grid_q: SampleSet
    hull: SampleHull
    spec: NlpConstraintSpec = field(repr=False, default=None)

    @property
    def all_samples(self) -> SampleSet:
        return self.samples.merged(self.boundary).merged(self.grid_p).merged(self.grid_q)


def certified_fraction(samples: SampleSet, spec, tol: float = CERT_TOL) -> float:
    """Share of samples whose witness re-evaluates within ``tol``."""
    if not len(samples):
        return 0.0
    ok = sum(max(spec.violation(w)) <= tol for w in samples.witnesses)
    return ok / len(samples)


def slice_extremes(grid: SampleSet) -> list[dict]:
    """Per gridded slice: the smallest and largest value of the other coupling component."""
    groups: dict[tuple, list] = {}
    for z, prov in zip(grid.points, grid.provenance):
        groups.setdefault((prov["component"], prov["value"]), []).append(z)
    out = []
    for (m, v), zs in sorted(groups.items()):
        other = np.delete(np.asarray(zs), m, axis=1)[:, 0]
        out.append({"component": m, "value": v, "count": len(zs),
                    "min": float(other.min()), "max": float(other.max())})
    return out


def _nlp_boundary(spec, base: SampleSet, costs) -> SampleSet:
    """Local boundary points ``min c'z`` started from the best base sample for each ``c``."""
    out = SampleSet(spec.n_z, convex=False)
    Z = base.Z
    for c in costs:
        c = np.asarray(c, float)
        best = int(np.argmin(Z @ c))
        w = _nlp_min_linear(spec, base.witnesses[best], c)
        res = None if w is None else spec.violation(w)
        if res is None or max(res) > CERT_TOL:
            out.rejected += 1
            continue
        out.add(w[:spec.n_z], w, {"kind": "boundary", "c": c.tolist()}, res)
    return out


def _nlp_min_linear(spec: NlpConstraintSpec, w0, c):
    n = spec.n_z + spec.n_y
    cc = np.zeros(n)
    cc[:spec.n_z] = c
    lo = np.concatenate([np.full(spec.n_z, -np.inf), spec.y_lower])
    hi = np.concatenate([np.full(spec.n_z, np.inf), spec.y_upper])
    bounds = [(None if not np.isfinite(a) else a, None if not np.isfinite(b) else b)
              for a, b in zip(lo, hi)]
    h_only = lambda w: -np.asarray(spec.h(*spec.split(w)), float)  # noqa: E731
    jh_only = lambda w: -np.asarray(spec.jac_h(*spec.split(w)), float)  # noqa: E731
    res = minimize(lambda w: cc @ w, w0, jac=lambda w: cc, method="SLSQP", bounds=bounds,
                   constraints=[{"type": "eq", "fun": spec.eq, "jac": spec.eq_jacobian},
                                {"type": "ineq", "fun": h_only, "jac": jh_only}],
                   options={"maxiter": 300, "ftol": 1e-12})
    ys = res.x[spec.n_z + np.asarray(spec.sampled, dtype=int)]
    return spec.complete(ys, res.x)


def ac_feasible_region(grid: GridModel, part: PartitionSpec, v_fixed: float = 1.0,
                       leaf: int | None = None, n_samples: int = 1000, n_grid: int = 19,
                       seed: int = 42) -> AcRegion:
    """Certified samples of a leaf's ``(p, q)`` coupling region at a fixed upper-bus voltage.

    Decision-variable samples of the generator setpoints are completed by a
    power-flow Newton solve. Local boundary problems along ``{-1,0,1}^2``
    and two gridding passes (``p`` fixed, extremize ``q``; then the reverse)
    refine the boundary. Every retained point carries a certified witness.
    """
    tree = opf_to_tree(grid, part, "AC")
    leaf = part.leaves[0] if leaf is None else leaf
    block = tree.ac_blocks[leaf]
    c = tree.layout.couplings[leaf]
    b = grid.bus(c.upper)
    if not b.v_min - 1e-12 <= v_fixed <= b.v_max + 1e-12:
        raise NoFeasibleSamples(f"v = {v_fixed} lies outside the voltage bounds "
                                f"[{b.v_min}, {b.v_max}] of bus {c.upper}")
    spec = block.leaf_spec(v_fixed)
    base = decision_variable_sampling(spec, n_samples, seed)
    bnd = _nlp_boundary(spec, base, default_costs(2))
    pool = base.merged(bnd)
    gp = gridding_refinement(spec, pool, 0, n_grid)
    gq = gridding_refinement(spec, pool, 1, n_grid)
    allpts = pool.merged(gp).merged(gq)
    hull = hull_of_samples(allpts, certified_inner=False)
    return AcRegion(v_fixed, base, bnd, gp, gq, hull, spec)


def ac_value_table(region: AcRegion, grid: GridModel, part: PartitionSpec, n_per_axis: int = 12,
                   leaf: int | None = None):
    """``V_2`` on a regular grid over the hull's bounding box.

    Points outside the sample hull are reported as ``None``; inside, the full
    leaf problem is solved with ``(p, q)`` fixed and the value is kept only
    when its witness is certified.
    """
    tree = opf_to_tree(grid, part, "AC")
    leaf = part.leaves[0] if leaf is None else leaf
    block = tree.ac_blocks[leaf]
    spec = region.spec
    cost = _leaf_cost(block, spec)
    allpts = region.all_samples
    Z = allpts.Z
    lo, hi = Z.min(axis=0), Z.max(axis=0)
    P = region.hull.polyhedron
    axes = [np.linspace(lo[k], hi[k], n_per_axis + 2)[1:-1] for k in range(2)]
    table = []
    for p in axes[0]:
        for q in axes[1]:
            z = np.array([p, q])
            if not P.contains(z, 0.0):
                table.append((z, None, float("nan")))
                continue
            near = int(np.argmin(np.linalg.norm(Z - z, axis=1)))
            w = _solve_fixed_z(spec, z, cost, allpts.witnesses[near])
            res = spec.violation(w)
            if max(res) <= CERT_TOL:
                table.append((z, cost(z, w[2:])[0], max(res)))
            else:
                table.append((z, None, max(res)))
    return table


# --------------------------------------------------------------------------
# demo driver
# --------------------------------------------------------------------------
@dataclass
class OpfDemoReport:
    model: str
    data: dict
    runtimes: dict
    extra: dict = field(default_factory=dict, repr=False)


def run_opf_demo(model: str = "DC", grid: GridModel | None = None,
                 part: PartitionSpec | None = None, n_grid: int = 50, seed: int = 42,
                 n_samples: int = 1000, v_fixed: float = 1.0) -> OpfDemoReport:
    """DC: exact interval, value table and an FP-ADP dispatch. AC: sampled region and values."""
    if grid is None:
        grid, default_part = feeder18()
        part = part or default_part
    if part is None:
        raise InputError("a partition is required")
    model = model.upper()
    t0 = time.perf_counter()
    if model == "DC":
        tree = opf_to_tree(grid, part, "DC")
        leaf = part.leaves[0]
        proj = dc_projection(tree, leaf)
        lo, hi = proj.interval
        zs = np.linspace(lo, hi, n_grid)
        table = evaluate_value_function(tree.problem, tree.topology, leaf, zs[:, None])
        vals = [v for _, v, _ in table]
        t1 = time.perf_counter()
        cfg = SweepConfig(set_variant="exact", value_fn="pwl", seed=seed)
        art = backward_sweep(tree.problem, tree.topology, cfg)
        res = forward_sweep(tree.problem, tree.topology, art)
        _, cost_star = solve_monolithic(tree.problem)
        t2 = time.perf_counter()
        data = {
            "model": "DC",
            "leaf": leaf,
            "coupling": tree.coupling[leaf]["names"],
            "interval": list(proj.interval),
            "interval_lp": list(proj.lp_interval),
            "interval_mismatch": proj.mismatch,
            "value_table": [[float(z[0]), None if v is None else float(v)] for z, v, _ in table],
            "midpoint_convexity_gap": midpoint_convexity_gap(
                [np.inf if v is None else v for v in vals]),
            "fpadp": {"feasible": bool(res.feasible), "cost": res.cost,
                      "monolithic_cost": cost_star,
                      "max_violation": res.report.max_violation},
        }
        return OpfDemoReport("DC", data, {"projection_and_table": t1 - t0, "sweeps": t2 - t1})
    if model == "AC":
        region = ac_feasible_region(grid, part, v_fixed, n_samples=n_samples, seed=seed)
        t1 = time.perf_counter()
        table = ac_value_table(region, grid, part)
        t2 = time.perf_counter()
        allpts = region.all_samples
        data = {
            "model": "AC",
            "v_fixed": v_fixed,
            "n_samples": len(allpts),
            "rejected_decision_samples": region.samples.rejected,
            "max_residual": allpts.audit(region.spec),
            "certified_fraction": certified_fraction(allpts, region.spec),
            "p_slices": slice_extremes(region.grid_p),
            "hull": region.hull.to_dict(),
            "value_table": [[float(z[0]), float(z[1]), None if v is None else float(v)]
                            for z, v, _ in table],
        }
        return OpfDemoReport("AC", data, {"sampling": t1 - t0, "value_table": t2 - t1},
                             {"region": region})
    raise InputError(f"unknown OPF model {model!r}")

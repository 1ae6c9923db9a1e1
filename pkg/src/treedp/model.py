"""Tree-structured problems ``min sum_i f_i(x_{I_i})``.

Global variable indices are 1-based throughout the public API (and in the
JSON exchange format); each subsystem sees its variables in ascending global
order, which fixes the local coordinate layout used by every other module.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import DimensionMismatch, InputError, NotATree, SharedVariableError, Unsupported
from .polyhedra import HPolyhedron
from .solvers import QuadraticProgram


class VariableIndexSet(tuple):
    """Strictly ascending tuple of 1-based global indices."""

    def __new__(cls, indices: Iterable[int] = ()):
        idx = sorted(int(i) for i in indices)
        if any(a == b for a, b in zip(idx, idx[1:])):
            raise InputError(f"duplicate index in {idx}")
        if idx and idx[0] < 1:
            raise InputError("variable indices are 1-based")
        return super().__new__(cls, idx)

    def __and__(self, other):
        return VariableIndexSet(set(self) & set(other))

    def __or__(self, other):
        return VariableIndexSet(set(self) | set(other))

    def __sub__(self, other):
        return VariableIndexSet(set(self) - set(other))

    def positions_in(self, other: "VariableIndexSet") -> list[int]:
        """0-based positions of these indices inside ``other``."""
        where = {g: k for k, g in enumerate(other)}
        try:
            return [where[g] for g in self]
        except KeyError as exc:
            raise DimensionMismatch(f"index {exc.args[0]} not in {tuple(other)}") from None

    def zero_based(self) -> np.ndarray:
        return np.asarray(self, dtype=int) - 1


@dataclass(frozen=True, eq=False)
class QuadraticObjective:
    """``0.5 x'Qx + q'x + const`` in the subsystem's local coordinates."""

    Q: np.ndarray
    q: np.ndarray
    const: float = 0.0

    def __post_init__(self):
        q = np.asarray(self.q, float).ravel()
        Q = np.asarray(self.Q, float).reshape(q.size, q.size)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "const", float(self.const))

    @classmethod
    def zero(cls, n):
        return cls(np.zeros((n, n)), np.zeros(n))

    def __call__(self, x):
        x = np.asarray(x, float)
        return float(0.5 * x @ self.Q @ x + self.q @ x + self.const)

    def to_dict(self):
        return {"Q": self.Q.tolist(), "q": self.q.tolist(), "const": self.const}


@dataclass(frozen=True)
class NlpReference:
    """Placeholder for a nonpolyhedral constraint set, resolved by name."""

    name: str
    spec: Any = None


@dataclass(frozen=True, eq=False)
class Subsystem:
    id: int
    indices: VariableIndexSet
    objective: Any
    constraints: Any

    def __post_init__(self):
        object.__setattr__(self, "indices", VariableIndexSet(self.indices))
        n = len(self.indices)
        if isinstance(self.constraints, HPolyhedron) and self.constraints.dim != n:
            raise DimensionMismatch(
                f"subsystem {self.id}: constraint dim {self.constraints.dim} != {n} indices")
        if isinstance(self.objective, QuadraticObjective) and self.objective.q.size != n:
            raise DimensionMismatch(f"subsystem {self.id}: objective has wrong dimension")

    @property
    def dim(self):
        return len(self.indices)

    @property
    def is_polyhedral(self):
        return isinstance(self.constraints, HPolyhedron) and isinstance(
            self.objective, QuadraticObjective)


@dataclass(frozen=True, eq=False)
class TreeProblem:
    n_x: int
    subsystems: tuple

    def __post_init__(self):
        subs = tuple(self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        ids = [s.id for s in subs]
        if len(set(ids)) != len(ids):
            raise InputError("duplicate subsystem ids")
        for s in subs:
            if s.indices and s.indices[-1] > self.n_x:
                raise InputError(f"subsystem {s.id} references index beyond n_x={self.n_x}")

    def __getitem__(self, sid) -> Subsystem:
        for s in self.subsystems:
            if s.id == sid:
                return s
        raise KeyError(sid)

    @property
    def ids(self):
        return [s.id for s in self.subsystems]

    def referenced(self) -> VariableIndexSet:
        out = set()
        for s in self.subsystems:
            out |= set(s.indices)
        return VariableIndexSet(out)

    def objective_value(self, x) -> float:
        x = np.asarray(x, float)
        return float(sum(s.objective(x[s.indices.zero_based()]) for s in self.subsystems))

    # --- JSON exchange -------------------------------------------------
    def to_dict(self):
        subs = []
        for s in self.subsystems:
            d = {"id": s.id, "indices": list(s.indices), "objective": s.objective.to_dict()}
            if isinstance(s.constraints, HPolyhedron):
                c = s.constraints.to_dict()
                d["constraints"] = {k: c[k] for k in ("Aeq", "beq", "Ain", "bin")}
            else:
                d["nlp_ref"] = s.constraints.name
            subs.append(d)
        return {"n_x": self.n_x, "subsystems": subs}

    @classmethod
    def from_dict(cls, data: Mapping, nlp_registry: Mapping | None = None):
        allowed = {"n_x", "subsystems"}
        extra = set(data) - allowed
        if extra:
            raise InputError(f"unknown keys in problem file: {sorted(extra)}")
        try:
            n_x = int(data["n_x"])
            subs = []
            for d in data["subsystems"]:
                idx = VariableIndexSet(d["indices"])
                n = len(idx)
                obj = d.get("objective") or {}
                objective = QuadraticObjective(
                    np.asarray(obj.get("Q", np.zeros((n, n))), float).reshape(n, n),
                    np.asarray(obj.get("q", np.zeros(n)), float).reshape(n),
                    float(obj.get("const", 0.0)))
                if "nlp_ref" in d:
                    name = d["nlp_ref"]
                    spec = (nlp_registry or {}).get(name)
                    cons = NlpReference(name, spec)
                else:
                    c = d.get("constraints") or {}
                    cons = HPolyhedron(
                        np.asarray(c.get("Aeq", []), float).reshape(-1, n),
                        np.asarray(c.get("beq", []), float),
                        np.asarray(c.get("Ain", []), float).reshape(-1, n),
                        np.asarray(c.get("bin", []), float), dim=n)
                subs.append(Subsystem(int(d["id"]), idx, objective, cons))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed problem file: {exc}") from exc
        return cls(n_x, tuple(subs))

    @classmethod
    def load(cls, path, nlp_registry=None):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}: {exc}") from exc
        return cls.from_dict(data, nlp_registry)


@dataclass(frozen=True)
class TreeTopology:
    root: int
    parent: Mapping[int, int | None]
    children: Mapping[int, tuple]
    coupling: Mapping[int, VariableIndexSet]
    local: Mapping[int, VariableIndexSet]
    order: tuple = field(default=())  # breadth-first from the root

    def depth(self) -> int:
        best = 0
        for sid in self.order:
            d, p = 0, self.parent[sid]
            while p is not None:
                d, p = d + 1, self.parent[p]
            best = max(best, d)
        return best

    def postorder(self):
        """Leaves first; every child precedes its parent."""
        return tuple(reversed(self.order))


def build_interaction_graph(problem: TreeProblem) -> list[tuple[int, int]]:
    """Edges ``(i, j)``, ``i`` listed before ``j`` in the problem, wherever index sets meet."""
    subs = problem.subsystems
    edges = []
    for a in range(len(subs)):
        sa = set(subs[a].indices)
        for b in range(a + 1, len(subs)):
            if sa & set(subs[b].indices):
                edges.append((subs[a].id, subs[b].id))
    return edges


def _find_cycle(ids, adj):
    color = {i: 0 for i in ids}
    parent = {}
    for start in ids:
        if color[start]:
            continue
        stack = [(start, None, iter(adj[start]))]
        color[start] = 1
        while stack:
            node, par, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
                continue
            if nxt == par:
                continue
            if color[nxt] == 1:
                cyc = [nxt]
                k = node
                while k != nxt:
                    cyc.append(k)
                    k = parent[k]
                return list(reversed(cyc))
            if color[nxt] == 0:
                color[nxt] = 1
                parent[nxt] = node
                stack.append((nxt, node, iter(adj[nxt])))
    return None


def verify_tree(problem: TreeProblem, edges=None, root: int | None = None) -> TreeTopology:
    """Check the interaction graph is a tree and derive coupling/local index sets."""
    ids = problem.ids
    if not ids:
        raise InputError("problem has no subsystems")
    root = ids[0] if root is None else root
    if root not in ids:
        raise InputError(f"root {root} is not a subsystem")
    owners: dict[int, list[int]] = {}
    for s in problem.subsystems:
        for g in s.indices:
            owners.setdefault(g, []).append(s.id)
    for g, who in owners.items():
        if len(who) >= 3:
            raise SharedVariableError(f"variable {g} is shared by subsystems {who}")
    if edges is None:
        edges = build_interaction_graph(problem)
    adj = {i: [] for i in ids}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    for i in ids:
        adj[i].sort()
    cyc = _find_cycle(ids, adj)
    if cyc is not None:
        path = "-".join(map(str, cyc + [cyc[0]]))
        raise NotATree(f"interaction graph contains the cycle {path}",
                       edge=(cyc[-1], cyc[0]))
    parent: dict[int, int | None] = {root: None}
    order = [root]
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in parent:
                parent[v] = u
                order.append(v)
                queue.append(v)
    if len(order) != len(ids):
        missing = sorted(set(ids) - set(order))
        raise NotATree(f"interaction graph is disconnected; unreachable from {root}: {missing}",
                       component=missing)
    children = {i: tuple(sorted(v for v in adj[i] if parent.get(v) == i)) for i in ids}
    coupling = {}
    local = {}
    for s in problem.subsystems:
        p = parent[s.id]
        coupling[s.id] = VariableIndexSet() if p is None else problem[p].indices & s.indices
        local[s.id] = VariableIndexSet(g for g in s.indices if len(owners[g]) == 1)
    return TreeTopology(root, parent, children, coupling, local, tuple(order))


def assemble_monolithic(problem: TreeProblem) -> tuple[QuadraticProgram, float]:
    """Stack all subsystems into one QP over the full vector; returns ``(qp, const)``."""
    n = problem.n_x
    Q = np.zeros((n, n))
    q = np.zeros(n)
    const = 0.0
    Aeq, beq, Ain, bin_ = [], [], [], []
    for s in problem.subsystems:
        if not s.is_polyhedral:
            raise Unsupported(f"subsystem {s.id} is not a polyhedral QP")
        cols = s.indices.zero_based()
        Q[np.ix_(cols, cols)] += s.objective.Q
        q[cols] += s.objective.q
        const += s.objective.const
        P = s.constraints.lift(cols, n)
        Aeq.append(P.Aeq), beq.append(P.beq), Ain.append(P.Ain), bin_.append(P.bin)
    P = HPolyhedron(np.vstack([np.zeros((0, n))] + Aeq), np.concatenate([np.zeros(0)] + beq),
                    np.vstack([np.zeros((0, n))] + Ain), np.concatenate([np.zeros(0)] + bin_),
                    dim=n)
    return QuadraticProgram(Q, q, P), const

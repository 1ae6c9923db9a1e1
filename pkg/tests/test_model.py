import json

import numpy as np
import pytest

from treedp.errors import InputError, NotATree, SharedVariableError
from treedp.model import (QuadraticObjective, Subsystem, TreeProblem, VariableIndexSet,
                          assemble_monolithic, build_interaction_graph, verify_tree)
from treedp.polyhedra import HPolyhedron


def _sub(sid, idx, cons=None):
    n = len(idx)
    return Subsystem(sid, idx, QuadraticObjective(np.eye(n), np.zeros(n)),
                     cons if cons is not None else HPolyhedron.universe(n))


def test_index_set_sorted_and_validated():
    assert tuple(VariableIndexSet([3, 1, 2])) == (1, 2, 3)
    with pytest.raises(InputError):
        VariableIndexSet([1, 1])
    with pytest.raises(InputError):
        VariableIndexSet([0, 1])
    a, b = VariableIndexSet([1, 2, 3]), VariableIndexSet([2, 3, 4])
    assert tuple(a & b) == (2, 3)
    assert (a & b).positions_in(b) == [0, 1]


def test_path_topology():
    p = TreeProblem(5, (_sub(1, [1, 2]), _sub(2, [2, 3, 4]), _sub(3, [4, 5])))
    topo = verify_tree(p)
    assert topo.root == 1
    assert topo.parent == {1: None, 2: 1, 3: 2}
    assert tuple(topo.coupling[2]) == (2,)
    assert tuple(topo.coupling[3]) == (4,)
    assert tuple(topo.local[2]) == (3,)
    assert topo.depth() == 2
    post = topo.postorder()
    assert post.index(3) < post.index(2) < post.index(1)


def test_reroot_changes_coupling():
    p = TreeProblem(3, (_sub(1, [1, 2]), _sub(2, [2, 3])))
    topo = verify_tree(p, root=2)
    assert topo.parent[1] == 2
    assert tuple(topo.coupling[1]) == (2,)


def test_cycle_is_reported():
    p = TreeProblem(3, (_sub(1, [1, 2]), _sub(2, [2, 3]), _sub(3, [3, 1])))
    with pytest.raises(NotATree, match="cycle"):
        verify_tree(p)


def test_disconnected_is_reported():
    p = TreeProblem(4, (_sub(1, [1, 2]), _sub(2, [3, 4])))
    with pytest.raises(NotATree, match="disconnected"):
        verify_tree(p)


def test_variable_in_three_subsystems_rejected():
    p = TreeProblem(4, (_sub(1, [1, 2]), _sub(2, [1, 3]), _sub(3, [1, 4])))
    with pytest.raises(SharedVariableError):
        verify_tree(p)


def test_interaction_graph_edges():
    p = TreeProblem(4, (_sub(1, [1, 2]), _sub(2, [2, 3]), _sub(3, [2, 4])))
    # variable 2 is shared by three subsystems, but the graph itself is still well defined
    assert build_interaction_graph(p) == [(1, 2), (1, 3), (2, 3)]


def test_json_round_trip(tmp_path):
    cons = HPolyhedron([[1.0, 1.0]], [1.0], [[1.0, 0.0]], [2.0], 2)
    p = TreeProblem(3, (_sub(1, [1, 2], cons), _sub(2, [2, 3])))
    path = tmp_path / "p.json"
    path.write_text(json.dumps(p.to_dict()))
    q = TreeProblem.load(path)
    assert q.to_dict() == p.to_dict()


def test_unknown_keys_rejected():
    with pytest.raises(InputError):
        TreeProblem.from_dict({"n_x": 1, "subsystems": [], "extra": 1})
    with pytest.raises(InputError):
        TreeProblem.from_dict({"n_x": 1, "subsystems": [{"indices": [1]}]})


def test_monolithic_assembly_sums_objectives(rng):
    p = TreeProblem(3, (_sub(1, [1, 2]), _sub(2, [2, 3])))
    qp, const = assemble_monolithic(p)
    x = rng.standard_normal(3)
    assert np.isclose(0.5 * x @ qp.Q @ x + qp.q @ x + const, p.objective_value(x))

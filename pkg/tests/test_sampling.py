import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from treedp.errors import ComponentUnbounded, DegenerateHull, NoFeasibleSamples
from treedp.polyhedra import HPolyhedron
from treedp.sampling import (ConvexSetSpec, NlpConstraintSpec, SampleSet,
                             decision_variable_sampling, default_costs, gift_wrap,
                             gridding_refinement, hull_coupling_set, hull_of_samples,
                             optimization_based_sampling)
from treedp.solvers import SecondOrderCone


def polar_disk():
    """z = r (cos t, sin t) with the polar coordinates as sampled decisions."""
    def g(z, y):
        return [z[0] - y[0] * np.cos(y[1]), z[1] - y[0] * np.sin(y[1])]
    return NlpConstraintSpec(2, 2, g, y_lower=[0, 0], y_upper=[1, 2 * np.pi], sampled=(0, 1))


def upper_half_disk_nlp():
    """Semicircle region: z on the disc with z2 >= 0, written with a nonlinear inequality."""
    def g(z, y):
        return [z[0] - y[0], z[1] - y[1]]

    def h(z, y):
        return [z @ z - 1.0, -z[1]]
    return NlpConstraintSpec(2, 2, g, h, y_lower=[-1, -1], y_upper=[1, 1], sampled=(0, 1))


def unit_disk_convex():
    return ConvexSetSpec(HPolyhedron.universe(2), cones=(SecondOrderCone(np.eye(2),
                                                                         np.zeros(2), 1.0),))


def test_decision_sampling_disk():
    s = decision_variable_sampling(polar_disk(), 300, seed=3)
    assert len(s) == 300 and s.rejected == 0
    assert np.all(np.linalg.norm(s.Z, axis=1) <= 1 + 1e-9)
    assert s.audit(polar_disk()) <= 1e-10


def test_semicircle_rejects_lower_half():
    spec = upper_half_disk_nlp()
    s = decision_variable_sampling(spec, 400, seed=0)
    # uniform on the square: accepted share is (pi/2)/4
    assert abs(len(s) / 400 - np.pi / 8) < 0.08
    assert np.all(s.Z[:, 1] >= -1e-12) and np.all(np.sum(s.Z ** 2, axis=1) <= 1 + 1e-12)


def test_no_feasible_samples():
    spec = NlpConstraintSpec(1, 1, lambda z, y: [z[0] ** 2 + 1.0], y_lower=[0], y_upper=[1],
                             sampled=(0,))
    with pytest.raises(NoFeasibleSamples):
        decision_variable_sampling(spec, 10)


def test_complete_solves_dependent_part():
    # z = y1 + y2^2, with y2 dependent through y2 = 2 y1
    spec = NlpConstraintSpec(1, 2, lambda z, y: [z[0] - y[0] - y[1] ** 2, y[1] - 2 * y[0]],
                             y_lower=[0, -np.inf], y_upper=[1, np.inf], sampled=(0,))
    w = spec.complete([0.5], w0=np.zeros(3))
    assert np.allclose(w, [0.5 + 1.0, 0.5, 1.0])
    assert max(spec.violation(w)) < 1e-10


def test_box_boundary_samples_and_hull():
    box = HPolyhedron.box([0, 0], [2, 1])
    s = optimization_based_sampling(box)
    assert len(s) == len(default_costs(2)) == 8
    hull = hull_of_samples(s)
    assert hull.certified_inner
    Z = np.random.default_rng(0).uniform(-0.5, 2.5, (2000, 2))
    assert np.array_equal(hull.polyhedron.contains_many(Z, 1e-9), box.contains_many(Z, 1e-9))


def test_disk_gridding_closed_form():
    spec = unit_disk_convex()
    base = optimization_based_sampling(spec)
    grid = gridding_refinement(spec, base, 0, 9)
    assert len(grid) == 18
    for z in grid.Z:
        assert np.isclose(abs(z[1]), np.sqrt(max(0.0, 1 - z[0] ** 2)), atol=1e-6)


def test_nlp_gridding_on_semicircle():
    spec = upper_half_disk_nlp()
    base = decision_variable_sampling(spec, 200, seed=1)
    grid = gridding_refinement(spec, base, 0, 7, directions=[np.array([0.0, 1.0]),
                                                              np.array([0.0, -1.0])])
    assert len(grid) >= 12
    assert grid.audit(spec) <= 1e-8
    for z, prov in zip(grid.Z, grid.provenance):
        expect = 0.0 if prov["direction"][1] > 0 else np.sqrt(1 - z[0] ** 2)
        # min over z2 is 0 (the floor), max is the arc
        assert np.isclose(z[1], expect if prov["direction"][1] < 0 else 0.0, atol=1e-5)


def test_gridding_needs_bounded_base():
    with pytest.raises(ComponentUnbounded):
        gridding_refinement(unit_disk_convex(), SampleSet(2, convex=True), 0, 3)


def test_collinear_hull_is_degenerate():
    Z = np.column_stack([np.linspace(0, 1, 10), 2 * np.linspace(0, 1, 10)])
    with pytest.raises(DegenerateHull):
        hull_of_samples(Z)
    with pytest.raises(DegenerateHull):
        hull_of_samples(np.zeros((2, 2)))


def test_three_dimensional_hull():
    rng = np.random.default_rng(2)
    Z = rng.standard_normal((60, 3))
    hull = hull_of_samples(Z)
    assert not hull.certified_inner
    assert hull.polyhedron.contains_many(Z, 1e-9).all()
    assert len(hull.vertices) == len(ConvexHull(Z).vertices)


def test_csv_round_trip(tmp_path):
    s = decision_variable_sampling(polar_disk(), 20, seed=4)
    s.merged(optimization_based_sampling(unit_disk_convex())).to_csv(tmp_path / "s.csv")
    r = SampleSet.read_csv(tmp_path / "s.csv")
    assert len(r) == 28
    assert np.allclose(r.Z[:20], s.Z, atol=1e-11)
    assert r.provenance[0] == {"kind": "decision", "index": 0}
    assert r.provenance[-1]["kind"] == "boundary"


def test_hull_coupling_set_wraps():
    hull = hull_of_samples(optimization_based_sampling(HPolyhedron.box([0, 0], [1, 1])))
    cset = hull_coupling_set(hull)
    assert cset.variant == "hull" and cset.certified and cset.contains([0.5, 0.5])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(3, 40))
def test_gift_wrap_matches_qhull(seed, n):
    Z = np.random.default_rng(seed).standard_normal((n, 2))
    ours = set(gift_wrap(Z).tolist())
    assert ours == set(ConvexHull(Z).vertices.tolist())


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), dim=st.integers(2, 4))
def test_hull_contains_every_sample(seed, dim):
    Z = np.random.default_rng(seed).uniform(-1, 1, (3 * dim + 5, dim))
    hull = hull_of_samples(Z)
    assert hull.polyhedron.contains_many(Z, 1e-9).all()
    # and nothing far outside the sample box
    assert not hull.polyhedron.contains(np.full(dim, 2.0))

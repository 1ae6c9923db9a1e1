"""Projection is checked against an LP membership oracle, never against itself."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treedp.errors import EmptyPolyhedron, UnboundedRadius
from treedp.polyhedra import (HPolyhedron, chebyshev_center, fourier_motzkin_project,
                              membership_oracle_batch, membership_oracle_project,
                              polygon_vertices, remove_redundancy)


def random_polytope(rng, n, m):
    A = rng.standard_normal((m, n))
    x0 = rng.standard_normal(n)
    b = A @ x0 + rng.uniform(0.1, 1.0, m)
    box = HPolyhedron.box(x0 - 2, x0 + 2)
    return HPolyhedron.from_inequalities(A, b).intersect(box), x0


def test_square_projects_to_interval():
    P = HPolyhedron.box([0, -1], [1, 2])
    R = fourier_motzkin_project(P, [1])
    lo, hi = R.bounding_box()
    assert np.allclose([lo[0], hi[0]], [-1, 2])


def test_triangle_projection_closed_form():
    # x >= 0, y >= 0, x + 2y <= 2  ->  x in [0, 2], y in [0, 1]
    P = HPolyhedron.from_inequalities([[-1, 0], [0, -1], [1, 2]], [0, 0, 2])
    assert np.allclose(fourier_motzkin_project(P, [0]).bounding_box(), [[0], [2]])
    assert np.allclose(fourier_motzkin_project(P, [1]).bounding_box(), [[0], [1]])


def test_equality_substitution():
    # x + y + z = 1 on the unit cube, keep (x, y): the triangle-clipped square
    P = HPolyhedron([[1, 1, 1]], [1], np.vstack([np.eye(3), -np.eye(3)]),
                    [1, 1, 1, 0, 0, 0], 3)
    R = fourier_motzkin_project(P, [0, 1])
    assert R.contains([0.5, 0.5]) and R.contains([0, 1]) and R.contains([0.1, 0.2])
    assert not R.contains([0.8, 0.5])
    assert not R.contains([-0.01, 0.5])


def test_keep_order_is_respected():
    P = HPolyhedron.box([0, 10, 20], [1, 11, 21])
    R = fourier_motzkin_project(P, [2, 0])
    assert np.allclose(R.bounding_box(), [[20, 0], [21, 1]])


def test_empty_projects_to_empty():
    P = HPolyhedron.from_inequalities([[1, 0], [-1, 0]], [-1, 0])
    assert fourier_motzkin_project(P, [1]).is_empty()


@pytest.mark.parametrize("seed", range(8))
def test_fm_agrees_with_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    P, x0 = random_polytope(rng, n, int(rng.integers(n + 1, 12)))
    keep = sorted(rng.choice(n, int(rng.integers(1, n)), replace=False).tolist())
    R = fourier_motzkin_project(P, keep)
    Z = x0[keep] + rng.uniform(-3, 3, (400, len(keep)))
    assert np.array_equal(R.contains_many(Z), membership_oracle_batch(P, keep, Z))


def test_single_oracle_matches_batch(rng):
    P, x0 = random_polytope(rng, 3, 6)
    Z = x0[:2] + rng.uniform(-2, 2, (20, 2))
    batch = membership_oracle_batch(P, [0, 1], Z)
    assert [membership_oracle_project(P, [0, 1], z) for z in Z] == list(batch)


def test_removed_rows_are_redundant(rng):
    """Each dropped row must be implied by the kept ones (checked by LP, not by the remover)."""
    P, _ = random_polytope(rng, 3, 15)
    A = np.vstack([P.Ain, P.Ain[:4] * 2.0, P.Ain[:3]])
    b = np.concatenate([P.bin, P.bin[:4] * 2.0 + 0.5, P.bin[:3] + 1.0])
    full = HPolyhedron.from_inequalities(A, b)
    red = remove_redundancy(full)
    assert red.n_in < full.n_in
    from treedp.solvers import lp_minimize
    for a, bi in zip(A, b):
        sol = lp_minimize(-a, red)
        assert -sol.objective <= bi + 1e-7


def test_chebyshev_center_of_box():
    c, r = chebyshev_center(HPolyhedron.box([0, 0], [2, 4]))
    assert np.isclose(r, 1.0) and np.isclose(c[0], 1.0)


def test_chebyshev_errors():
    with pytest.raises(EmptyPolyhedron):
        chebyshev_center(HPolyhedron.from_inequalities([[1.0], [-1.0]], [-1, 0]))
    with pytest.raises(UnboundedRadius):
        chebyshev_center(HPolyhedron.from_inequalities([[1.0, 0.0]], [1.0]))


def test_polygon_vertices_of_square():
    V = polygon_vertices(HPolyhedron.box([0, 0], [1, 1]))
    assert len(V) == 4
    assert {tuple(np.round(v, 9)) for v in V} == {(0, 0), (1, 0), (1, 1), (0, 1)}


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 10.0))
def test_projection_contains_projected_points(seed, scale):
    """Invariant: the projection of any point of P lies in the projection."""
    rng = np.random.default_rng(seed)
    P, x0 = random_polytope(rng, 3, 7)
    P = HPolyhedron.from_inequalities(P.Ain, P.bin * 1.0)
    R = fourier_motzkin_project(HPolyhedron.from_inequalities(P.Ain / scale, P.bin / scale),
                                [0, 2])
    assert R.contains(x0[[0, 2]], 1e-7)
    X = x0 + rng.uniform(-2, 2, (200, 3))
    inside = X[P.contains_many(X, 0.0)]
    assert R.contains_many(inside[:, [0, 2]], 1e-7).all()


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_projection_is_idempotent(seed):
    rng = np.random.default_rng(seed)
    P, x0 = random_polytope(rng, 3, 6)
    R = fourier_motzkin_project(P, [0, 1])
    RR = fourier_motzkin_project(R, [0, 1])
    Z = x0[:2] + rng.uniform(-3, 3, (300, 2))
    assert np.array_equal(R.contains_many(Z), RR.contains_many(Z))

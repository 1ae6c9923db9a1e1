import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treedp.centering import (Ellipsoid, box_row_certificate, ellipsoid_row_certificate,
                              inscribed_ball, inscribed_box, linear_map_ellipsoid,
                              max_volume_inscribed_ellipsoid, mvie_stationarity)
from treedp.errors import DegenerateImage, EmptyOrLowerDimensional, EmptyPolyhedron, Unbounded
from treedp.polyhedra import HPolyhedron, normalize_rows


def random_polytope(rng, n, m):
    A = rng.standard_normal((m, n))
    b = rng.uniform(0.2, 1.0, m)  # origin strictly inside
    return HPolyhedron.from_inequalities(np.vstack([A, np.eye(n), -np.eye(n)]),
                                         np.concatenate([b, np.full(2 * n, 3.0)]))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_unit_box_gives_identity(n):
    E = max_volume_inscribed_ellipsoid(HPolyhedron.box(-np.ones(n), np.ones(n)))
    assert np.allclose(E.A, np.eye(n), atol=1e-6)
    assert np.allclose(E.c, 0, atol=1e-6)


def test_interval_closed_form():
    E = max_volume_inscribed_ellipsoid(HPolyhedron.box([2.0], [5.0]))
    assert np.allclose(E.A, [[1.5]]) and np.allclose(E.c, [3.5])


def test_triangle_closed_form():
    # the MVIE of a triangle is centered at the centroid; for the right triangle
    # with legs 1 its area ratio is pi / (3 sqrt 3)
    T = HPolyhedron.from_inequalities([[-1, 0], [0, -1], [1, 1]], [0, 0, 1])
    E = max_volume_inscribed_ellipsoid(T)
    assert np.allclose(E.c, [1 / 3, 1 / 3], atol=1e-6)
    area = np.pi * np.linalg.det(E.A)
    assert np.isclose(area / 0.5, np.pi / (3 * np.sqrt(3)), atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_certificates_on_random_polytopes(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    P = random_polytope(rng, n, int(rng.integers(n + 1, 10)))
    E = max_volume_inscribed_ellipsoid(P)
    assert ellipsoid_row_certificate(E, P) <= 1e-7
    B, d, _ = normalize_rows(P.Ain, P.bin)
    assert mvie_stationarity(E.A, E.c, B, d) <= 1e-6
    assert P.contains_many(E.boundary_points(2000), 1e-7).all()


def test_affine_equivariance(rng):
    P = random_polytope(rng, 2, 5)
    M = np.array([[2.0, 0.5], [0.0, 1.0]])
    t = np.array([1.0, -3.0])
    Minv = np.linalg.inv(M)
    # image of P under x -> M x + t
    Q = HPolyhedron.from_inequalities(P.Ain @ Minv, P.bin + P.Ain @ Minv @ t)
    E, F = max_volume_inscribed_ellipsoid(P), max_volume_inscribed_ellipsoid(Q)
    ME = linear_map_ellipsoid(E, M)
    assert np.allclose(F.c, ME.c + t, atol=1e-6)
    assert np.allclose(F.A @ F.A, ME.A @ ME.A, atol=1e-6)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_monotone_under_inclusion(seed):
    """Adding a row can only shrink the inscribed ellipsoid."""
    rng = np.random.default_rng(seed)
    P = random_polytope(rng, 2, 4)
    a = rng.standard_normal(2)
    Q = P.intersect(HPolyhedron.from_inequalities([a], [rng.uniform(0.1, 1.0)]))
    vp = max_volume_inscribed_ellipsoid(P).volume_factor()
    vq = max_volume_inscribed_ellipsoid(Q).volume_factor()
    assert vq <= vp * (1 + 1e-7)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_centrally_symmetric_set_is_centered(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((3, 2))
    b = rng.uniform(0.5, 2.0, 3)
    P = HPolyhedron.from_inequalities(np.vstack([A, -A]), np.concatenate([b, b]))
    E = max_volume_inscribed_ellipsoid(P)
    assert np.allclose(E.c, 0, atol=1e-6)


def test_errors():
    with pytest.raises((EmptyPolyhedron, EmptyOrLowerDimensional)):
        max_volume_inscribed_ellipsoid(HPolyhedron.from_inequalities([[1.0], [-1.0]], [-1, 0]))
    with pytest.raises(Unbounded):
        max_volume_inscribed_ellipsoid(HPolyhedron.from_inequalities([[1.0, 0.0], [0, 1]],
                                                                     [1.0, 1]))
    with pytest.raises(DegenerateImage):
        linear_map_ellipsoid(Ellipsoid(np.eye(2), np.zeros(2)), [[1.0, 1.0], [2.0, 2.0]])


def test_box_and_ball():
    P = HPolyhedron.box([0, 0], [4, 2])
    B = inscribed_box(P)
    assert np.allclose(B.lower, [0, 0], atol=1e-6) and np.allclose(B.upper, [4, 2], atol=1e-6)
    assert box_row_certificate(B, P) <= 1e-9
    ball = inscribed_ball(P)
    assert np.allclose(ball.A, np.eye(2)) and np.isclose(ball.c[1], 1.0)


def test_box_in_diamond():
    D = HPolyhedron.from_inequalities([[1, 1], [1, -1], [-1, 1], [-1, -1]], [1, 1, 1, 1])
    B = inscribed_box(D)
    assert np.allclose(B.upper - B.lower, [1, 1], atol=1e-6)
    assert box_row_certificate(B, D) <= 1e-9


def test_ellipsoid_dict_round_trip():
    E = Ellipsoid([[2.0, 0.1], [0.1, 1.0]], [1.0, 2.0])
    F = Ellipsoid.from_dict(E.to_dict())
    assert np.allclose(E.A, F.A) and np.allclose(E.c, F.c)
    assert E.contains(E.c) and not E.contains(E.c + 10)
    # the inner polytope's corners sit on the ellipsoid boundary
    inner = E.inner_polytope()
    corners = [E.c + E.A @ np.array(u) / np.sqrt(2) for u in ([1, 1], [1, -1], [-1, 1], [-1, -1])]
    for v in corners:
        assert inner.contains(v, 1e-9) and E.contains(v, 1e-9) and not E.contains(v, -1e-6)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_signed_distance, random_cone, simplex_grid_min_sqdist
from polyunmix.errors import ConvergenceError
from polyunmix.geometry import (Halfspace, PolyhedralCone, contains, project_columns_onto_simplex,
                                project_onto_polyhedron, project_onto_simplex, signed_distance,
                                signed_distances)

QUADRANT = PolyhedralCone([[-1.0, 0.0], [0.0, -1.0]])
finite = st.floats(-10, 10, allow_nan=False)


def test_halfspace_normalized():
    h = Halfspace(np.array([3.0, 4.0]), 10.0)
    np.testing.assert_allclose(h.normal, [0.6, 0.8])
    assert h.offset == pytest.approx(2.0)
    with pytest.raises(ValueError):
        Halfspace(np.zeros(2), 0.0)


def test_contains_first_quadrant():
    assert contains(QUADRANT, [1.0, 2.0])
    assert not contains(QUADRANT, [-1.0, 2.0])
    assert contains(QUADRANT, [0.0, 0.0])


def test_projection_examples():
    np.testing.assert_allclose(project_onto_polyhedron(QUADRANT, np.array([1.0, 2.0])), [1, 2])
    np.testing.assert_allclose(project_onto_polyhedron(QUADRANT, np.array([-3.0, 4.0])), [0, 4], atol=1e-9)
    np.testing.assert_allclose(project_onto_polyhedron(QUADRANT, np.array([-1.0, -1.0])), [0, 0], atol=1e-9)


def test_signed_distance_examples():
    assert signed_distance(QUADRANT, [1.0, 2.0]) == pytest.approx(-1.0, abs=1e-12)
    assert signed_distance(QUADRANT, [-3.0, 4.0]) == pytest.approx(3.0, abs=1e-9)
    assert signed_distance(QUADRANT, [-1.0, -1.0]) == pytest.approx(math.sqrt(2), abs=1e-9)
    assert signed_distance(QUADRANT, [0.0, 0.0]) <= 0


def test_signed_distance_matches_face_enumeration(rng):
    for k in range(60):
        d = 2 + k % 3
        cone = random_cone(rng, d, int(rng.integers(1, 5)))
        x = rng.standard_normal(d)
        assert abs(signed_distance(PolyhedralCone(cone), x) - brute_signed_distance(cone, x)) < 1e-8


def test_signed_distance_bounded_by_grid_witness(rng):
    # any grid point of the cone bounds the exterior distance from above
    cone = random_cone(rng, 2, 3)
    g = np.stack(np.meshgrid(np.linspace(-3, 3, 301), np.linspace(-3, 3, 301)), -1).reshape(-1, 2)
    members = g[(g @ cone.T <= 0).all(1)]
    X = rng.standard_normal((50, 2))
    sd = signed_distances(PolyhedralCone(cone), X)
    outside = sd > 0
    witness = np.linalg.norm(X[outside, None] - members[None], axis=2).min(1)
    assert (sd[outside] <= witness + 1e-12).all()
    assert (witness - sd[outside] < 6 / 300 * math.sqrt(2)).all()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_signed_distance_positive_homogeneity(seed, t):
    rng = np.random.default_rng(seed)
    cone = PolyhedralCone(random_cone(rng, 3, 3))
    x = rng.standard_normal(3)
    assert abs(signed_distance(cone, t * x) - t * signed_distance(cone, x)) < 1e-8 * max(1, t)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dykstra_variational_inequality(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 5))
    W = rng.standard_normal((int(rng.integers(1, 6)), d))
    b = rng.random(W.shape[0])  # 0 is strictly feasible
    x = rng.standard_normal(d) * 3
    p = project_onto_polyhedron((W, b), x)
    assert (W @ p <= b + 1e-8).all()
    Q = rng.standard_normal((400, d)) * 3
    Q = Q[(Q @ W.T <= b).all(1)][:100]
    assert ((Q - p) @ (x - p) <= 1e-6).all()


def test_dykstra_cone_matches_nnls_moreau(rng):
    # Moreau: x = P_K(x) + P_polar(x); the polar cone is generated by the normals
    from scipy.optimize import nnls
    for _ in range(20):
        N = random_cone(rng, 3, 3)
        x = rng.standard_normal(3)
        lam, _ = nnls(N.T, x)
        np.testing.assert_allclose(project_onto_polyhedron(PolyhedralCone(N), x), x - N.T @ lam, atol=1e-7)


def test_dykstra_batched_equals_single(rng):
    cone = PolyhedralCone(random_cone(rng, 3, 4))
    X = rng.standard_normal((25, 3))
    batched = project_onto_polyhedron(cone, X)
    single = np.array([project_onto_polyhedron(cone, x) for x in X])
    np.testing.assert_allclose(batched, single, atol=1e-9)


def test_dykstra_cycle_cap_raises():
    hs = [Halfspace(np.array([1.0, -1e-3]), 0.0), Halfspace(np.array([-1.0, -1e-3]), 0.0)]
    with pytest.raises(ConvergenceError) as info:
        project_onto_polyhedron(hs, np.array([1.0, -1.0]), max_iter=3)
    assert info.value.residual > 0


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        signed_distance(QUADRANT, [1.0, 2.0, 3.0])


def test_simplex_examples():
    np.testing.assert_allclose(project_onto_simplex([0.2, 0.3, 0.5]), [0.2, 0.3, 0.5], atol=1e-15)
    np.testing.assert_allclose(project_onto_simplex([2.0, 0.0, 0.0]), [1, 0, 0])
    np.testing.assert_allclose(project_onto_simplex([0.5, 0.5, -1.0]), [0.5, 0.5, 0.0])


def test_simplex_beats_grid(rng):
    V = rng.standard_normal((2000, 3)) * 2
    P = project_columns_onto_simplex(V.T).T
    assert (((V - P) ** 2).sum(1) <= simplex_grid_min_sqdist(V) + 1e-12).all()


def test_simplex_matches_dykstra(rng):
    # the simplex as a polyhedron: -p <= 0, sum p <= 1, -sum p <= -1
    W = np.vstack([-np.eye(3), np.ones(3), -np.ones(3)])
    b = np.array([0, 0, 0, 1.0, -1.0])
    V = rng.standard_normal((50, 3))
    np.testing.assert_allclose(project_onto_polyhedron((W, b), V), project_columns_onto_simplex(V.T).T, atol=1e-7)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 8), elements=finite))
def test_simplex_output_on_simplex_and_idempotent(v):
    p = project_onto_simplex(v)
    assert (p >= 0).all() and abs(p.sum() - 1) < 1e-12
    np.testing.assert_allclose(project_onto_simplex(p), p, atol=1e-12)
    # shift invariance: adding a constant to every entry does not move the projection
    np.testing.assert_allclose(project_onto_simplex(v + 3.0), p, atol=1e-9)

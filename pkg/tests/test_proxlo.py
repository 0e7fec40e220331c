import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hibcd import proxlo
from hibcd.errors import NumericalFailure

from oracles import (
    nuclear_ball_projection,
    random_box,
    random_nuclear_ball,
    random_simplex,
    simplex_projection_bisection,
)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


# box

def test_prox_box_clips():
    np.testing.assert_array_equal(proxlo.prox_box01(np.array([-0.5, 0.3, 1.7])), [0, 0.3, 1])


def test_prox_box_identity_inside(rng):
    X = rng.uniform(size=(3, 4))
    np.testing.assert_array_equal(proxlo.prox_box01(X), X)


def test_prox_box_grid_oracle(rng):
    grid = np.linspace(0, 1, 201)
    X = rng.uniform(-1, 2, size=(2, 2))
    P = proxlo.prox_box01(X)
    for idx in np.ndindex(2, 2):
        best = grid[np.argmin((grid - X[idx]) ** 2)]
        assert abs(P[idx] - best) <= 0.005 + 1e-12


def test_lo_box_rule():
    np.testing.assert_array_equal(proxlo.lo_box01(np.array([3.0, -1.0, 0.0])), [0, 1, 0])
    np.testing.assert_array_equal(proxlo.lo_box01(np.ones((2, 3))), np.zeros((2, 3)))


def test_lo_box_beats_samples(rng):
    G = rng.standard_normal((3, 3))
    Z = proxlo.lo_box01(G)
    Y = random_box(rng, 1000, (3, 3))
    assert np.all(np.einsum("ij,nij->n", G, Y) >= np.vdot(G, Z) - 1e-12)


# simplex

def test_project_simplex_example():
    np.testing.assert_allclose(proxlo.project_simplex([0.5, 0.2, 0.9]), [0.3, 0.0, 0.7], atol=1e-15)


def test_project_simplex_fixed_points():
    np.testing.assert_array_equal(proxlo.project_simplex([0.0, 1.0, 0.0]), [0.0, 1.0, 0.0])
    third = np.full(3, 1 / 3)
    np.testing.assert_allclose(proxlo.project_simplex(third), third, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 9), elements=finite))
def test_project_simplex_matches_bisection(v):
    np.testing.assert_allclose(proxlo.project_simplex(v), simplex_projection_bisection(v), atol=1e-10)


def test_lo_simplex_columns():
    G = np.array([[2.0, 1.0], [-1.0, 1.0], [5.0, 3.0]])
    np.testing.assert_array_equal(proxlo.lo_colwise_simplex(G), [[0, 1], [1, 0], [0, 0]])


def test_prox_colwise_matches_per_column(rng):
    S = rng.standard_normal((4, 7))
    P = proxlo.prox_colwise_simplex(S)
    for j in range(7):
        np.testing.assert_allclose(P[:, j], simplex_projection_bisection(S[:, j]), atol=1e-10)


def test_simplex_feasible():
    assert proxlo.simplex_feasible(np.full((3, 2), 1 / 3))
    assert not proxlo.simplex_feasible(np.array([[0.5], [0.6]]))
    assert not proxlo.simplex_feasible(np.array([[1.1], [-0.1]]))


# nuclear ball

def test_nuclear_prox_inside_unchanged():
    X = np.diag([0.2, 0.1])
    np.testing.assert_array_equal(proxlo.project_nuclear_ball(X, 1.0), X)


def test_nuclear_prox_rank_one_rescale():
    np.testing.assert_allclose(proxlo.project_nuclear_ball(np.diag([2.0, 0.0]), 1.0),
                               np.diag([1.0, 0.0]), atol=1e-15)


def test_nuclear_prox_vs_oracle(rng):
    for _ in range(20):
        X = rng.standard_normal((3, 4))
        P = proxlo.project_nuclear_ball(X, 1.0)
        np.testing.assert_allclose(P, nuclear_ball_projection(X, 1.0), atol=1e-10)
        assert proxlo.nuclear_norm(P) <= 1.0 + 1e-9


def test_nuclear_prox_rejects_radius():
    with pytest.raises(ValueError):
        proxlo.project_nuclear_ball(np.eye(2), 0.0)


def test_nuclear_prox_svd_failure(monkeypatch):
    def boom(*a, **k):
        raise np.linalg.LinAlgError("no convergence")

    monkeypatch.setattr(np.linalg, "svd", boom)
    with pytest.raises(NumericalFailure):
        proxlo.project_nuclear_ball(np.eye(2), 1.0)


def test_nuclear_lo_diagonal():
    Y = proxlo.lo_nuclear_ball(np.diag([2.0, 1.0]), 1.0)
    np.testing.assert_allclose(Y, -np.diag([1.0, 0.0]), atol=1e-9)
    assert np.vdot(np.diag([2.0, 1.0]), Y) == pytest.approx(-2.0, abs=1e-9)


def test_nuclear_lo_zero():
    np.testing.assert_array_equal(proxlo.lo_nuclear_ball(np.zeros((2, 3)), 1.0), np.zeros((2, 3)))


def test_nuclear_lo_beats_samples(rng):
    G = rng.standard_normal((3, 3))
    Z = proxlo.lo_nuclear_ball(G, 1.0)
    Y = random_nuclear_ball(rng, 1000, (3, 3), 1.0)
    assert np.all(np.einsum("ij,nij->n", G, Y) >= np.vdot(G, Z) - 1e-12)
    assert np.vdot(G, Z) == pytest.approx(-np.linalg.svd(G, compute_uv=False)[0], rel=1e-9)


def test_nuclear_lo_warm_store(rng):
    store = proxlo.WarmStartStore()
    G = rng.standard_normal((4, 5))
    proxlo.lo_nuclear_ball(G, 2.0, warm=store, key=3)
    assert 3 in store and len(store) == 1
    u, v = store.get(3)
    assert np.linalg.norm(u) == pytest.approx(1.0) and np.linalg.norm(v) == pytest.approx(1.0)


# row-wise nuclear ball

def test_reshape_round_trip(rng):
    row = rng.standard_normal(12)
    img = proxlo.row_to_image(row, 4, 3)
    assert img.shape == (3, 4)
    # column-major pixels: index j + k * L_y is (j, k)
    assert img[2, 1] == row[2 + 1 * 3]
    np.testing.assert_array_equal(proxlo.image_to_row(img), row)


def test_rowwise_prox_identity_on_feasible_row(rng):
    S = rng.standard_normal((2, 4))
    norms = proxlo.rowwise_nuclear_norms(S, 2, 2)
    tau = np.array([norms[0] + 1.0, norms[1] / 2])
    P = proxlo.prox_rowwise_nuclear(S, tau, 2, 2)
    np.testing.assert_array_equal(P[0], S[0])
    assert proxlo.rowwise_nuclear_norms(P, 2, 2)[1] == pytest.approx(tau[1], rel=1e-10)


def test_rowwise_prox_matches_single(rng):
    S = rng.standard_normal((1, 4))
    P = proxlo.prox_rowwise_nuclear(S, 0.5, 2, 2)
    ref = proxlo.project_nuclear_ball(proxlo.row_to_image(S[0], 2, 2), 0.5)
    np.testing.assert_array_equal(P[0], proxlo.image_to_row(ref))


def test_rowwise_lo_norm_is_radius(rng):
    Gr = rng.standard_normal((3, 12))
    tau = np.array([1.0, 2.0, 0.5])
    Y = proxlo.lo_rowwise_nuclear(Gr, tau, 4, 3)
    for i in range(3):
        s = np.linalg.svd(proxlo.row_to_image(Y[i], 4, 3), compute_uv=False)
        assert s[0] == pytest.approx(tau[i], rel=1e-12)
        assert s[1] <= 1e-12


def test_rowwise_dimension_mismatch():
    with pytest.raises(ValueError):
        proxlo.prox_rowwise_nuclear(np.ones((2, 5)), 1.0, 2, 2)
    with pytest.raises(ValueError):
        proxlo.lo_rowwise_nuclear(np.ones((2, 4)), -1.0, 2, 2)


# shared properties

@pytest.mark.parametrize("n", [2, 3, 5])
def test_prox_simplex_beats_samples(n, rng):
    v = rng.standard_normal(n) * 2
    p = proxlo.project_simplex(v)
    Y = random_simplex(rng, 10_000, n)
    assert np.all(((Y - v) ** 2).sum(axis=1) >= ((p - v) ** 2).sum() - 1e-12)


def test_prox_nonexpansive(rng):
    for _ in range(50):
        x, y = rng.standard_normal(5), rng.standard_normal(5)
        d = np.linalg.norm(proxlo.project_simplex(x) - proxlo.project_simplex(y))
        assert d <= np.linalg.norm(x - y) + 1e-12
        X, Y = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
        d = np.linalg.norm(proxlo.project_nuclear_ball(X, 1.0) - proxlo.project_nuclear_ball(Y, 1.0))
        assert d <= np.linalg.norm(X - Y) + 1e-12
        d = np.linalg.norm(proxlo.prox_box01(X) - proxlo.prox_box01(Y))
        assert d <= np.linalg.norm(X - Y) + 1e-12


def test_prox_outputs_feasible(rng):
    S = rng.standard_normal((4, 9)) * 3
    assert proxlo.simplex_feasible(proxlo.prox_colwise_simplex(S))
    tau = np.array([0.5, 1.0, 2.0, 3.0])
    assert proxlo.rowwise_nuclear_feasible(proxlo.prox_rowwise_nuclear(S, tau, 3, 3), tau, 3, 3)

import numpy as np
import pytest

from hibcd import linalg, proxlo, sensing


def test_ground_truth_shapes_and_constraints():
    gt = sensing.generate_ground_truth(20, 4, 12, 10, seed=5)
    assert gt.A.shape == (20, 4) and gt.S.shape == (4, 120)
    assert np.all((gt.A >= 0) & (gt.A <= 1))
    assert proxlo.simplex_feasible(gt.S, tol=1e-12)
    np.testing.assert_allclose(gt.X, gt.A @ gt.S)


def test_ground_truth_seed_determinism():
    a = sensing.generate_ground_truth(10, 3, 8, 8, seed=2, smoothness=3)
    b = sensing.generate_ground_truth(10, 3, 8, 8, seed=2, smoothness=3)
    c = sensing.generate_ground_truth(10, 3, 8, 8, seed=3, smoothness=3)
    np.testing.assert_array_equal(a.A, b.A)
    np.testing.assert_array_equal(a.S, b.S)
    assert not np.array_equal(a.S, c.S)


def test_smoothness_zero_is_white():
    gt = sensing.generate_ground_truth(10, 3, 16, 16, seed=0, smoothness=0)
    assert proxlo.simplex_feasible(gt.S, tol=1e-12)
    smooth = sensing.generate_ground_truth(10, 3, 16, 16, seed=0, smoothness=8)
    # neighbouring pixels are more alike after smoothing
    def roughness(S):
        img = S.reshape(3, 16, 16)
        return np.abs(np.diff(img, axis=1)).mean()
    assert roughness(smooth.S) < roughness(gt.S)


def test_ground_truth_rejects_bad_sizes():
    with pytest.raises(ValueError):
        sensing.generate_ground_truth(3, 3, 4, 4)
    with pytest.raises(ValueError):
        sensing.generate_ground_truth(10, 3, 4, 4, smoothness=-1)


def test_realized_snr_close_to_target():
    for snr in (20.0, 30.0, 40.0):
        sc = sensing.wald_scene("desk", seed=1, snr_db=snr)
        assert sc.realized_snr_db[0] == pytest.approx(snr, abs=0.5)
        assert sc.realized_snr_db[1] == pytest.approx(snr, abs=0.5)


def test_infinite_snr_is_exact():
    sc = sensing.wald_scene("desk", seed=0, snr_db=float("inf"))
    X = sc.truth.X
    np.testing.assert_array_equal(sc.Y_M, sc.F @ X)
    np.testing.assert_array_equal(sc.Y_H, linalg.apply_G(X, sc.G))
    assert sc.realized_snr_db == (float("inf"), float("inf"))


def test_separate_sensor_snr():
    gt = sensing.generate_ground_truth(16, 3, 16, 16)
    F = linalg.build_band_average_F(16, 4)
    G = linalg.build_spatial_operator(16, 16, 5, 1.0, 4)
    sc = sensing.synthesize_observations(gt, F, G, snr_M_db=None, snr_H_db=25.0)
    np.testing.assert_array_equal(sc.Y_M, F @ gt.X)
    assert np.isfinite(sc.realized_snr_db[1])
    with pytest.raises(ValueError):
        sensing.synthesize_observations(gt, F[:, :-1], G)


def test_scene_determinism_and_dims():
    a = sensing.wald_scene("desk", seed=4)
    b = sensing.wald_scene("desk", seed=4)
    np.testing.assert_array_equal(a.Y_M, b.Y_M)
    np.testing.assert_array_equal(a.Y_H, b.Y_H)
    assert a.dims == {"M": 16, "M_M": 4, "L_x": 32, "L_y": 32, "L": 1024, "L_H": 64, "N": 4}
    assert a.seed == 4 + 7919


def test_preset_dims():
    cup = sensing.resolve_preset("cuprite-like")
    assert (cup.L_x // cup.factor) * (cup.L_y // cup.factor) == 30 ** 2
    chk = sensing.resolve_preset("chikusei-like", L_x=64, L_y=64)
    assert chk.factor == 8 and (chk.L_x // chk.factor) ** 2 == 8 ** 2
    sc = sensing.wald_scene("chikusei-like", seed=0, M=24, N=5, L_x=64, L_y=64,
                            kernel_width=9, smoothness=8)
    assert sc.dims["L_H"] == 64 and sc.dims["M_M"] == 4


def test_preset_errors():
    with pytest.raises(ValueError):
        sensing.resolve_preset("nope")
    with pytest.raises(ValueError):
        sensing.resolve_preset("desk", colour=3)
    p = sensing.resolve_preset({"M": 8, "M_M": 2, "L_x": 8, "L_y": 8, "N": 2, "factor": 2})
    assert p.tau is None


def test_window_spanning_grid_is_finite():
    gt = sensing.generate_ground_truth(10, 3, 8, 8, seed=2, smoothness=8)
    assert np.all(np.isfinite(gt.S))
    np.testing.assert_allclose(gt.S.sum(axis=0), 1.0)

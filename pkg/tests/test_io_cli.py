import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hibcd import cli, io, linalg, sensing
from hibcd.errors import NumericalFailure

doubles = st.floats(allow_nan=True, allow_infinity=True, width=64)


# containers

@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=doubles))
def test_container_round_trip_bits(tmp_path_factory, M):
    stem = tmp_path_factory.mktemp("c") / "m"
    io.write_matrix(stem, M)
    back = io.read_matrix(stem)
    assert back.shape == M.shape
    assert back.tobytes() == np.ascontiguousarray(M).tobytes()


def test_container_header(tmp_path):
    io.write_matrix(tmp_path / "x", np.arange(3.0), name="row")
    h = io.read_header(tmp_path / "x.json")
    assert h == {"rows": 1, "cols": 3, "dtype": "f64le", "order": "row-major", "name": "row"}
    assert (tmp_path / "x.bin").read_bytes() == np.arange(3.0).astype("<f8").tobytes()


def test_container_errors(tmp_path):
    with pytest.raises(io.ContainerError):
        io.read_matrix(tmp_path / "missing")
    io.write_matrix(tmp_path / "a", np.ones((2, 2)))
    (tmp_path / "a.bin").write_bytes(b"\0" * 24)
    with pytest.raises(io.ContainerError, match="expected 32"):
        io.read_matrix(tmp_path / "a")
    (tmp_path / "b.json").write_text(json.dumps({"rows": 1, "cols": 1, "dtype": "f32be",
                                                 "order": "row-major"}))
    with pytest.raises(io.ContainerError, match="unsupported"):
        io.read_header(tmp_path / "b")
    (tmp_path / "c.json").write_text("{not json")
    with pytest.raises(io.ContainerError):
        io.read_header(tmp_path / "c")
    (tmp_path / "d.json").write_text(json.dumps({"rows": 1}))
    with pytest.raises(io.ContainerError, match="missing"):
        io.read_header(tmp_path / "d")
    with pytest.raises(ValueError):
        io.write_matrix(tmp_path / "e", np.ones((2, 2, 2)))


def test_operator_container_round_trip(tmp_path, rng):
    G = linalg.build_spatial_operator(12, 8, 5, 1.3, 4)
    io.write_matrix(tmp_path / "G", io.operator_to_matrix(G))
    H = io.matrix_to_operator(io.read_matrix(tmp_path / "G"), 12, 8, 4, 5, 1.3)
    np.testing.assert_array_equal(H.indptr, G.indptr)
    np.testing.assert_array_equal(H.indices, G.indices)
    np.testing.assert_array_equal(H.weights, G.weights)
    X = rng.standard_normal((2, G.L))
    np.testing.assert_array_equal(linalg.apply_G(X, H), linalg.apply_G(X, G))


# config

def test_config_rejects_unknown_keys():
    with pytest.raises(cli.ConfigError, match="unknown"):
        cli.ExperimentConfig.from_dict({"sed": 1})


@pytest.mark.parametrize("bad", [
    {"variant": "nnc"},
    {"variant": "tv"},
    {"rules": "FPG"},
    {"rules": "FPG,PG"},
    {"tau": -1.0},
    {"alpha_cap": 1.0},
    {"L_A": 0},
    {"obj_tol": 0.0},
    {"extrapolation": "heavy-ball"},
])
def test_config_validation(bad):
    with pytest.raises(cli.ConfigError):
        cli.ExperimentConfig.from_dict(bad).validate()


def test_config_rules_parsing():
    cfg = cli.ExperimentConfig.from_dict({"rules": "fw, fpg", "variant": "NNC", "tau": 3}).validate()
    assert cfg.rules == ("FW", "FPG") and cfg.variant == "nnc"


# commands

@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    assert cli.main(["generate", "--preset", "desk", "--seed", "2", "--out", str(out)]) == 0
    return out


def test_generate_files(scene_dir):
    man = json.loads((scene_dir / "manifest.json").read_text())
    assert man["seed"] == 2 and man["noise_seed"] == 2 + 7919
    assert man["snr_db"] == {"Y_M": 30.0, "Y_H": 30.0}
    for name in cli.SCENE_FILES:
        assert (scene_dir / f"{name}.json").exists() and (scene_dir / f"{name}.bin").exists()
    sc = cli.read_scene(scene_dir)
    ref = sensing.wald_scene("desk", seed=2)
    np.testing.assert_array_equal(sc.Y_M, ref.Y_M)
    np.testing.assert_array_equal(sc.G.weights, ref.G.weights)


def test_generate_noiseless_manifest(tmp_path):
    assert cli.main(["generate", "--snr-db", "inf", "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["realized_snr_db"] == {"Y_M": "inf", "Y_H": "inf"}
    assert cli.read_scene(tmp_path).realized_snr_db == (float("inf"), float("inf"))


@pytest.fixture(scope="module")
def solved(scene_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("sol")
    rc = cli.main(["solve", "--scene", str(scene_dir), "--rules", "FPG,FW", "--out", str(out)])
    assert rc == 0
    return out


def test_solve_outputs(solved):
    summary = json.loads((solved / "summary.json").read_text())
    assert summary["stop_reason"] in ("obj_tol", "max_iter", "gap_tol")
    assert summary["stop_reason"] == "obj_tol" and summary["iterations"] < 3000
    with (solved / "trace.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == cli.TRACE_COLUMNS
    assert len(rows) == summary["iterations"]
    assert [int(r["iter"]) for r in rows] == list(range(1, len(rows) + 1))
    assert float(rows[-1]["objective"]) == summary["objective"]
    assert all(float(r["fw_gap_total"]) >= -1e-9 for r in rows)
    A = io.read_matrix(solved / "A")
    S = io.read_matrix(solved / "S")
    np.testing.assert_allclose(io.read_matrix(solved / "X_hat"), A @ S)


def test_evaluate(scene_dir, solved, tmp_path):
    rc = cli.main(["evaluate", "--scene", str(scene_dir), "--solution", str(solved),
                   "--baseline", "--out", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    sc = cli.read_scene(scene_dir)
    X_hat = io.read_matrix(solved / "X_hat")
    from hibcd import metrics
    ref = metrics.evaluate(sc.truth.X, X_hat, sc.Y_M.shape[0])
    assert rep["ergas"] == ref.ergas and rep["sam_mean_rad"] == ref.sam_mean
    assert rep["objective"] == json.loads((solved / "summary.json").read_text())["objective"]
    assert "baseline_naive" in rep


def test_evaluate_truth_against_itself(scene_dir):
    sc = cli.read_scene(scene_dir)
    rep = cli.evaluation_report(sc, sc.truth.X)
    assert rep["ergas"] == 0.0 and rep["sam_mean_rad"] == pytest.approx(0.0, abs=1e-7)


def test_benchmark_table(scene_dir, tmp_path):
    rc = cli.main(["benchmark", "--preset", "desk", "--seed", "2", "--max-iter", "20",
                   "--out", str(tmp_path)])
    assert rc == 0
    with (tmp_path / "benchmark.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    assert {(r["variant"], r["rules"]) for r in rows} == {
        (v, f"{a}-{b}") for v in cli.VARIANTS for a, b in cli.RULE_PAIRS}
    for r in rows:
        assert float(r["time_per_iter_ms"]) == pytest.approx(
            1e3 * float(r["time_s"]) / int(r["iterations"]), rel=1e-9)
    assert len((tmp_path / "benchmark.txt").read_text().splitlines()) == 8


def test_benchmark_external_scene_without_tau(scene_dir, tmp_path):
    cfg = cli.ExperimentConfig(scene=str(scene_dir), out=str(tmp_path), max_iter=5).validate()
    assert len(cli.cmd_benchmark(cfg)) == 3


def test_recommend_repeats_cli(capsys):
    assert cli.main(["recommend-repeats", "--rule", "fw", "--eta", "9"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["bound"] == 3 and res["recommended"] == 3
    assert cli.main(["recommend-repeats", "--rule", "FW", "--eta", "0.5"]) == 2


def test_exit_codes(tmp_path, scene_dir, capsys):
    assert cli.main(["solve", "--variant", "nnc", "--out", str(tmp_path)]) == 2
    assert cli.main(["solve", "--scene", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 4
    bad = tmp_path / "cfg.json"
    bad.write_text('{"colour": 1}')
    assert cli.main(["solve", "--config", str(bad)]) == 2
    bad.write_text("[1, 2]")
    assert cli.main(["solve", "--config", str(bad)]) == 2
    assert cli.main(["solve", "--config", str(tmp_path / "missing.json")]) == 4


def test_config_file_overridden_by_flags(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 5, "max_iter": 7, "rules": ["FW", "FW"]}))
    args = cli._parser().parse_args(["solve", "--config", str(path), "--seed", "9"])
    cfg = cli.load_config(args)
    assert cfg.seed == 9 and cfg.max_iter == 7 and cfg.rules == ("FW", "FW")


def test_numerical_failure_flushes_trace(tmp_path, monkeypatch):
    def explode(problem, *rules, cfg=None, **kw):
        from hibcd.engine import SolverTrace
        tr = SolverTrace()
        raise NumericalFailure("step size blew up", trace=tr)

    monkeypatch.setattr(cli.cosmf, "solve", lambda *a, **k: explode(*a, **k))
    rc = cli.main(["solve", "--out", str(tmp_path), "--max-iter", "3"])
    assert rc == 3
    assert (tmp_path / "trace.csv").read_text().startswith("iter,")

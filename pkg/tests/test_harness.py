import csv
import io
import json

import numpy as np
import pytest

from cseu import constants
from cseu.harness import experiments as X
from cseu.harness.cli import SCAN_COLUMNS, main
from cseu.harness.config import ConfigError, ExperimentConfig, load_config
from cseu.harness.stats import chunked_mean_se, ks_test, loglog_slope, mean_se, summarize, variance_se
from cseu.harness.validate import run_suite
from cseu.measurement import CollectiveMeasurementSpec, ShadowData
from cseu.rng import stream, substream_seeds

SMALL = {
    "n": 1,
    "s": 1,
    "m": 600,
    "R": 3,
    "tasks": [{"observable_style": "pauli", "B": 2, "count": 2}],
    "otoc": [{"W": "X", "V": "Z"}],
    "scan": {"n_list": [1], "s_list": [1], "q_list": [4], "B_list": [1, 2], "lam_list": [1], "batches": 200},
    "calibration_batches": 50,
}


def _cfg(tmp_path, **kw):
    raw = dict(SMALL, **kw)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(raw))
    return str(p)


# ---- rng and stats -------------------------------------------------------


def test_streams_are_keyed():
    a = stream(1, "measurement", 0).random(3)
    np.testing.assert_array_equal(a, stream(1, "measurement", 0).random(3))
    assert not np.array_equal(a, stream(1, "measurement", 1).random(3))
    assert not np.array_equal(a, stream(1, "unitary", 0).random(3))
    assert len(set(substream_seeds(3, 10))) == 10


def test_stats_helpers():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(40_000)
    rep = summarize(x)
    assert abs(rep.mean) < 5 * rep.se
    assert abs(np.var(x, ddof=1) - 1) < 5 * variance_se(x)
    assert variance_se(x) == pytest.approx(np.sqrt(2 / x.size), rel=0.05)
    assert ks_test(rng.random(1000), lambda t: np.clip(t, 0, 1))[1] > 1e-3
    with pytest.raises(ValueError):
        ks_test(rng.random(10), lambda t: t)
    assert loglog_slope([1, 10, 100], [5, 0.5, 0.05]) == pytest.approx(-1)
    z = rng.standard_normal((30_000, 2)) + 1j * rng.standard_normal((30_000, 2))
    m1, s1 = mean_se(z)
    m2, s2 = chunked_mean_se(lambda k, c: z[k * 7000 : k * 7000 + c], 30_000, 7000)
    np.testing.assert_allclose(m1, m2)
    np.testing.assert_allclose(s1, s2, rtol=1e-3)


# ---- constants -----------------------------------------------------------


def test_constants_roundtrip_and_env(tmp_path, monkeypatch):
    path = tmp_path / "c.txt"
    constants.write({"C_variance": 2.5, "C_otoc": 1.5, "C_query": 3.0, "C_otoc_budget": 4.0}, path, "test")
    assert constants.load(path)["C_variance"] == 2.5
    monkeypatch.setenv(constants.ENV_VAR, str(path))
    assert constants.get("C_otoc") == 1.5
    with pytest.raises(KeyError):
        constants.get("C_missing")
    with pytest.raises(ValueError):
        constants.parse("version = 2\nC_variance = 1")
    with pytest.raises(ValueError):
        constants.parse("version = 1\nC_variance 1")


# ---- config --------------------------------------------------------------


def test_config_validation(tmp_path):
    cfg = load_config(_cfg(tmp_path), seed=4)
    assert cfg.seed == 4 and cfg.d == 2
    assert ExperimentConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()
    for bad in ({"n": 0}, {"m": 3, "R": 3}, {"mode": "rgcm", "s": 2}, {"tasks": [{"B": 5}]}, {"bogus": 1}, {"tasks": [{"Q": 1}]}):
        with pytest.raises(ConfigError):
            load_config(_cfg(tmp_path, **bad))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "bad.json"))


# ---- experiments ---------------------------------------------------------


def test_shadow_stack_thread_invariant():
    u = X.make_unitary("haar", 2, stream(0, "unitary"))
    a = X.shadow_stack(u, CollectiveMeasurementSpec(1), 40, 1000, 3)
    b = X.shadow_stack(u, CollectiveMeasurementSpec(1), 40, 1000, 3, threads=3)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_failure_rate_report_fields():
    rng = stream(2, "tasks")
    u = X.make_unitary("haar", 2, rng)
    tasks = [X.make_task("pauli", 2.0, "haar-pure", 1, 2, rng) for _ in range(3)]
    rep = X.failure_rate_experiment(u, tasks, CollectiveMeasurementSpec(1), 64, 5, 0.5, 60, seed=1)
    for key in ("failure_rate", "per_task_failure", "per_batch_failure", "chernoff_per_task", "union_bound"):
        assert key in rep.extra
    assert 0 <= rep.extra["per_task_failure"] <= rep.extra["failure_rate"] <= 1
    assert X.per_batch_failure_bound(u, tasks, 1, 64, 0.5) > 0


def test_scan_grid_independent_of_threads():
    grid = [(2, 1, 4, 1.0, 1), (2, 2, 8, 2.0, 2)]
    a = X.scan_grid(grid, "pauli", 100, 5)
    b = X.scan_grid(grid, "pauli", 100, 5, threads=2)
    assert a == b
    assert all(p.thm1_budget > 0 and p.prop1_bound > 0 for p in a)


def test_smallest_constant():
    k = X.smallest_constant(10.0, 0.25)
    assert 10 * (2 / k + 2 / k**2) == pytest.approx(0.25)


def test_validate_suite_passes():
    results = run_suite(2, seed=0)
    assert all(r.passed for r in results), [r.line() for r in results if not r.passed]
    assert {r.name for r in results} >= {"overlap_beta_ks", "exact_variance", "expansion_vs_dense", "otoc"}


# ---- CLI -----------------------------------------------------------------


def _read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text(), newline="")))


def test_cli_learn_then_predict(tmp_path):
    cfg = _cfg(tmp_path)
    out = tmp_path / "o"
    assert main(["learn", "--config", cfg, "--seed", "3", "--out", str(out)]) == 0
    sd = ShadowData.load(out / "shadow.bin")
    assert sd.m == 600 and sd.seed == 3
    assert main(["predict", "--config", cfg, "--seed", "3", "--out", str(out)]) == 0
    rows = _read_csv(out / "predict.csv")
    assert len(rows) == 4 and {r["estimator"] for r in rows} == {"median-of-means", "direct-mean"}
    assert all(r["truth"] != "" for r in rows)
    # predicting from the saved shadow file gives identical output
    cfg2 = _cfg(tmp_path, shadow_file=str(out / "shadow.bin"))
    out2 = tmp_path / "o2"
    assert main(["predict", "--config", cfg2, "--seed", "3", "--out", str(out2)]) == 0
    assert (out / "predict.csv").read_bytes() == (out2 / "predict.csv").read_bytes()
    assert json.loads((out2 / "predict.json").read_text())[0]["schema_version"] == "1"


def test_cli_otoc_scan_validate_calibrate(tmp_path, capsys):
    cfg = _cfg(tmp_path)
    out = tmp_path / "o"
    base = ["--config", cfg, "--out", str(out)]
    assert main(["otoc"] + base) == 0
    assert _read_csv(out / "otoc.csv")[0]["task"].startswith("X/Z")
    assert main(["scan"] + base + ["--threads", "2"]) == 0
    rows = _read_csv(out / "scan.csv")
    assert tuple(rows[0].keys()) == SCAN_COLUMNS and len(rows) == 2
    assert main(["validate"] + base) == 0
    assert "checks passed" in capsys.readouterr().out
    assert main(["calibrate"] + base) == 0
    table = constants.load(out / "constants.txt")
    assert table["C_variance"] > 1
    assert len(_read_csv(out / "calibration.csv")) == 3 * 3 * 2 * 2 * 5 + 3 * 5


def test_cli_errors(tmp_path, capsys):
    assert main(["learn", "--config", str(tmp_path / "nope.json")]) == 2
    assert "config file not found" in capsys.readouterr().err
    assert main(["learn", "--config", _cfg(tmp_path, n=9)]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])

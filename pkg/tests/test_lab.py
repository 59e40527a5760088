import json

import pytest

from overshoot_lab.errors import ConfigError
from overshoot_lab.lab import CATALOG, build_config, defaults_for, read_config, run
from overshoot_lab.lab.cli import main

UNIFORM = {"family": "LatticePmf", "support": ["-2", "-1", "1", "2"], "probs": ["0.25"] * 4}


def small(experiment, **kw):
    cfg = {"experiment": experiment, "spec": UNIFORM, "seed": 3}
    cfg.update(kw)
    return cfg


def test_list_prints_catalog(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    for name in CATALOG:
        assert name in out
    assert len(CATALOG) == 16


@pytest.mark.parametrize(
    "cfg",
    [
        {"experiment": "no-such-thing", "spec": UNIFORM},
        {"spec": UNIFORM},
        {"experiment": "stationarity", "spec": {"family": "Cauchy"}},
        {"experiment": "stationarity", "spec": UNIFORM, "m": -5},
        {"experiment": "stationarity", "spec": UNIFORM, "seed": "one"},
        {"experiment": "stationarity", "spec": UNIFORM, "probes": "many"},
        {"experiment": "drift", "spec": UNIFORM, "gamma": 1.0, "probes": [1, 10], "m": 5},
    ],
)
def test_bad_configs_exit_2(cfg, tmp_path, capsys):
    assert main(["run", "--config", json.dumps(cfg), "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_unreadable_config_exit_2(tmp_path):
    assert main(["run", "--config", "{not json", "--out", str(tmp_path)]) == 2


def test_missing_threshold_is_a_config_error(tmp_path):
    cfg = small("stationarity", m=500, n=2, thresholds={"tv": None})
    cfg["thresholds"] = {}
    raw = read_config(cfg)
    built = build_config(raw, defaults_for)
    # defaults fill in the thresholds that were left out
    assert built.threshold("tv") == 0.005
    with pytest.raises(ConfigError):
        built.threshold("nonexistent")


def test_defaults_are_merged_and_hash_ignores_out():
    a = build_config(small("stationarity", out="x"), defaults_for)
    b = build_config(small("stationarity", out="y"), defaults_for)
    assert a.m == 100_000
    assert a.hash() == b.hash()
    assert build_config(small("stationarity", seed=4), defaults_for).hash() != a.hash()


def test_run_writes_results_and_tables(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(small("stationarity", m=20_000, n=3)))
    code = main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "out")])
    printed = capsys.readouterr().out
    assert code == 0
    assert "PASS stationarity." in printed
    res = json.loads((tmp_path / "out" / "results.json").read_text())
    assert res["experiment"] == "stationarity"
    assert res["passed"] is True
    assert res["seed"] == 3
    assert set(res) >= {"criteria", "statistics", "reports", "censored", "config_hash", "tables"}
    for table in res["tables"]:
        assert (tmp_path / "out" / table).read_text().count("\n") >= 2
    for rep in res["reports"]:
        assert set(rep) >= {"statistic", "value", "stderr", "n", "seed", "config_hash"}


def test_seed_override_from_cli(tmp_path):
    main(["run", "--config", json.dumps(small("q-balance")), "--seed", "9", "--out", str(tmp_path)])
    assert json.loads((tmp_path / "results.json").read_text())["seed"] == 9


def test_rerun_is_byte_identical(tmp_path):
    cfg = small("compose", m=20_000, m_prime=20_000, steps=[1, 2], thresholds={"tv": {"1": 0.02, "2": 0.03}})
    run(cfg, out=str(tmp_path / "a"))
    run(cfg, out=str(tmp_path / "b"))
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_different_seeds_differ(tmp_path):
    _, a = run(small("stationarity", m=5000, n=2), out=str(tmp_path / "a"))
    _, b = run(small("stationarity", m=5000, n=2, seed=4), out=str(tmp_path / "b"))
    assert a["statistics"] != b["statistics"]


def test_guard_exhaustion_exits_3(tmp_path, capsys):
    cfg = {"experiment": "stationarity", "spec": {"family": "SymmetricPareto", "alpha": 1.5}, "m": 300, "n": 2, "guard": 2}
    assert main(["run", "--config", json.dumps(cfg), "--out", str(tmp_path)]) == 3
    assert "guard" in capsys.readouterr().err


def test_failing_criterion_exits_1(tmp_path):
    # an impossible tolerance must fail rather than pass
    cfg = small("stationarity", m=2000, n=2, thresholds={"tv": 1e-9})
    code, res = run(cfg, out=str(tmp_path))
    assert code == 1
    assert res["passed"] is False


def test_q_balance_writes_kernel_csv(tmp_path):
    code, res = run({"experiment": "q-balance"}, out=str(tmp_path))
    assert code == 0
    assert "q_kernel_spec0.csv" in res["tables"]
    assert (tmp_path / "q_kernel_spec0.csv").read_text().startswith("x,y,prob\n")

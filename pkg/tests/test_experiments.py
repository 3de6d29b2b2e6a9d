import json

import numpy as np
import pytest

from simdetect.experiments import (
    ExperimentConfig,
    Sweep,
    TABLE1,
    builtin_configs,
    check_rows,
    config_from_dict,
    emit_outputs,
    load_config,
    power_table_csv,
    replicate_dataset,
    run_experiment,
)
from simdetect.experiments.output import COLUMNS
from simdetect.experiments.reference import reference_power
from simdetect.experiments.runner import cell_seed, group_id, group_key

TINY = {
    "experiment": {"name": "tiny", "n": 200, "replications": 6, "null_replications": 20, "master_seed": 3, "sparse_mode": "exact",
                   "methods": ["SSS", "SSSa", "HC", "psi1", "psi2", "psi3"]},
    "model": {"link": "III", "s": 2},
    "covariance": {"kind": "toeplitz", "p": 12},
    "sweep": [{"parameter": "rho", "values": [0.0, 0.5]}],
}


def tiny(**kw):
    doc = json.loads(json.dumps(TINY))
    doc["experiment"].update(kw)
    return config_from_dict(doc)


def test_builtin_configs_load():
    names = builtin_configs()
    assert {"table1", "null_level", "example_cubic", "model_v_kappa", "snr_models_vi_vii", "smoke"} <= set(names)
    for name in names:
        cfg = load_config(name)
        assert cfg.cells()


def test_table1_cells_and_profiles():
    cfg = load_config("table1")
    cells = cfg.cells()
    assert len(cells) == 4 * 2 * 5
    assert {c.model.s for c in cells if c.model.link.value == "II"} == {10}
    desk = load_config("table1", "desk").cells()
    assert len(desk) == 60
    assert {c.replications for c in desk if c.cov.p == 1000} == {50}
    assert {c.replications for c in desk if c.cov.p != 1000} == {100}
    full = load_config("table1", "full").cells()
    assert {c.cov.p for c in full} == {100, 500, 1000, 2000}
    for c in full:
        assert reference_power(c.model.link.value, c.cov.p, c.cov.rho, c.cov.cov_type, "SSS") is not None
    assert len(TABLE1) == 80


def test_overrides_and_unknown_keys():
    cfg = load_config("table1", replications=7, master_seed=None)
    assert cfg.replications == 7 and cfg.master_seed == 20190601
    with pytest.raises(ValueError):
        load_config("table1", "nonexistent")
    with pytest.raises(ValueError):
        config_from_dict({"experiment": {"bogus": 1}})
    with pytest.raises(FileNotFoundError):
        load_config("no_such_config")


def test_sweep_validation():
    with pytest.raises(ValueError):
        Sweep(parameter="colour", values=(1, 2))
    with pytest.raises(ValueError):
        Sweep()
    with pytest.raises(ValueError):
        ExperimentConfig(replications=0)
    with pytest.raises(ValueError):
        ExperimentConfig(methods=("SSS", "magic"))


def test_cell_expansion_order():
    cfg = config_from_dict({**TINY, "sweep": [{"parameter": "link", "values": ["I", "III"]}, {"parameter": "rho", "values": [0.0, 0.5]}]})
    labels = [(c.model.link.value, c.cov.rho) for c in cfg.cells()]
    assert labels == [("I", 0.0), ("I", 0.5), ("III", 0.0), ("III", 0.5)]
    assert [c.index for c in cfg.cells()] == [0, 1, 2, 3]


def test_null_config_needs_ks():
    cfg = config_from_dict({"model": {"link": "null"}})
    with pytest.raises(ValueError):
        cfg.ks_for(cfg.model)
    assert load_config("null_level").ks_for(load_config("null_level").model) == 5


def test_seed_derivation_is_pure():
    a = np.random.default_rng(cell_seed(5, 2, 3)).standard_normal(4)
    b = np.random.default_rng(cell_seed(5, 2, 3)).standard_normal(4)
    c = np.random.default_rng(cell_seed(5, 3, 2)).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    cfg = tiny()
    cell = cfg.cells()[1]
    d1, d2 = replicate_dataset(cfg, cell, 4), replicate_dataset(cfg, cell, 4)
    assert d1.x.tobytes() == d2.x.tobytes()
    assert not np.array_equal(replicate_dataset(cfg, cell, 5).y, d1.y)


def test_groups_share_null_setup():
    cfg = config_from_dict({**TINY, "sweep": [{"cases": [{"link": "I", "s": 2}, {"link": "III", "s": 2}]}]})
    c1, c2 = cfg.cells()
    # same ks, same covariance: one null distribution
    assert group_id(group_key(cfg, c1)) == group_id(group_key(cfg, c2))
    other = tiny().cells()
    assert group_id(group_key(cfg, c1)) != group_id(group_key(cfg, other[1]))
    # a link sweep brings each link's own s, hence a different ks
    by_link = config_from_dict({**TINY, "sweep": [{"parameter": "link", "values": ["I", "III"]}]}).cells()
    assert [c.model.s for c in by_link] == [7, 5]


def test_run_rows_and_outputs(tmp_path):
    cfg = tiny()
    report = run_experiment(cfg)
    assert not report.failures
    assert len(report.rows) == 2 * 6
    for row in report.rows:
        assert 0.0 <= row["power"] <= 1.0
        assert row["power"] * row["replications"] == row["rejections"]
        assert row["master_seed"] == 3
    sss = {r["rho"]: r for r in report.rows if r["method"] == "SSS"}
    psi = {r["rho"]: r for r in report.rows if r["method"] in ("psi1", "psi2")}
    assert set(sss) == {0.0, 0.5} and psi
    written = emit_outputs(report, tmp_path / "out")
    lines = (tmp_path / "out" / "power_table.csv").read_text().splitlines()
    assert lines[0] == ",".join(COLUMNS)
    assert len(lines) == 13
    names = {p.name for p in written}
    assert "cell_0000.jsonl" in names and "cell_0001.jsonl" in names
    assert any(n.startswith("SSS_vs_rho") for n in names)
    raw = [json.loads(line) for line in (tmp_path / "out" / "raw" / "cell_0000.jsonl").read_text().splitlines()]
    assert [r["rep"] for r in raw] == list(range(6))
    assert set(raw[0]["reject"]) == {"psi1", "psi2", "psi3", "SSS", "SSSa", "HC"}
    curve = (tmp_path / "out" / "plots" / next(n for n in names if n.startswith("SSS_vs_rho"))).read_text().splitlines()
    assert curve[0] == "rho\tpower" and len(curve) == 3


def test_rerun_byte_identical(tmp_path):
    cfg = tiny()
    for d in ("a", "b"):
        emit_outputs(run_experiment(cfg), tmp_path / d)
    for name in ("power_table.csv", "report.json", "raw/cell_0001.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_select_keeps_full_sweep_seeds():
    cfg = tiny()
    full = run_experiment(cfg)
    part = run_experiment(cfg, select=lambda c: c.cov.rho == 0.5)
    assert part.rows == [r for r in full.rows if r["rho"] == 0.5]


def test_per_dataset_calibration_runs():
    cfg = tiny(calibration_mode="per_dataset", null_replications=20, replications=2)
    report = run_experiment(cfg, select=lambda c: c.index == 0)
    assert not report.failures and not report.thresholds
    assert {r["replications"] for r in report.rows} == {2}


def test_failures_recorded_not_fatal():
    doc = json.loads(json.dumps(TINY))
    doc["covariance"] = {"kind": "blocked", "p": 12, "rho": 0.2}
    doc["sweep"] = [{"parameter": "rho", "values": [-0.5, 0.2]}]
    report = run_experiment(config_from_dict(doc))
    assert [f["cell"] for f in report.failures] == [0]
    assert "NotPositiveDefinite" in report.failures[0]["error"]
    assert {r["cell"] for r in report.rows} == {1}


def test_empty_report_header_only(tmp_path):
    doc = json.loads(json.dumps(TINY))
    doc["covariance"] = {"kind": "blocked", "p": 12, "rho": -0.5}
    doc["sweep"] = []
    report = run_experiment(config_from_dict(doc))
    assert not report.rows and report.failures
    assert power_table_csv(report) == ",".join(COLUMNS) + "\n"
    emit_outputs(report, tmp_path)
    assert (tmp_path / "power_table.csv").read_text() == ",".join(COLUMNS) + "\n"


def test_reference_flags():
    rows = [
        {"model": "I", "p": 100, "rho": 0.0, "cov_type": "i", "method": "SSS", "power": 0.9},
        {"model": "I", "p": 100, "rho": 0.0, "cov_type": "i", "method": "SSS", "power": 0.85},
        {"model": "I", "p": 100, "rho": 0.0, "cov_type": "i", "method": "HC", "power": 0.40},
        {"model": "I", "p": 100, "rho": 0.0, "cov_type": "i", "method": "SSSa", "power": 0.0},
        {"model": "V", "p": 100, "rho": 0.0, "cov_type": "i", "method": "SSS", "power": 0.0},
    ]
    flags = check_rows(rows)
    assert [(f.method, f.power) for f in flags] == [("SSS", 0.85), ("HC", 0.40)]
    assert flags[0].to_dict()["deviation"] == pytest.approx(-0.15)
    assert TABLE1[("I", 100, 0.0, "i")] == (1.00, 0.16)


def test_parallel_matches_serial():
    cfg = tiny()
    a, b = run_experiment(cfg, workers=1), run_experiment(cfg, workers=3)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)
    assert a.records == b.records

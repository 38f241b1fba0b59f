import json

import numpy as np
import pytest
import yaml

from planar_degen.cli import EXIT_AUDIT, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main, report
from planar_degen.io import ConfigError, apply_overrides, load_config, svg_heatmap, svg_scatter, validate_config, write_csv


def _write(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return p


def _run(tmp_path, cfg, *overrides, out="out"):
    p = _write(tmp_path, cfg)
    code = main(["run", str(p), *overrides, "--out", str(tmp_path / out)])
    man = json.loads((tmp_path / out / "manifest.json").read_text())
    return code, man


def test_validate_rejects_unknown_and_missing():
    with pytest.raises(ConfigError):
        validate_config({"scenario": "solve", "field": {"kind": "identity"}, "boundary": {"kind": "cos"}, "bogus": 1})
    with pytest.raises(ConfigError):
        validate_config({"scenario": "solve", "field": {"kind": "identity"}})
    with pytest.raises(ConfigError):
        validate_config({"scenario": "nope"})


def test_overrides():
    cfg = apply_overrides({"scenario": "solve", "mesh": {"h": 0.1}}, ["mesh.h=0.25", "seed=3"])
    assert cfg["mesh"]["h"] == 0.25 and cfg["seed"] == 3
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])


def test_load_config_errors(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario: [unclosed")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_counterexample_bundle(tmp_path):
    code, man = _run(tmp_path, {"scenario": "counterexample"})
    assert code == EXIT_OK
    names = {a["name"] for a in man["audits"]}
    assert {"|f_z|=1", "det grad F", "g constraints"} <= names
    text = report(tmp_path / "out")
    for row in ("|f_z|=1", "det grad F", "g constraints"):
        line = next(l for l in text.splitlines() if l.startswith(row))
        assert "PASS" in line
    listed = {f["name"] for f in man["files"]}
    assert "counterexample_audit.json" in listed


def test_certify_p4(tmp_path):
    cfg = yaml.safe_load(open("demos/certify_p4.yaml"))
    code, man = _run(tmp_path, cfg)
    assert code == EXIT_OK
    cert = json.loads((tmp_path / "out" / "certificate.json").read_text())
    assert cert["K"] >= 1 and cert["log_delta_final"] < 0


def test_config_error_exit(tmp_path):
    code, man = _run(tmp_path, {"scenario": "solve", "field": {"kind": "p_laplacian"}, "boundary": {"kind": "cos", "mode": 2}})
    assert code == EXIT_CONFIG
    assert man["errors"][0]["kind"] == "config"
    p = _write(tmp_path, {"scenario": "solve", "extra": 1}, "bad.yaml")
    assert main(["run", str(p), "--out", str(tmp_path / "bad")]) == EXIT_CONFIG
    assert (tmp_path / "bad" / "manifest.json").exists()


def test_numerical_failure_exit(tmp_path):
    cfg = {
        "scenario": "solve",
        "field": {"kind": "p_laplacian", "params": {"p": 4}},
        "mesh": {"h": 0.125},
        "boundary": {"kind": "cos", "mode": 2},
        "solver": {"tol": 1e-15, "max_iter": 1, "strategy": "newton"},
    }
    code, man = _run(tmp_path, cfg)
    assert code == EXIT_NUMERIC and man["errors"][0]["kind"] == "numerical"


def test_audit_failure_exit(tmp_path):
    cfg = {"scenario": "transform", "field": {"kind": "g0_cubic"}, "transform": {"points": 50, "tol": 1e-300}}
    code, man = _run(tmp_path, cfg)
    assert code == EXIT_AUDIT
    assert "FAIL" in report(tmp_path / "out")


def test_solve_report_and_determinism(tmp_path):
    cfg = {"scenario": "solve", "field": {"kind": "p_laplacian", "params": {"p": 4}, "chain": [{"op": "mollify", "eps": 0.1}]},
           "mesh": {"h": 0.125}, "boundary": {"kind": "cos", "mode": 3}, "seed": 1}
    c1, m1 = _run(tmp_path, cfg, out="a")
    c2, m2 = _run(tmp_path, cfg, out="b")
    assert c1 == c2 == EXIT_OK
    assert m1["files"] == m2["files"]
    text = report(tmp_path / "a")
    for key in ("residual", "iterations", "lipschitz"):
        assert key in text


def test_classify_report(tmp_path):
    cfg = {"scenario": "classify", "field": {"kind": "counterexample_s6"}, "grid": {"box": [-1, 1, -1, 1], "step": 0.1},
           "scales": [0.1, 0.01, 0.001], "thresholds": {"lambda": 0.05, "Lambda": 20}}
    code, man = _run(tmp_path, cfg)
    assert code == EXIT_OK
    assert "bad-set components" in report(tmp_path / "out")


def test_other_scenarios(tmp_path):
    code, _ = _run(tmp_path, {"scenario": "catalog", "catalog": {"pairs": 2000}}, out="cat")
    assert code == EXIT_OK
    cfg = {"scenario": "diagnose", "field": {"kind": "identity"}, "mesh": {"h": 0.0625}, "boundary": {"kind": "cos", "mode": 2},
           "diagnose": {"probe": {"xi0": [2.25, 0.0], "rho": 0.25}, "cacciopoli": {"side": "O_lambda", "threshold": 1.0}}}
    code, man = _run(tmp_path, cfg, out="diag")
    assert code == EXIT_OK
    assert (tmp_path / "diag" / "probe.svg").exists()


def test_report_missing_manifest(tmp_path):
    with pytest.raises(ConfigError):
        report(tmp_path)
    assert main(["report", str(tmp_path)]) == EXIT_CONFIG


def test_env_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("PLANAR_DEGEN_OUTPUT", str(tmp_path / "root"))
    p = _write(tmp_path, {"scenario": "transform", "field": {"kind": "identity"}, "transform": {"points": 10}}, "tr.yaml")
    assert main(["run", str(p)]) == EXIT_OK
    assert (tmp_path / "root" / "tr" / "manifest.json").exists()


def test_writers(tmp_path):
    write_csv(tmp_path / "a.csv", ["x", "y"], [[1.0, 2.0]])
    assert (tmp_path / "a.csv").read_text().splitlines()[1] == "1.0,2.0"
    svg_scatter(tmp_path / "s.svg", np.random.default_rng(0).random((20, 2)), circles=[((0.5, 0.5), 0.1)])
    svg_heatmap(tmp_path / "h.svg", np.arange(1, 13, dtype=float).reshape(3, 4), (0, 1, 0, 1))
    assert (tmp_path / "s.svg").read_text().startswith("<svg")
    assert "<rect" in (tmp_path / "h.svg").read_text()

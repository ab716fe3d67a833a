import json
from pathlib import Path

import pytest

from twopoint.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, digest, main
from twopoint.config import load_config, parse_config
from twopoint.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "scripts" / "configs"


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run(tmp_path, experiment, cfg, *extra):
    out = tmp_path / "out"
    code = main([experiment, "--config", str(cfg), "--out", str(out), *extra])
    rep = json.loads((out / "report.json").read_text()) if (out / "report.json").exists() else None
    return code, rep


def test_shipped_configs_parse():
    for p in CONFIGS.glob("*.toml"):
        load_config(p)


def test_unknown_key_is_config_error(tmp_path, capsys):
    cfg = write(tmp_path, 'experiment = "scan"\n[scan]\nn_pairs = 10\nbogus = 1\n')
    assert main(["scan", "--config", str(cfg)]) == EXIT_CONFIG
    assert "bogus" in capsys.readouterr().err


def test_type_and_range_errors():
    with pytest.raises(ConfigError):
        parse_config({"experiment": "scan", "scan": {"n_pairs": "many"}})
    with pytest.raises(ConfigError):
        parse_config({"experiment": "scan", "domain": {"order": 4}})
    with pytest.raises(ConfigError):
        parse_config({"experiment": "unknown"})
    with pytest.raises(ConfigError):
        parse_config({"experiment": "scan", "manifold": {"factors": [], "extra": 1}})


def test_malformed_factor_exits_2(tmp_path):
    cfg = write(tmp_path, 'experiment = "verify-geometry"\n[manifold]\nfactors = [{type = "torus", dim = 2}]\n')
    assert main(["verify-geometry", "--config", str(cfg)]) == EXIT_CONFIG


def test_invalid_domain_exits_2(tmp_path):
    cfg = write(tmp_path, 'experiment = "scan"\n[domain]\ncomponents = [{kind = "spherical_cap", r0 = 2.0}]\n'
                          'resolution = [[8, 16]]\n')
    assert main(["scan", "--config", str(cfg)]) == EXIT_CONFIG


def test_experiment_mismatch_exits_2(tmp_path):
    assert main(["solve", "--config", str(CONFIGS / "saddle_scan.toml"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_saddle_scan_exits_1(tmp_path, capsys):
    code, rep = run(tmp_path, "scan", CONFIGS / "saddle_scan.toml")
    assert code == EXIT_FAIL
    assert rep["results"]["report"]["verdict"] == "violation_found"
    assert "min_Z" in capsys.readouterr().err


def test_kfields_product_passes_and_reports_slopes(tmp_path):
    code, rep = run(tmp_path, "verify-kfields", CONFIGS / "kfields_product.toml")
    assert code == EXIT_OK, rep["failing"]
    names = {c["name"] for c in rep["checks"]}
    assert "fd_convergence_slope" in names
    slope = next(c for c in rep["checks"] if c["name"] == "fd_convergence_slope")
    assert slope["value"] >= 1.9
    assert (tmp_path / "out" / "samples.csv").exists()


def test_report_is_deterministic(tmp_path):
    cfg = CONFIGS / "torsion_interval_scan.toml"
    out = tmp_path / "o"
    texts, samples = [], []
    for _ in range(2):
        assert main(["scan", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        rep = json.loads((out / "report.json").read_text())
        assert rep["digest"] == digest(rep)
        lines = (out / "report.json").read_text().splitlines()
        texts.append([ln for ln in lines if '"timestamp"' not in ln])
        samples.append((out / "samples.csv").read_bytes())
    assert texts[0] == texts[1]
    assert samples[0] == samples[1]


def test_seed_override(tmp_path):
    code, rep = run(tmp_path, "verify-geometry", CONFIGS / "geometry_sphere.toml", "--seed", "7")
    assert code == EXIT_OK and rep["seed"] == 7 and rep["schema_version"] == 1

import json
import os
from pathlib import Path

import numpy as np
import pytest
import yaml

from llmo.cli import main
from llmo.config import apply_overrides, from_dict, load_config
from llmo.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.yaml")))
def test_shipped_configs_validate(name):
    cfg = load_config(CONFIGS / name)
    assert cfg.hash() == load_config(CONFIGS / name).hash()


def test_all_problems_reported_at_once():
    raw = {"scenario": "nope", "P": 0, "samplers": ["fifo"], "bogus": 1,
           "agents": [{"kind": "http"}, {"kind": "warp"}]}
    with pytest.raises(ConfigError) as info:
        from_dict(raw)
    text = str(info.value)
    for frag in ("scenario", "P:", "fifo", "bogus", "endpoint", "warp"):
        assert frag in text


def test_secret_in_key_env_rejected():
    raw = {"agents": [{"kind": "http", "endpoint": "http://x", "model": "m", "api_key_env": "sk-abc123!"}]}
    with pytest.raises(ConfigError):
        from_dict(raw)


def test_overrides():
    raw = {"P": 5, "agents": [{"kind": "exploring"}]}
    out = apply_overrides(raw, ["P=3", "agents.0.epsilon=0.5", "theory.T=20"])
    assert out == {"P": 3, "agents": [{"kind": "exploring", "epsilon": 0.5}], "theory": {"T": 20}}
    assert raw["P"] == 5
    with pytest.raises(ConfigError):
        apply_overrides(raw, ["novalue"])


def test_hash_ignores_output_and_workers():
    a = from_dict({"output": "a", "workers": 1})
    b = from_dict({"output": "b", "workers": 4})
    c = from_dict({"T": 7})
    assert a.hash() == b.hash() != c.hash()


def test_sampler_alias_and_yaml_round_trip():
    cfg = from_dict({"sampler": "lifo"})
    assert cfg.samplers == ["lifo"]
    again = from_dict(yaml.safe_load(cfg.to_yaml()))
    assert again.hash() == cfg.hash()


def test_cli_print_config(capsys):
    assert main(["run", str(CONFIGS / "synthetic_grid.yaml"), "--T", "7", "--print-config"]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["T"] == 7


def test_cli_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario: nope\n")
    assert main(["run", str(bad)]) == 2
    assert "scenario" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.yaml")]) == 2


def test_cli_run_and_analyze(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["run", str(CONFIGS / "synthetic_grid.yaml"), "-o", str(out), "--T", "15",
               "--seeds", "[0, 1]", "--fixtures", "1", "--set", "baselines=[brute-force]"])
    assert rc == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["summary"]["runs"] == 2 * 3
    for f in ("config.yaml", "rates.json", "summary.json", "aggregate_llmo-elitist.csv",
              "aggregate_llmo-lifo.csv", "aggregate_brute-force.csv", "runs/llmo-elitist/s1_f0.csv"):
        assert (out / f).exists(), f
    assert main(["analyze", str(out)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert set(report["fits"]) == {"llmo-elitist", "llmo-lifo", "brute-force"}


def test_cli_refuses_foreign_output_dir(tmp_path):
    out = str(tmp_path / "o")
    base = ["run", str(CONFIGS / "synthetic_grid.yaml"), "-o", out, "--fixtures", "1", "--seeds", "[0]",
            "--set", "baselines=[]", "--sampler", "elitist"]
    assert main(base + ["--T", "3"]) == 0
    assert main(base + ["--T", "4"]) == 2


def test_cli_verify_theory_small(tmp_path, capsys):
    rc = main(["verify-theory", str(CONFIGS / "theory.yaml"), "-o", str(tmp_path),
               "--set", "theory.policies=3", "--set", "theory.mc_runs=20000"])
    text = capsys.readouterr().out
    assert rc == 0, text
    assert text.count("PASS") == 5
    assert (tmp_path / "theory_report.json").exists() and (tmp_path / "gap_eigen.csv").exists()


def test_http_agents_need_network_flag(tmp_path):
    cfg = tmp_path / "h.yaml"
    cfg.write_text(yaml.safe_dump({"scenario": "ifc-ee", "D": 2, "T": 1, "fixtures": 1,
                                   "agents": [{"kind": "http", "endpoint": "http://127.0.0.1:9", "model": "m"}],
                                   "output": str(tmp_path / "o")}))
    assert main(["run", str(cfg)]) == 2


def test_local_baseline_needs_a_solver():
    with pytest.raises(ConfigError):
        from_dict({"scenario": "mmimo-ee", "D": 3, "baselines": ["local"]})

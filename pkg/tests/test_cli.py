import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from critlab.cli import MODELS, TOP_KEYS, ConfigError, main, parse_config

SMALL = {
    "ou": {"kappa": 1.0, "n_steps": 2000},
    "branching": {"R0": 0.9, "n_runs": 2000},
    "sweep": {"mu": 1.0, "gamma": 1.0, "t_max": 20.0, "system_size": 1000},
    "glv": {"n": 10, "sigma_a": 0.3, "t_max": 200.0},
    "timeliness": {"network": "random-regular", "B": 3.0, "n": 100, "n_steps": 200, "record": True},
    "prodnet": {"n": 10, "n_entries": 5},
    "inflation": {"J": 0.5, "n_firms": 2000, "t_max": 300.0, "burn_in": 50.0},
    "arch": {"kernel": "exponential", "g": 0.5, "beta": 0.5, "n_steps": 2000},
    "hawkes": {"kernel": "exponential", "g": 0.5, "beta": 1.0, "t_max": 200.0},
}


def write_cfg(tmp_path, model, params, replicas=2, seed=7, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps({"model": model, "params": params, "seed": seed, "replicas": replicas}, indent=2))
    return p


def csv_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_every_model_has_a_small_config():
    assert set(SMALL) == set(MODELS)


@pytest.mark.parametrize("model", sorted(SMALL))
def test_determinism_across_threads(tmp_path, model):
    cfg = write_cfg(tmp_path, model, SMALL[model])
    outs = []
    for i, threads in enumerate(("1", "8", "1")):
        out = tmp_path / f"out{i}"
        assert main(["run", str(cfg), "--output-dir", str(out), "--threads", threads]) == 0
        outs.append(csv_bytes(out))
    assert outs[0] and outs[0] == outs[1] == outs[2]
    assert (tmp_path / "out0" / "replica_001").is_dir()


def test_manifest_hashes(tmp_path):
    import hashlib

    cfg = write_cfg(tmp_path, "ou", SMALL["ou"], replicas=1)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["tool"] == "criticality-lab" and man["config"]["model"] == "ou"
    assert {f["path"] for f in man["files"]} == {"series.csv", "summary.csv"}
    for f in man["files"]:
        assert hashlib.sha256((out / f["path"]).read_bytes()).hexdigest() == f["sha256"]


def test_scan(tmp_path):
    cfg = write_cfg(tmp_path, "inflation", SMALL["inflation"], replicas=1)
    out = tmp_path / "scan"
    assert main(["scan", str(cfg), "--output-dir", str(out), "--param", "J", "--values", "0,0.3,0.6"]) == 0
    lines = (out / "summary.csv").read_text().splitlines()
    assert lines[0].startswith("J,") and len(lines) == 4
    assert (out / "J=0.3").is_dir()
    col = lines[0].split(",").index("mean_inflation")
    vals = [float(x.split(",")[col]) for x in lines[1:]]
    assert vals[0] < vals[1] < vals[2]


def test_scan_errors(tmp_path):
    cfg = write_cfg(tmp_path, "ou", SMALL["ou"], replicas=1)
    out = str(tmp_path / "s")
    assert main(["scan", str(cfg), "--output-dir", out, "--param", "kappa", "--values", ""]) == 2
    assert main(["scan", str(cfg), "--output-dir", out, "--param", "colour", "--values", "1"]) == 2


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "model": "branching",\n  "params": {\n     "R0": 1.0,\n     "colour": 3\n  },\n  "seed": 1\n}')
    assert main(["run", str(bad), "--output-dir", str(tmp_path / "o")]) == 2
    assert f"{bad}:5:" in capsys.readouterr().err
    broken = tmp_path / "broken.json"
    broken.write_text('{\n  "model": "ou",\n  "params": {"kappa": 1.0,}\n}')
    assert main(["run", str(broken), "--output-dir", str(tmp_path / "o")]) == 2
    assert ":3" in capsys.readouterr().err
    unstable = write_cfg(tmp_path, "arch", {"kernel": "exponential", "g": 1.2, "beta": 0.5}, replicas=1, name="u.json")
    assert main(["run", str(unstable), "--output-dir", str(tmp_path / "o")]) == 3
    wrong = write_cfg(tmp_path, "ou", {"kappa": -1.0}, replicas=1, name="w.json")
    assert main(["run", str(wrong), "--output-dir", str(tmp_path / "o")]) == 2
    missing = write_cfg(tmp_path, "ou", {}, replicas=1, name="m.json")
    assert main(["run", str(missing), "--output-dir", str(tmp_path / "o")]) == 2
    noout = write_cfg(tmp_path, "ou", SMALL["ou"], replicas=1, name="n.json")
    assert main(["run", str(noout)]) == 2


def test_threads_from_environment(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, "branching", SMALL["branching"])
    monkeypatch.setenv("CRITLAB_THREADS", "4")
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "a")]) == 0
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["threads"] == 4
    monkeypatch.setenv("CRITLAB_THREADS", "zero")
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "b")]) == 2


@given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=12))
@settings(max_examples=50, suppress_health_check=[HealthCheck.function_scoped_fixture])
def test_unknown_keys_rejected(key):
    schema = MODELS["ou"][0]
    if key not in schema:
        with pytest.raises(ConfigError, match="unknown"):
            parse_config({"model": "ou", "params": {"kappa": 1.0, key: 1}, "seed": 0})
    if key not in TOP_KEYS:
        with pytest.raises(ConfigError):
            parse_config({"model": "ou", "params": {"kappa": 1.0}, "seed": 0, key: 1})

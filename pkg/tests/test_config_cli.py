from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from instrbench import cli, config
from instrbench import instrument as inst
from instrbench.config import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

FLIP_DOC = {
    "d": 2,
    "n": 1,
    "m": 50,
    "num_sequences": 250,
    "seed": 2024,
    "noise_model": {
        "type": "stochastic",
        "rates": [{"a": [0], "b": [0], "p": 0.95}, {"a": [1], "b": [1], "p": 0.05}],
    },
    "c_patterns": ["alternating", "tail"],
}


def write_config(tmp_path, doc, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return path


def test_shipped_configs_parse():
    for path in CONFIGS.glob("*.yaml"):
        cfg = config.load_config(path)
        assert cfg.d == 2 and config.build_instrument(cfg, path.parent).is_valid()


def test_config_roundtrip():
    cfg = config.parse_config(FLIP_DOC)
    again = config.parse_config(yaml.safe_load(config.dump_config(cfg)))
    assert again == cfg
    assert config.config_hash(again) == config.config_hash(cfg)


@settings(max_examples=30, deadline=None)
@given(
    st.sampled_from([(2, 1), (3, 1), (2, 2)]),
    st.integers(1, 100),
    st.integers(1, 10**6),
    st.integers(0, 2**64 - 1),
    st.floats(0.5, 1.0),
)
def test_config_roundtrip_property(dims, m, R, seed, p00):
    d, n = dims
    doc = {
        "d": d,
        "n": n,
        "m": m,
        "num_sequences": R,
        "seed": seed,
        "noise_model": {
            "type": "stochastic",
            "rates": [{"a": 0, "b": 0, "p": p00}, {"a": 1, "b": 0, "p": 1 - p00}],
        },
        "c_patterns": [[0, 1]] if m >= 2 else [],
    }
    cfg = config.parse_config(doc)
    assert config.parse_config(yaml.safe_load(config.dump_config(cfg))) == cfg


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"num_sequences": 0}, "num_sequences"),
        ({"m": -1}, "m"),
        ({"d": 1}, "d"),
        ({"seed": "x"}, "seed"),
        ({"extra": 1}, "extra"),
        ({"noise_model": {"type": "magic"}}, "noise_model.type"),
        ({"noise_model": {"type": "stochastic", "rates": [{"a": 0, "b": 0, "p": 0.5}]}}, "noise_model.rates"),
        ({"noise_model": {"type": "stochastic", "rates": [{"a": [0, 1], "b": 0, "p": 1.0}]}}, "noise_model.rates[0].a"),
        ({"c_patterns": ["zigzag"]}, "c_patterns[0]"),
        ({"noise_model": {"type": "pre_post", "pre": {"unitary": [[1, 1], [0, 1]]}}}, "noise_model.pre.unitary"),
    ],
)
def test_invalid_config_names_field(patch, field):
    doc = dict(FLIP_DOC, **patch)
    with pytest.raises(ConfigError) as info:
        config.parse_config(doc)
    assert str(info.value).startswith(field)


def test_missing_field():
    doc = dict(FLIP_DOC)
    del doc["seed"]
    with pytest.raises(ConfigError, match="^seed"):
        config.parse_config(doc)


def test_pre_post_noise_model():
    doc = dict(FLIP_DOC)
    doc["noise_model"] = {
        "type": "pre_post",
        "pre": {"weyl": [{"x": 1, "z": 0, "p": 0.02}], "unitary": [[1, 0], [0, [0.0, 1.0]]]},
        "post": {"kraus": [[[1, 0], [0, 0.9]], [[0, 0], [0, 0.4358898943540673]]]},
        "confusion": [[0.98, 0.03], [0.02, 0.97]],
    }
    cfg = config.parse_config(doc)
    M = config.build_instrument(cfg)
    assert M.is_valid()
    assert 0 < inst.error_rate(inst.randomly_compile(M)) < 0.2


def test_branches_noise_model_from_file(tmp_path):
    M = inst.random_instrument(2, 1, np.random.default_rng(0))
    (tmp_path / "inst.json").write_text(M.dumps())
    doc = dict(FLIP_DOC, noise_model={"type": "branches", "file": "inst.json"})
    path = write_config(tmp_path, doc)
    cfg = config.load_config(path)
    assert config.build_instrument(cfg, tmp_path).allclose(M)
    inline = dict(FLIP_DOC, noise_model={"type": "branches", "instrument": M.to_dict()})
    assert config.build_instrument(config.parse_config(inline)).allclose(M)


def test_cli_simulate_is_deterministic(tmp_path):
    path = write_config(tmp_path, FLIP_DOC)
    assert cli.main(["simulate", "--config", str(path), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["simulate", "--config", str(path), "--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    a = (tmp_path / "a" / "dataset.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "dataset.jsonl").read_bytes()
    assert len(a.splitlines()) == 250
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 2024 and manifest["dataset_sha256"]
    assert cli.main(["simulate", "--config", str(path), "--out", str(tmp_path / "c"), "--seed-override", "7"]) == 0
    assert (tmp_path / "c" / "dataset.jsonl").read_bytes() != a


def test_cli_fit_readout_flip(tmp_path, capsys):
    path = write_config(tmp_path, FLIP_DOC)
    cli.main(["simulate", "--config", str(path), "--out", str(tmp_path)])
    assert cli.main(["fit", "--dataset", str(tmp_path / "dataset.jsonl"), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "fit.json").read_text())
    assert 0.94 <= doc["fit"]["nu00"] <= 0.96
    assert doc["provenance"]["manifest_sha256"] == cli.sha256_file(tmp_path / "manifest.json")
    rows = (tmp_path / "decay_curve.tsv").read_text().splitlines()
    assert rows[0] == "m_prime\tp_hat\tshots\tstderr" and len(rows) == 51


def test_cli_fit_ideal_gives_unit_decay(tmp_path):
    doc = dict(FLIP_DOC, noise_model={"type": "ideal"}, m=10, num_sequences=20)
    path = write_config(tmp_path, doc)
    cli.main(["simulate", "--config", str(path), "--out", str(tmp_path)])
    cli.main(["fit", "--dataset", str(tmp_path / "dataset.jsonl"), "--out", str(tmp_path)])
    fit = json.loads((tmp_path / "fit.json").read_text())["fit"]
    assert fit["mu"] == 1.0 and fit["epsilon"] == 0.0


def test_cli_fit_rejects_short_curve(tmp_path):
    doc = dict(FLIP_DOC, m=1, num_sequences=20, c_patterns=[])
    path = write_config(tmp_path, doc)
    cli.main(["simulate", "--config", str(path), "--out", str(tmp_path)])
    assert cli.main(["fit", "--dataset", str(tmp_path / "dataset.jsonl"), "--out", str(tmp_path)]) == 2


def test_cli_characterize(tmp_path):
    doc = dict(FLIP_DOC, m=20, num_sequences=2000)
    path = write_config(tmp_path, doc)
    cli.main(["simulate", "--config", str(path), "--out", str(tmp_path)])
    ds = str(tmp_path / "dataset.jsonl")
    args = ["characterize", "--out", str(tmp_path)]
    for role in cli.ROLES:
        args += ["--dataset", f"{role}={ds}"]
    assert cli.main(args) == 0
    res = json.loads((tmp_path / "characterization.json").read_text())["result"]
    assert res["pair_is_unordered"] is True and len(res["unordered_pair"]) == 2
    assert cli.main(["characterize", "--dataset", f"tail={ds}", "--out", str(tmp_path)]) == 1


def test_cli_config_errors_exit_one(tmp_path, capsys):
    path = write_config(tmp_path, dict(FLIP_DOC, num_sequences=0))
    assert cli.main(["simulate", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert "num_sequences" in capsys.readouterr().err
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == 1
    assert cli.main(["nonsense"]) == 1


def test_cli_data_errors_exit_two(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{}\n")
    (tmp_path / "bad.jsonl.header.json").write_text("not json")
    assert cli.main(["fit", "--dataset", str(bad), "--out", str(tmp_path)]) == 2


def test_cli_verify(tmp_path, capsys):
    assert cli.main(["verify", "twirl-invariance", "--out", str(tmp_path / "v.json")]) == 0
    report = json.loads((tmp_path / "v.json").read_text())
    suite = report["suites"][0]
    assert suite["passed"] and suite["max_deviation"] < 1e-10
    capsys.readouterr()
    assert cli.main(["verify", "spectra-fuzz"]) == 0
    assert json.loads(capsys.readouterr().out)["suites"][0]["checks"] == 1000
    assert cli.main(["verify", "nonexistent"]) == 1
    assert "twirl-invariance" in capsys.readouterr().err


def test_cli_replay(tmp_path):
    path = write_config(tmp_path, dict(FLIP_DOC, num_sequences=40))
    cli.main(["simulate", "--config", str(path), "--out", str(tmp_path / "run")])
    assert cli.main(["replay", str(tmp_path / "run" / "manifest.json"), "--out", str(tmp_path / "again")]) == 0
    a = (tmp_path / "run" / "dataset.jsonl").read_bytes()
    assert a == (tmp_path / "again" / "dataset.jsonl").read_bytes()


def test_cli_replay_detects_tampering(tmp_path):
    path = write_config(tmp_path, dict(FLIP_DOC, num_sequences=10))
    cli.main(["simulate", "--config", str(path), "--out", str(tmp_path / "run")])
    manifest = tmp_path / "run" / "manifest.json"
    doc = json.loads(manifest.read_text())
    doc["dataset_sha256"] = "0" * 64
    manifest.write_text(json.dumps(doc))
    assert cli.main(["replay", str(manifest), "--out", str(tmp_path / "again")]) == 3

"""Experiment configuration files and noise-model construction.

Configs are YAML (JSON is accepted too). See ``docs/config.md`` for the
grammar; the short version::

    d: 2
    n: 1
    m: 50
    num_sequences: 250
    seed: 2024
    noise_model:
      type: stochastic          # ideal | stochastic | pre_post | branches
      rates:
        - {a: [0], b: [0], p: 0.95}
        - {a: [1], b: [1], p: 0.05}
    c_patterns: [alternating, tail, [[0], [1], [1]]]
"""

from __future__ import annotations

import hashlib
import json
import os
from collections.abc import Mapping
from pathlib import Path

import numpy as np
import yaml

from . import instrument as inst
from . import weyl
from .estimation import NAMED_PATTERNS
from .sim import ExperimentConfig

NOISE_TYPES = ("ideal", "stochastic", "pre_post", "branches")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field."""


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from None
    return parse_config(doc, base_dir=Path(path).parent)


def parse_config(doc, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("config: top level must be a mapping")
    try:
        config = ExperimentConfig.from_dict(doc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    # Build once so that bad noise models fail at parse time.
    build_instrument(config, base_dir=base_dir)
    parse_patterns(config)
    return config


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=True)


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _complex_entry(x) -> complex:
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise ValueError
        return complex(float(x[0]), float(x[1]))
    if isinstance(x, bool):
        raise TypeError
    return complex(x)


def _complex_matrix(value, field: str) -> np.ndarray:
    """Matrix whose entries are numbers or [re, im] pairs (mixing is fine)."""
    try:
        return np.array([[_complex_entry(x) for x in row] for row in value], dtype=complex)
    except (TypeError, ValueError):
        raise ConfigError(f"{field}: expected a matrix of numbers or [re, im] pairs") from None


def _label(value, d: int, n: int, field: str) -> int:
    try:
        if isinstance(value, int):
            if not 0 <= value < d**n:
                raise ValueError
            return value
        entries = list(value)
        if len(entries) != n or any(not isinstance(e, int) for e in entries):
            raise ValueError
        return weyl.index_of(entries, d)
    except (TypeError, ValueError):
        raise ConfigError(f"{field}: expected an index below {d ** n} or a length-{n} integer list, got {value!r}") from None


def _channel(doc, d: int, n: int, field: str) -> np.ndarray | None:
    """Channel entry: either ``kraus`` or (``weyl`` errors then ``unitary``)."""
    if doc is None:
        return None
    if not isinstance(doc, Mapping):
        raise ConfigError(f"{field}: expected a mapping")
    unknown = set(doc) - {"weyl", "unitary", "kraus"}
    if unknown:
        raise ConfigError(f"{field}.{sorted(unknown)[0]}: unknown channel field")
    D = d**n
    if "kraus" in doc:
        if set(doc) != {"kraus"}:
            raise ConfigError(f"{field}.kraus: cannot be combined with weyl/unitary")
        kraus = [_complex_matrix(K, f"{field}.kraus[{i}]") for i, K in enumerate(doc["kraus"])]
        for i, K in enumerate(kraus):
            if K.shape != (D, D):
                raise ConfigError(f"{field}.kraus[{i}]: expected shape ({D}, {D}), got {K.shape}")
        total = sum(K.conj().T @ K for K in kraus)
        if not np.allclose(total, np.eye(D), atol=1e-10):
            raise ConfigError(f"{field}.kraus: operators are not trace preserving")
        return weyl.superoperator_from_kraus(kraus, d, n)
    S = np.eye(D * D, dtype=complex)
    if "weyl" in doc:
        probs = {}
        for i, entry in enumerate(doc["weyl"]):
            where = f"{field}.weyl[{i}]"
            if not isinstance(entry, Mapping) or "p" not in entry:
                raise ConfigError(f"{where}: expected {{x, z, p}}")
            key = (_label(entry.get("x", 0), d, n, f"{where}.x"), _label(entry.get("z", 0), d, n, f"{where}.z"))
            probs[key] = probs.get(key, 0.0) + float(entry["p"])
        try:
            S = inst.weyl_stochastic_channel(probs, d, n)
        except inst.InstrumentError as exc:
            raise ConfigError(f"{field}.weyl: {exc}") from None
    if "unitary" in doc:
        U = _complex_matrix(doc["unitary"], f"{field}.unitary")
        if U.shape != (D, D) or not np.allclose(U.conj().T @ U, np.eye(D), atol=1e-10):
            raise ConfigError(f"{field}.unitary: expected a {D}x{D} unitary matrix")
        S = weyl.conjugation_superoperator(U, d, n) @ S
    return S


def build_instrument(config: ExperimentConfig, base_dir: Path | None = None) -> inst.Instrument:
    """Instrument described by ``config.noise_model`` (validated)."""
    d, n = config.d, config.n
    model = config.noise_model
    if not isinstance(model, Mapping):
        raise ConfigError("noise_model: expected a mapping")
    kind = model.get("type")
    if kind not in NOISE_TYPES:
        raise ConfigError(f"noise_model.type: expected one of {NOISE_TYPES}, got {kind!r}")
    D = d**n
    if kind == "ideal":
        return inst.ideal_measurement(d, n)
    if kind == "stochastic":
        nu = np.zeros((D, D))
        for i, entry in enumerate(model.get("rates", [])):
            where = f"noise_model.rates[{i}]"
            if not isinstance(entry, Mapping) or not {"a", "b", "p"} <= set(entry):
                raise ConfigError(f"{where}: expected {{a, b, p}}")
            p = float(entry["p"])
            if p < 0:
                raise ConfigError(f"{where}.p: negative probability {p}")
            nu[_label(entry["a"], d, n, f"{where}.a"), _label(entry["b"], d, n, f"{where}.b")] += p
        if abs(nu.sum() - 1) > 1e-12:
            raise ConfigError(f"noise_model.rates: probabilities sum to {nu.sum():.15g}, expected 1")
        return inst.stochastic_instrument(nu, d, n)
    if kind == "pre_post":
        base = None
        if "confusion" in model:
            C = np.array(model["confusion"], dtype=float)
            try:
                base = inst.confusion_instrument(C, d, n)
            except (inst.InstrumentError, weyl.DimensionError) as exc:
                raise ConfigError(f"noise_model.confusion: {exc}") from None
        pre = _channel(model.get("pre"), d, n, "noise_model.pre")
        post = _channel(model.get("post"), d, n, "noise_model.post")
        M = inst.sandwich_instrument(pre, post, base, d=d, n=n)
    else:
        if "file" in model:
            path = Path(model["file"])
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            try:
                M = inst.Instrument.loads(path.read_text())
            except OSError as exc:
                raise ConfigError(f"noise_model.file: {exc}") from None
        elif "instrument" in model:
            M = inst.Instrument.from_dict(model["instrument"])
        else:
            raise ConfigError("noise_model: branches type needs 'file' or 'instrument'")
        if (M.d, M.n) != (d, n):
            raise ConfigError(f"noise_model: instrument dims ({M.d}, {M.n}) differ from config")
    try:
        return M.validate()
    except inst.InstrumentError as exc:
        raise ConfigError(f"noise_model: {exc}") from None


def parse_patterns(config: ExperimentConfig) -> list[tuple[str, object]]:
    """(name, pattern) pairs; a pattern is a named family or an explicit c list."""
    out = []
    for i, entry in enumerate(config.c_patterns):
        where = f"c_patterns[{i}]"
        if isinstance(entry, str):
            if entry not in NAMED_PATTERNS:
                raise ConfigError(f"{where}: unknown pattern {entry!r}; known: {sorted(NAMED_PATTERNS)}")
            if (config.d, config.n) != (2, 1):
                raise ConfigError(f"{where}: named patterns are single-qubit only")
            out.append((entry, NAMED_PATTERNS[entry]))
        elif isinstance(entry, list) and entry:
            c = [_label(v, config.d, config.n, f"{where}[{j}]") for j, v in enumerate(entry)]
            if len(c) > config.m:
                raise ConfigError(f"{where}: length {len(c)} exceeds m={config.m}")
            out.append((",".join(map(str, c)), c))
        else:
            raise ConfigError(f"{where}: expected a pattern name or a non-empty list of vectors")
    return out

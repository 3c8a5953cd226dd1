"""Single-shot instrument benchmarking: sampling, exact oracles and datasets.

Each run prepares |0...0>, then for i = 1..m draws uniform randomizers
(alpha_i, beta_i), applies Z^beta_i X^(alpha_{i-1} - alpha_i), measures, and
records the de-randomized outcome k_i = alpha_i + o_i.
"""

from __future__ import annotations

import json
import os
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import weyl
from .instrument import ErrorRateMatrix, Instrument, InstrumentError
from .weyl import DimensionError, ZdVector

DATASET_FORMAT = "instrbench-dataset/1"
HEADER_SUFFIX = ".header.json"

CLIP_ATOL = 1e-10
CONSERVATION_ATOL = 1e-8
BATCH_SIZE = 4096


class SimulationError(RuntimeError):
    """The instrument produced an invalid outcome distribution mid-run."""


@dataclass(frozen=True, eq=False)
class OutcomeRecord:
    """One run: randomizers, observed and de-randomized outcomes as (m, n) int arrays."""

    seed: int
    alphas: np.ndarray
    betas: np.ndarray
    observed: np.ndarray
    derandomized: np.ndarray
    d: int

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, f), dtype=np.int64) for f in ("alphas", "betas", "observed", "derandomized")]
        shapes = {a.shape for a in arrays}
        if len(shapes) != 1 or arrays[0].ndim != 2:
            raise DimensionError(f"record arrays must share an (m, n) shape, got {shapes}")
        if not np.array_equal((arrays[0] + arrays[2]) % self.d, arrays[3] % self.d):
            raise ValueError("de-randomized outcomes must equal alpha + observed")
        for name, arr in zip(("alphas", "betas", "observed", "derandomized"), arrays):
            arr = arr % self.d
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return self.alphas.shape[0]

    @property
    def n(self) -> int:
        return self.alphas.shape[1]

    def k_vectors(self) -> list[ZdVector]:
        return [ZdVector(tuple(row), self.d) for row in self.derandomized]

    def k_indices(self) -> np.ndarray:
        return weyl.index_of(self.derandomized, self.d)

    def __eq__(self, other):
        if not isinstance(other, OutcomeRecord):
            return NotImplemented
        return self.seed == other.seed and self.d == other.d and all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("alphas", "betas", "observed", "derandomized")
        )

    def to_json(self, record_index: int) -> str:
        return json.dumps(
            {
                "record_index": record_index,
                "seed": int(self.seed),
                "m": self.m,
                "alphas": self.alphas.tolist(),
                "betas": self.betas.tolist(),
                "observed": self.observed.tolist(),
                "derandomized": self.derandomized.tolist(),
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str, d: int) -> tuple[int, OutcomeRecord]:
        doc = json.loads(line)
        rec = cls(
            int(doc["seed"]),
            np.array(doc["alphas"]),
            np.array(doc["betas"]),
            np.array(doc["observed"]),
            np.array(doc["derandomized"]),
            d,
        )
        if rec.m != int(doc["m"]):
            raise ValueError(f"record {doc['record_index']}: m field disagrees with arrays")
        return int(doc["record_index"]), rec


@dataclass(frozen=True)
class ExperimentConfig:
    d: int
    n: int
    m: int
    num_sequences: int
    seed: int
    noise_model: Mapping = field(default_factory=lambda: {"type": "ideal"})
    c_patterns: tuple = ()

    def __post_init__(self):
        for name in ("d", "n", "m", "num_sequences", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ValueError(f"{name}: expected an integer, got {value!r}")
        if self.d < 2:
            raise ValueError(f"d: must be >= 2, got {self.d}")
        if self.n < 1:
            raise ValueError(f"n: must be >= 1, got {self.n}")
        if self.m < 1:
            raise ValueError(f"m: must be >= 1, got {self.m}")
        if self.num_sequences < 1:
            raise ValueError(f"num_sequences: must be >= 1, got {self.num_sequences}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed: must fit in 64 unsigned bits, got {self.seed}")
        try:
            weyl.check_dims(self.d, self.n)
        except DimensionError as exc:
            raise ValueError(f"d/n: {exc}") from None
        object.__setattr__(self, "c_patterns", tuple(self.c_patterns))

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "n": self.n,
            "m": self.m,
            "num_sequences": self.num_sequences,
            "seed": self.seed,
            "noise_model": _plain(self.noise_model),
            "c_patterns": _plain(list(self.c_patterns)),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> ExperimentConfig:
        known = {"d", "n", "m", "num_sequences", "seed", "noise_model", "c_patterns"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"{sorted(unknown)[0]}: unknown config field")
        missing = {"d", "n", "m", "num_sequences", "seed"} - set(doc)
        if missing:
            raise ValueError(f"{sorted(missing)[0]}: required config field missing")
        return cls(
            d=doc["d"],
            n=doc["n"],
            m=doc["m"],
            num_sequences=doc["num_sequences"],
            seed=doc["seed"],
            noise_model=doc.get("noise_model", {"type": "ideal"}),
            c_patterns=tuple(doc.get("c_patterns", ())),
        )


def _plain(obj):
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# randomness


def record_seed(master_seed: int, record_index: int) -> int:
    """64-bit seed of record ``record_index``, split from the master seed."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(record_index,))
    return int(ss.generate_state(1, np.uint64)[0])


def _record_randomness(seed: int, m: int, d: int, n: int):
    # Philox is counter based: the stream position is the step index.
    rng = np.random.Generator(np.random.Philox(key=seed))
    alphas = rng.integers(0, d, size=(m, n))
    betas = rng.integers(0, d, size=(m, n))
    uniforms = rng.random(m)
    return alphas, betas, uniforms


def _clip_probabilities(p: np.ndarray) -> np.ndarray:
    low = p.min()
    if low < -CLIP_ATOL:
        raise SimulationError(f"negative outcome probability {low:.3e}")
    if p.max() > 1 + CLIP_ATOL:
        raise SimulationError(f"outcome probability {p.max():.12g} exceeds 1")
    total = p.sum(axis=-1)
    dev = np.abs(total - 1).max()
    if dev > CONSERVATION_ATOL:
        raise SimulationError(f"outcome probabilities sum to 1 {'+-'} {dev:.3e}; instrument is not trace preserving")
    return np.clip(p, 0.0, 1.0)


def _initial_state(d: int, n: int, R: int) -> np.ndarray:
    state = weyl.projector_vectors(d, n)[:, 0]
    return np.repeat(state[None], R, axis=0)


def simulate_records(M: Instrument, m: int, seeds: Sequence[int]) -> list[OutcomeRecord]:
    """Density-matrix simulation of independent runs, batched over records."""
    d, n = M.d, M.n
    D = d**n
    R = len(seeds)
    if R == 0:
        return []
    rand = [_record_randomness(s, m, d, n) for s in seeds]
    alphas = np.array([r[0] for r in rand]).reshape(R, m, n)
    betas = np.array([r[1] for r in rand]).reshape(R, m, n)
    uniforms = np.array([r[2] for r in rand]).reshape(R, m)

    channels = weyl.weyl_channel_stack(d, n)
    ident = weyl.identity_vector(d, n).conj()
    alpha_idx = weyl.index_of(alphas.reshape(R * m, n), d).reshape(R, m)
    beta_idx = weyl.index_of(betas.reshape(R * m, n), d).reshape(R, m)
    sub = weyl.addition_table(d, n)[:, weyl.negation_index(d, n)]

    state = _initial_state(d, n, R)
    observed = np.empty((R, m), dtype=np.int64)
    prev = np.zeros(R, dtype=np.int64)
    rows = np.arange(R)
    for i in range(m):
        shift = sub[prev, alpha_idx[:, i]]
        W = channels[shift * D + beta_idx[:, i]]
        state = np.einsum("rij,rj->ri", W, state)
        outs = np.einsum("kij,rj->rki", M.branches, state)
        probs = _clip_probabilities(np.real(outs @ ident))
        cum = np.cumsum(probs, axis=1)
        cum /= cum[:, -1:]
        o = np.minimum((uniforms[:, i, None] >= cum).sum(axis=1), D - 1)
        # a zero-probability branch can only be hit through round-off at cum edges
        o = np.where(probs[rows, o] > 0, o, np.argmax(probs, axis=1))
        observed[:, i] = o
        state = outs[rows, o] / probs[rows, o][:, None]
        prev = alpha_idx[:, i]

    obs_digits = weyl.digits(d, n)[observed]
    return [
        OutcomeRecord(int(seeds[r]), alphas[r], betas[r], obs_digits[r], (alphas[r] + obs_digits[r]) % d, d)
        for r in range(R)
    ]


def run_sequence(M: Instrument, m: int, seed: int) -> OutcomeRecord:
    if m < 1:
        raise ValueError(f"sequence length must be >= 1, got {m}")
    return simulate_records(M, m, [seed])[0]


# ---------------------------------------------------------------------------
# exact probabilities


def _as_state_vector(rho, d: int, n: int) -> np.ndarray:
    if rho is None:
        return weyl.projector_vectors(d, n)[:, 0].copy()
    rho = np.asarray(rho, dtype=complex)
    D = d**n
    if rho.shape == (D, D):
        return weyl.vectorize(rho, d, n)
    if rho.shape == (D * D,):
        return rho
    raise DimensionError(f"state shape {rho.shape} incompatible with d={d}, n={n}")


def exact_sequence_prob(M_hat: Instrument, rho, ks: Sequence) -> float:
    """<<I| M_{k_m} ... M_{k_1} |rho>> for the given outcome labels."""
    d, n = M_hat.d, M_hat.n
    v = _as_state_vector(rho, d, n)
    if len(ks) == 0:
        raise ValueError("empty outcome sequence")
    for k in ks:
        idx = k.index if isinstance(k, ZdVector) else int(k)
        if isinstance(k, ZdVector) and (k.d, k.n) != (d, n):
            raise DimensionError("outcome label dims differ from the instrument")
        v = M_hat.branches[idx] @ v
    return float(np.real(weyl.identity_vector(d, n).conj() @ v))


def sequence_distribution(M_hat: Instrument, rho, m: int) -> np.ndarray:
    """All d^(nm) sequence probabilities, array of shape (d^n,) * m."""
    d, n = M_hat.d, M_hat.n
    states = _as_state_vector(rho, d, n)[None]
    for _ in range(m):
        states = np.einsum("kij,pj->pki", M_hat.branches, states).reshape(-1, states.shape[-1])
    probs = np.real(states @ weyl.identity_vector(d, n).conj())
    return probs.reshape((d**n,) * m)


def algorithm_distribution(M: Instrument, m: int, merged: bool = True) -> np.ndarray:
    """Exact de-randomized outcome distribution of the physical circuit.

    Enumerates every randomizer choice. ``merged=True`` uses the single gate
    Z^beta X^(alpha_prev - alpha) per step; ``merged=False`` uses independent
    (a, b, x) per measurement with explicit X^-x / X^x around it.
    """
    d, n = M.d, M.n
    D = d**n
    channels = weyl.weyl_channel_stack(d, n)
    sub = weyl.addition_table(d, n)[:, weyl.negation_index(d, n)]
    neg = weyl.negation_index(d, n)
    start = weyl.projector_vectors(d, n)[:, 0]
    ident = weyl.identity_vector(d, n).conj()
    if merged:
        # states[prefix, alpha_prev]
        states = np.zeros((1, D, D * D), dtype=complex)
        states[0, 0] = start
        for _ in range(m):
            new = np.zeros((states.shape[0], D, D, D * D), dtype=complex)  # [prefix, k, alpha, vec]
            for alpha_prev in range(D):
                for alpha in range(D):
                    avg = channels[sub[alpha_prev, alpha] * D:(sub[alpha_prev, alpha] + 1) * D].mean(axis=0)
                    pre = states[:, alpha_prev] @ avg.T
                    for k in range(D):
                        o = sub[k, alpha]
                        new[:, k, alpha] += pre @ M.branches[o].T / D
            states = new.reshape(-1, D, D * D)
        probs = np.real(states.sum(axis=1) @ ident)
    else:
        states = start[None]
        for _ in range(m):
            new = np.zeros((states.shape[0], D, D * D), dtype=complex)
            for x in range(D):
                pre_avg = channels[neg[x] * D:(neg[x] + 1) * D].mean(axis=0)
                post_avg = channels[x * D:(x + 1) * D].mean(axis=0)
                for k in range(D):
                    op = post_avg @ M.branches[sub[k, x]] @ pre_avg
                    new[:, k] += states @ op.T / D
            states = new.reshape(-1, D * D)
        probs = np.real(states @ ident)
    return probs.reshape((D,) * m)


# ---------------------------------------------------------------------------
# classical register-shift simulation


def _rates_array(rates: ErrorRateMatrix) -> np.ndarray:
    problems = rates.stochastic_problems()
    if problems:
        raise InstrumentError("invalid error-rate distribution: " + "; ".join(problems))
    return np.clip(np.real(rates.nu), 0.0, None)


def markov_sample(rates: ErrorRateMatrix, m: int, count: int, seed: int) -> np.ndarray:
    """(count, m) de-randomized outcome indices from the register-shift chain."""
    nu = _rates_array(rates)
    d, n = rates.d, rates.n
    D = d**n
    flat = nu.reshape(-1)
    flat = flat / flat.sum()
    rng = np.random.Generator(np.random.Philox(key=seed))
    draws = rng.choice(D * D, size=(count, m), p=flat)
    a, b = np.divmod(draws, D)
    add = weyl.addition_table(d, n)
    neg = weyl.negation_index(d, n)
    register = np.zeros(count, dtype=np.int64)
    out = np.empty((count, m), dtype=np.int64)
    for i in range(m):
        k = add[register, neg[a[:, i]]]
        out[:, i] = k
        register = add[k, b[:, i]]
    return out


def markov_fast_path(rates: ErrorRateMatrix, m: int, seed: int) -> list[ZdVector]:
    ks = markov_sample(rates, m, 1, seed)[0]
    return [ZdVector.from_index(int(k), rates.d, rates.n) for k in ks]


# ---------------------------------------------------------------------------
# experiments and datasets


@dataclass(frozen=True, eq=False)
class Dataset:
    config: ExperimentConfig
    records: tuple
    instrument_fingerprint: str = ""

    def __len__(self) -> int:
        return len(self.records)

    @property
    def d(self) -> int:
        return self.config.d

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def m(self) -> int:
        return self.config.m

    def k_matrix(self) -> np.ndarray:
        """(R, m) array of de-randomized outcome indices."""
        if not self.records:
            return np.zeros((0, self.m), dtype=np.int64)
        return np.array([r.k_indices() for r in self.records], dtype=np.int64).reshape(len(self.records), -1)

    def header(self) -> dict:
        return {
            "format": DATASET_FORMAT,
            "config": self.config.to_dict(),
            "instrument_fingerprint": self.instrument_fingerprint,
            "num_records": len(self.records),
            "encoding": "one JSON object per line: record_index, seed, m, alphas, betas, observed, derandomized; vectors are integer lists",
        }

    def write(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for i, rec in enumerate(self.records):
                fh.write(rec.to_json(i))
                fh.write("\n")
        header_path(path).write_text(json.dumps(self.header(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, path: str | os.PathLike) -> Dataset:
        path = Path(path)
        header = json.loads(header_path(path).read_text())
        if header.get("format") != DATASET_FORMAT:
            raise ValueError(f"{header_path(path)}: unsupported dataset format {header.get('format')!r}")
        config = ExperimentConfig.from_dict(header["config"])
        records = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                idx, rec = OutcomeRecord.from_json(line, config.d)
                if idx != len(records):
                    raise ValueError(f"{path}:{lineno}: record_index {idx} out of order")
                if rec.n != config.n:
                    raise ValueError(f"{path}:{lineno}: record has n={rec.n}, config n={config.n}")
                records.append(rec)
        if len(records) != header["num_records"]:
            raise ValueError(f"{path}: expected {header['num_records']} records, found {len(records)}")
        return cls(config, tuple(records), header.get("instrument_fingerprint", ""))


def header_path(path: str | os.PathLike) -> Path:
    return Path(str(path) + HEADER_SUFFIX)


def run_experiment(config: ExperimentConfig, M: Instrument, threads: int = 1) -> Dataset:
    """Simulate ``config.num_sequences`` records; output is independent of ``threads``."""
    if (M.d, M.n) != (config.d, config.n):
        raise DimensionError(f"instrument dims ({M.d}, {M.n}) differ from config ({config.d}, {config.n})")
    seeds = [record_seed(config.seed, i) for i in range(config.num_sequences)]
    chunks = [seeds[i:i + BATCH_SIZE] for i in range(0, len(seeds), BATCH_SIZE)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: simulate_records(M, config.m, c), chunks))
    else:
        parts = [simulate_records(M, config.m, c) for c in chunks]
    records = tuple(r for part in parts for r in part)
    return Dataset(config, records, M.fingerprint())

from __future__ import annotations

import itertools

import numpy as np
import pytest

from instrbench import instrument as inst
from instrbench import sim, verify, weyl
from instrbench.sim import Dataset, ExperimentConfig, OutcomeRecord

FLIP = np.array([[0.95, 0.0], [0.0, 0.05]])


def within_sigma(counts, probs, total, z=4.0):
    expected = total * probs
    sigma = np.sqrt(total * probs * (1 - probs))
    return bool(np.all(np.abs(counts - expected) <= z * sigma + 1e-12))


def histogram(k, D):
    m = k.shape[1]
    flat = np.ravel_multi_index(k.T, (D,) * m)
    return np.bincount(flat, minlength=D**m)


def test_ideal_instrument_always_reads_zero():
    for d, n in ((2, 1), (3, 1), (2, 2)):
        recs = sim.simulate_records(inst.ideal_measurement(d, n), 20, [sim.record_seed(5, i) for i in range(30)])
        assert all(not r.derandomized.any() for r in recs)
        assert any(r.alphas.any() for r in recs)


def test_readout_flip_all_zero_probability():
    Mh = inst.stochastic_instrument(FLIP, 2, 1)
    for m in (1, 2, 10, 50):
        assert abs(sim.exact_sequence_prob(Mh, None, [0] * m) - 0.95**m) < 1e-12
    assert abs(sim.exact_sequence_prob(Mh, None, [0]) - 0.95) < 1e-15


def test_ideal_exact_probability():
    M = inst.ideal_measurement(2, 1)
    assert sim.exact_sequence_prob(M, np.diag([1.0, 0.0]), [0, 0, 0]) == pytest.approx(1.0, abs=1e-15)


def test_distribution_sums_to_one():
    rng = np.random.default_rng(0)
    Mh = inst.randomly_compile(inst.random_instrument(3, 1, rng))
    p = sim.sequence_distribution(Mh, None, 3)
    assert p.shape == (3, 3, 3)
    assert abs(p.sum() - 1) < 1e-12 and p.min() > -1e-14


def test_circuit_enumeration_matches_compiled_products():
    rng = np.random.default_rng(1)
    for d, n, m in ((2, 1, 3), (3, 1, 2), (2, 2, 2)):
        M = inst.random_instrument(d, n, rng)
        exact = sim.sequence_distribution(inst.randomly_compile(M), None, m)
        assert np.abs(sim.algorithm_distribution(M, m, merged=True) - exact).max() < 1e-12
        assert np.abs(sim.algorithm_distribution(M, m, merged=False) - exact).max() < 1e-12


def test_markov_chain_distribution_matches_products():
    rng = np.random.default_rng(2)
    for d, n in ((2, 1), (3, 1), (2, 2)):
        Mh = inst.randomly_compile(inst.random_instrument(d, n, rng))
        chain = verify.markov_chain_distribution(inst.error_rates(Mh).real(), 2)
        assert np.abs(chain - sim.sequence_distribution(Mh, None, 2)).max() < 1e-12


def test_markov_two_step_readout_flip():
    rates = inst.ErrorRateMatrix(2, 1, FLIP)
    assert verify.markov_chain_distribution(rates, 2)[0, 0] == pytest.approx(0.9025, abs=1e-15)
    assert not sim.markov_sample(inst.ErrorRateMatrix(2, 1, np.array([[1.0, 0], [0, 0]])), 5, 100, 3).any()


def test_markov_sampler_goodness_of_fit():
    rng = np.random.default_rng(3)
    Mh = inst.randomly_compile(inst.random_noisy_measurement(2, 1, rng, strength=0.2))
    total = 10**6
    k = sim.markov_sample(inst.error_rates(Mh).real(), 3, total, seed=11)
    probs = sim.sequence_distribution(Mh, None, 3).reshape(-1)
    assert within_sigma(histogram(k, 2), probs, total)


def test_density_sampler_goodness_of_fit():
    rng = np.random.default_rng(4)
    M = inst.random_instrument(2, 1, rng)
    total = 20000
    recs = sim.simulate_records(M, 2, [sim.record_seed(99, i) for i in range(total)])
    k = np.array([r.k_indices() for r in recs])
    probs = sim.sequence_distribution(inst.randomly_compile(M), None, 2).reshape(-1)
    assert within_sigma(histogram(k, 2), probs, total)


def test_single_record_equals_run_sequence():
    rng = np.random.default_rng(5)
    M = inst.random_instrument(2, 1, rng)
    config = ExperimentConfig(2, 1, 8, 1, seed=17)
    ds = sim.run_experiment(config, M)
    assert ds.records[0] == sim.run_sequence(M, 8, sim.record_seed(17, 0))


def test_batching_does_not_change_records(monkeypatch):
    rng = np.random.default_rng(6)
    M = inst.random_instrument(2, 1, rng)
    config = ExperimentConfig(2, 1, 6, 40, seed=3)
    whole = sim.run_experiment(config, M)
    monkeypatch.setattr(sim, "BATCH_SIZE", 7)
    split = sim.run_experiment(config, M, threads=4)
    assert all(a == b for a, b in zip(whole.records, split.records))


def test_same_seed_same_dataset(tmp_path):
    M = inst.stochastic_instrument(FLIP, 2, 1)
    config = ExperimentConfig(2, 1, 10, 25, seed=2024)
    a = sim.run_experiment(config, M).write(tmp_path / "a.jsonl")
    b = sim.run_experiment(config, M).write(tmp_path / "b.jsonl")
    assert a.read_bytes() == b.read_bytes()
    other = sim.run_experiment(ExperimentConfig(2, 1, 10, 25, seed=2025), M).write(tmp_path / "c.jsonl")
    assert other.read_bytes() != a.read_bytes()


def test_dataset_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    M = inst.random_instrument(3, 1, rng)
    ds = sim.run_experiment(ExperimentConfig(3, 1, 5, 12, seed=1), M)
    path = ds.write(tmp_path / "d.jsonl")
    back = Dataset.read(path)
    assert back.config == ds.config
    assert np.array_equal(back.k_matrix(), ds.k_matrix())
    assert back.instrument_fingerprint == M.fingerprint()


def test_dataset_read_rejects_truncation(tmp_path):
    ds = sim.run_experiment(ExperimentConfig(2, 1, 4, 5, seed=1), inst.ideal_measurement(2, 1))
    path = ds.write(tmp_path / "d.jsonl")
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ValueError):
        Dataset.read(path)


def test_record_validation():
    z = np.zeros((3, 1), dtype=int)
    with pytest.raises(ValueError):
        OutcomeRecord(0, z, z, z, z + 1, 2)
    rec = OutcomeRecord(0, z + 1, z, z + 1, z, 2)
    idx, back = OutcomeRecord.from_json(rec.to_json(4), 2)
    assert idx == 4 and back == rec


def test_config_validation_names_field():
    with pytest.raises(ValueError, match="num_sequences"):
        ExperimentConfig(2, 1, 5, 0, seed=1)
    with pytest.raises(ValueError, match="m:"):
        ExperimentConfig(2, 1, 0, 5, seed=1)
    with pytest.raises(ValueError, match="bogus"):
        ExperimentConfig.from_dict({"d": 2, "n": 1, "m": 1, "num_sequences": 1, "seed": 0, "bogus": 1})


def test_probability_clipping():
    p = np.array([[-5e-11, 1 + 5e-11]])
    assert np.array_equal(sim._clip_probabilities(p), [[0.0, 1.0]])
    with pytest.raises(sim.SimulationError):
        sim._clip_probabilities(np.array([[-1e-6, 1 + 1e-6]]))
    with pytest.raises(sim.SimulationError):
        sim._clip_probabilities(np.array([[0.5, 0.49]]))


def test_non_trace_preserving_instrument_aborts():
    M = inst.ideal_measurement(2, 1)
    leaky = inst.Instrument(2, 1, 0.9 * M.branches)
    with pytest.raises(sim.SimulationError):
        sim.simulate_records(leaky, 3, [1, 2])


def test_record_seeds_are_distinct():
    seeds = {sim.record_seed(0, i) for i in range(10000)}
    assert len(seeds) == 10000


def test_exact_prob_accepts_vector_labels():
    Mh = inst.stochastic_instrument(FLIP, 2, 1)
    ks = [weyl.ZdVector.of(0, 2), weyl.ZdVector.of(1, 2)]
    assert sim.exact_sequence_prob(Mh, None, ks) == pytest.approx(sim.exact_sequence_prob(Mh, None, [0, 1]))
    total = sum(sim.exact_sequence_prob(Mh, None, list(ks)) for ks in itertools.product(range(2), repeat=3))
    assert abs(total - 1) < 1e-12

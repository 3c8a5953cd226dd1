from __future__ import annotations

import cmath
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from instrbench import instrument as inst
from instrbench import sim, weyl
from instrbench.weyl import ZdVector

FLIP = np.array([[0.95, 0.0], [0.0, 0.05]])
ASYM = np.array([[0.96, 0.03], [0.01, 0.0]])


def fourier_oracle(nu, d):
    """Plain double loop over single-qudit characters."""
    D = nu.shape[0]
    out = np.zeros((D, D), dtype=complex)
    for s, t, a, b in itertools.product(range(D), repeat=4):
        out[s, t] += nu[a, b] * cmath.exp(-2j * cmath.pi * s * a / d) * cmath.exp(2j * cmath.pi * t * b / d)
    return out


def test_ideal_instrument_tables():
    for d, n in ((2, 1), (3, 1), (2, 2)):
        M = inst.ideal_measurement(d, n)
        assert M.is_valid()
        assert np.abs(inst.gpf_table(M).values - 1).max() < 1e-12
        nu = inst.error_rates(M).nu
        expected = np.zeros_like(nu)
        expected[0, 0] = 1
        assert np.abs(nu - expected).max() < 1e-12


def test_ideal_total_channel_dephases():
    rng = np.random.default_rng(0)
    M = inst.ideal_measurement(3, 1)
    G = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    rho = G @ G.conj().T
    out = weyl.devectorize(M.total_channel() @ weyl.vectorize(rho, 3, 1), 3, 1)
    assert np.abs(out - np.diag(np.diag(rho))).max() < 1e-12


def test_trace_preservation_fixes_gpf_00():
    rng = np.random.default_rng(1)
    for d, n in ((2, 1), (3, 1), (2, 2)):
        M = inst.random_instrument(d, n, rng)
        assert abs(inst.gpf(M, 0, 0) - 1) < 1e-12


def test_readout_flip_fidelities():
    table = inst.gpf_table(inst.stochastic_instrument(FLIP, 2, 1)).values
    assert np.abs(table - np.array([[1, 0.9], [0.9, 1]])).max() < 1e-12
    assert np.abs(table - fourier_oracle(FLIP, 2)).max() < 1e-12


def test_asymmetric_model_matches_fourier_oracle():
    table = inst.gpf_table(inst.stochastic_instrument(ASYM, 2, 1)).values
    truth = fourier_oracle(ASYM, 2)
    assert np.abs(table - truth).max() < 1e-12
    assert np.abs(truth - np.array([[1, 0.94], [0.98, 0.92]])).max() < 1e-12


def test_error_rates_from_readout_flip_table():
    nu = inst.error_rates_from_gpf(inst.FidelityTable(2, 1, np.array([[1, 0.9], [0.9, 1]]))).nu
    assert np.abs(nu - FLIP).max() < 1e-12
    ones = inst.error_rates_from_gpf(inst.FidelityTable(2, 1, np.ones((2, 2)))).nu
    assert np.abs(ones - np.array([[1, 0], [0, 0]])).max() < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([(2, 1), (3, 1), (2, 2)]), st.integers(0, 2**32 - 1))
def test_fourier_inversion(dims, seed):
    d, n = dims
    D = d**n
    nu = np.random.default_rng(seed).dirichlet(np.ones(D * D)).reshape(D, D)
    back = inst.error_rates_from_gpf(inst.gpf_from_error_rates(inst.ErrorRateMatrix(d, n, nu))).nu
    assert np.abs(back - nu).max() < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([(2, 1), (3, 1), (2, 2)]), st.integers(0, 2**32 - 1))
def test_compiling_preserves_fidelities(dims, seed):
    M = inst.random_instrument(*dims, np.random.default_rng(seed))
    diff = inst.gpf_table(inst.randomly_compile(M)).values - inst.gpf_table(M).values
    assert np.abs(diff).max() < 1e-10


def test_closed_forms_agree():
    rng = np.random.default_rng(2)
    for d, n in ((2, 1), (3, 1), (2, 2)):
        M = inst.random_instrument(d, n, rng)
        a = inst.randomly_compile(M).branches
        b = inst.compiled_from_gpf(inst.gpf_table(M)).branches
        assert np.abs(a - b).max() < 1e-12


def test_brute_force_oracle():
    rng = np.random.default_rng(3)
    for d, count in ((2, 20), (3, 5)):
        for _ in range(count):
            M = inst.random_instrument(d, 1, rng)
            diff = inst.randomly_compile(M).branches - inst.brute_force_compile(M).branches
            assert np.abs(diff).max() < 1e-10


def test_compiled_instrument_is_valid_and_uniform():
    rng = np.random.default_rng(4)
    M = inst.random_noisy_measurement(2, 1, rng)
    Mh = inst.randomly_compile(M)
    assert Mh.is_valid()
    assert inst.is_uniform_stochastic(Mh)
    assert not inst.is_uniform_stochastic(M)
    assert inst.error_rates(Mh).is_stochastic()


def test_ideal_is_fixed_point():
    M = inst.ideal_measurement(2, 1)
    assert inst.randomly_compile(M).allclose(M)
    assert inst.brute_force_compile(M).allclose(M)


def test_phase_error_before_measurement_is_twirled_away():
    Z = weyl.weyl_channel(ZdVector.of(0, 2), ZdVector.of(1, 2))
    pre = 0.7 * np.eye(4) + 0.3 * Z
    M = inst.sandwich_instrument(pre, None, d=2, n=1)
    assert inst.brute_force_compile(M).allclose(inst.ideal_measurement(2, 1))


def test_error_rate_values():
    assert inst.error_rate(inst.randomly_compile(inst.ideal_measurement(2, 1))) == 0
    assert abs(inst.error_rate(inst.stochastic_instrument(FLIP, 2, 1)) - 0.05) < 1e-12
    rng = np.random.default_rng(5)
    rest = rng.dirichlet(np.ones(8)) * 0.2
    nu = np.concatenate([[0.8], rest]).reshape(3, 3)
    assert abs(inst.error_rate(inst.ErrorRateMatrix(3, 1, nu)) - 0.2) < 1e-12
    with pytest.raises(inst.InstrumentError):
        inst.error_rate(inst.random_instrument(2, 1, rng))


def test_gauge_symmetric_instrument_unchanged():
    M = inst.stochastic_instrument(FLIP, 2, 1)
    assert inst.swap_gauge_ratio(M) == pytest.approx(1.0)
    G = inst.gauge_transform(M, inst.swap_gauge_ratio(M))
    assert np.abs(inst.gpf_table(G).values - inst.gpf_table(M).values).max() < 1e-12


def test_gauge_swaps_off_diagonal_fidelities():
    M = inst.stochastic_instrument(ASYM, 2, 1)
    G = inst.gauge_transform(M, inst.swap_gauge_ratio(M))
    before, after = inst.gpf_table(M).values, inst.gpf_table(G).values
    assert np.abs(after - before.T).max() < 1e-12
    assert abs(after[0, 1] - 0.98) < 1e-12


def test_gauge_preserves_sequence_statistics():
    M = inst.stochastic_instrument(ASYM, 2, 1)
    ratio = inst.swap_gauge_ratio(M)
    G = inst.gauge_transform(M, ratio)
    rho = weyl.projector_vectors(2, 1)[:, 0]
    rho_g = inst.gauge_superoperator(ratio) @ rho
    p = sim.sequence_distribution(M, rho, 3)
    q = sim.sequence_distribution(G, rho_g, 3)
    assert np.abs(p - q).max() < 1e-10


def test_gauge_rejects_bad_ratios():
    with pytest.raises(inst.InstrumentError):
        inst.gauge_superoperator(0.0)
    with pytest.raises(inst.InstrumentError):
        inst.gauge_superoperator(np.inf)
    with pytest.raises(weyl.DimensionError):
        inst.gauge_transform(inst.ideal_measurement(3, 1), 1.0)


def test_validation_catches_non_cp_and_non_tp():
    M = inst.ideal_measurement(2, 1)
    assert not inst.Instrument(2, 1, 0.5 * M.branches).is_valid()
    flipped = M.branches.copy()
    flipped[0] = -flipped[0]
    assert not inst.Instrument(2, 1, flipped).is_valid()
    with pytest.raises(inst.InstrumentError):
        inst.Instrument(2, 1, flipped).validate()


def test_serialization_roundtrip_and_fingerprint():
    rng = np.random.default_rng(6)
    M = inst.random_instrument(2, 1, rng)
    back = inst.Instrument.loads(M.dumps())
    assert np.array_equal(back.branches, M.branches)
    assert back.fingerprint() == M.fingerprint()
    assert inst.random_instrument(2, 1, rng).fingerprint() != M.fingerprint()


def test_conjugated_instrument_identity_randomizer():
    rng = np.random.default_rng(7)
    M = inst.random_instrument(3, 1, rng)
    assert inst.conjugated_instrument(M, 0, 0, 0).allclose(M, atol=1e-14)

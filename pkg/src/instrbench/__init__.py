"""Benchmarking of quantum instruments (mid-circuit measurements) under random compiling."""

from __future__ import annotations

__version__ = "0.1.0"

from .estimation import (
    CharacterizationError,
    CharacterizationResult,
    DecayCurve,
    FitError,
    FitResult,
    UnorderedPair,
    characterize_single_qubit,
    design_matrix_solve,
    fit_exponential,
    kappa_curve,
    kappa_estimator,
    kappa_product_formula,
    solve_sign_ambiguity,
    survival_curve,
)
from .instrument import (
    ErrorRateMatrix,
    FidelityTable,
    Instrument,
    InstrumentError,
    error_rate,
    error_rates,
    gauge_transform,
    gpf,
    gpf_table,
    ideal_measurement,
    randomly_compile,
    stochastic_instrument,
)
from .sim import Dataset, ExperimentConfig, OutcomeRecord, SimulationError, run_experiment, run_sequence
from .spectra import dominant_eigen_bound, gershgorin
from .weyl import DimensionError, Phase, ZdVector, chi, weyl_operator

__all__ = [name for name in dir() if not name.startswith("_")]

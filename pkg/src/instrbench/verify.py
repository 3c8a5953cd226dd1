"""Property suites checked against brute-force oracles.

Each suite returns a :class:`SuiteResult` with the number of checks, the
worst deviation seen and the tolerance it was held to.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable
from dataclasses import asdict, dataclass, field

import numpy as np

from . import estimation as est
from . import instrument as inst
from . import sim, spectra, weyl


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checks: int
    max_deviation: float
    tolerance: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def random_rates(D: int, rng: np.random.Generator, eps: float | None = None) -> np.ndarray:
    """Random distribution over register shifts with nu_00 = 1 - eps."""
    if eps is None:
        return rng.dirichlet(np.ones(D * D)).reshape(D, D)
    rest = rng.dirichlet(np.full(D * D - 1, 0.5)) * eps
    return np.concatenate([[1 - eps], rest]).reshape(D, D)


def random_compiled_qubit(rng: np.random.Generator) -> inst.Instrument:
    """Compiled noisy qubit measurement with eps < 1/3."""
    while True:
        M = inst.random_noisy_measurement(2, 1, rng, strength=rng.uniform(0.02, 0.3))
        compiled = inst.randomly_compile(M)
        if inst.error_rate(compiled) < 1 / 3:
            return compiled


def _dims_cycle():
    return [(2, 1), (2, 2), (3, 1)]


def twirl_invariance(seed: int = 0, per_dims: int = 50, tol: float = 1e-10) -> SuiteResult:
    """Fidelity table unchanged by every single randomization (a, b, x)."""
    rng = np.random.default_rng(seed)
    worst, checks = 0.0, 0
    for d, n in _dims_cycle():
        D = d**n
        for _ in range(per_dims):
            M = inst.random_instrument(d, n, rng)
            ref = inst.gpf_table(M).values
            for a, b, x in itertools.product(range(D), repeat=3):
                got = inst.gpf_table(inst.conjugated_instrument(M, a, b, x)).values
                worst = max(worst, float(np.abs(got - ref).max()))
                checks += 1
    return SuiteResult("twirl-invariance", worst <= tol, checks, worst, tol)


def compile_oracle(seed: int = 0, tol: float = 1e-10) -> SuiteResult:
    """Closed-form compiling equals the enumerated twirl average."""
    rng = np.random.default_rng(seed)
    worst, checks = 0.0, 0
    for (d, n), count in (((2, 1), 20), ((3, 1), 5), ((2, 2), 3)):
        for _ in range(count):
            M = inst.random_instrument(d, n, rng)
            diff = inst.randomly_compile(M).branches - inst.brute_force_compile(M).branches
            worst = max(worst, float(np.abs(diff).max()))
            checks += 1
    return SuiteResult("compile-oracle", worst <= tol, checks, worst, tol)


def compiled_structure(seed: int = 0, tol: float = 1e-10) -> SuiteResult:
    """Compiled branches only couple |k+a>> to |k+b>> and have stochastic rates."""
    rng = np.random.default_rng(seed)
    worst, checks = 0.0, 0
    for d, n in _dims_cycle():
        D = d**n
        P = weyl.projector_vectors(d, n)
        for _ in range(10):
            Mh = inst.randomly_compile(inst.random_instrument(d, n, rng))
            for k in range(D):
                Q = P.conj().T @ Mh.branches[k] @ P
                leftover = Mh.branches[k] - P @ Q @ P.conj().T
                worst = max(worst, float(np.abs(leftover).max()))
                checks += 1
            nu = inst.error_rates(Mh)
            problems = nu.stochastic_problems(tol)
            worst = max(worst, 0.0 if not problems else 1.0)
    return SuiteResult("compiled-structure", worst <= tol, checks, worst, tol)


def sequence_probability(seed: int = 0, tol: float = 1e-10) -> SuiteResult:
    """Physical-circuit enumeration (merged and unmerged gates) versus compiled products."""
    rng = np.random.default_rng(seed)
    worst, checks = 0.0, 0
    for d, n, m in ((2, 1, 1), (2, 1, 2), (2, 1, 3), (3, 1, 2), (2, 2, 1)):
        for _ in range(3):
            M = inst.random_instrument(d, n, rng)
            exact = sim.sequence_distribution(inst.randomly_compile(M), None, m)
            for merged in (True, False):
                got = sim.algorithm_distribution(M, m, merged=merged)
                worst = max(worst, float(np.abs(got - exact).max()))
                checks += 1
            worst = max(worst, abs(float(exact.sum()) - 1))
            rates = inst.error_rates(inst.randomly_compile(M)).real()
            chain = markov_chain_distribution(rates, m)
            worst = max(worst, float(np.abs(chain - exact).max()))
            checks += 1
    return SuiteResult("sequence-probability", worst <= tol, checks, worst, tol)


def markov_chain_distribution(rates: inst.ErrorRateMatrix, m: int) -> np.ndarray:
    """Exact outcome distribution of the register-shift chain by enumeration."""
    d, n = rates.d, rates.n
    D = d**n
    nu = np.real(rates.nu)
    add = weyl.addition_table(d, n)
    neg = weyl.negation_index(d, n)
    # weights[prefix..., register]
    weights = np.zeros((1, D))
    weights[0, 0] = 1.0
    for _ in range(m):
        new = np.zeros((weights.shape[0], D, D))
        for r in range(D):
            for a in range(D):
                for b in range(D):
                    k = add[r, neg[a]]
                    new[:, k, add[k, b]] += weights[:, r] * nu[a, b]
        weights = new.reshape(-1, D)
    return weights.sum(axis=1).reshape((D,) * m)


def exact_kappa(M_hat: inst.Instrument, c, rho=None) -> complex:
    """sum over all outcome sequences of Pr(k) times the phase product."""
    d, n = M_hat.d, M_hat.n
    m = len(c)
    probs = sim.sequence_distribution(M_hat, rho, m).reshape(-1)
    ks = np.array(list(itertools.product(range(d**n), repeat=m)), dtype=np.int64).reshape(-1, m)
    phases = weyl._roots_of_unity(d)[est.phase_exponents(ks, c, d, n)]
    return complex(probs @ phases)


def random_density_matrix(D: int, rng: np.random.Generator) -> np.ndarray:
    G = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    rho = G @ G.conj().T
    return rho / np.trace(rho)


def kappa_identity(seed: int = 0, tol: float = 1e-10) -> SuiteResult:
    """Enumerated phase expectation equals tr(Z^-c1 rho) prod nu~."""
    rng = np.random.default_rng(seed)
    worst, checks = 0.0, 0
    for _ in range(10):
        M = inst.random_instrument(2, 1, rng)
        Mh = inst.randomly_compile(M)
        table = inst.gpf_table(M)
        for rho in (None, random_density_matrix(2, rng)):
            rho_mat = np.diag([1.0, 0.0]) if rho is None else rho
            for m in (1, 2, 3):
                for c in itertools.product(range(2), repeat=m):
                    got = exact_kappa(Mh, c, rho)
                    want = est.kappa_product_formula(table, c, rho_mat)
                    worst = max(worst, abs(got - want))
                    checks += 1
    return SuiteResult("kappa-identity", worst <= tol, checks, worst, tol)


def gauge_obstruction(seed: int = 0, tol: float = 1e-10) -> SuiteResult:
    """Swapping gauge leaves every observable unchanged but moves nu~_01, nu~_10."""
    rng = np.random.default_rng(seed)
    worst, checks = 0.0, 0
    moved = []
    rho = weyl.projector_vectors(2, 1)[:, 0]
    for _ in range(5):
        M = inst.random_noisy_measurement(2, 1, rng, strength=0.1)
        ratio = inst.swap_gauge_ratio(M)
        G = inst.gauge_transform(M, ratio)
        B = inst.gauge_superoperator(ratio)
        rho_g = B @ rho
        t0, t1 = inst.gpf_table(M), inst.gpf_table(G)
        swap = max(abs(t1[0, 1] - t0[1, 0]), abs(t1[1, 0] - t0[0, 1]), abs(t1[1, 1] - t0[1, 1]))
        worst = max(worst, swap)
        moved.append(abs(t1[0, 1] - t0[0, 1]))
        for m in (1, 2, 3):
            p0 = sim.sequence_distribution(inst.randomly_compile(M), rho, m)
            p1 = sim.sequence_distribution(inst.randomly_compile(G), rho_g, m)
            worst = max(worst, float(np.abs(p0 - p1).max()))
            for c in itertools.product(range(2), repeat=m):
                k0 = exact_kappa(inst.randomly_compile(M), c, rho)
                k1 = exact_kappa(inst.randomly_compile(G), c, rho_g)
                worst = max(worst, abs(k0 - k1))
                checks += 1
    return SuiteResult(
        "gauge-obstruction",
        worst <= tol and min(moved) > 1e-6,
        checks,
        worst,
        tol,
        {"min_individual_change": float(min(moved))},
    )


def allzeros_model(seed: int = 0, count: int = 20, max_m: int = 30) -> SuiteResult:
    """|Pr(0; m) - A mu^m| <= binom(m, l-1) eps^(m-l+1) and mu near 1 - eps.

    The residual is taken from the deflated matrix; the direct difference is
    checked separately against the decomposition at roundoff level.
    """
    rng = np.random.default_rng(seed)
    worst, checks, split = 0.0, 0, 0.0
    for _ in range(count):
        Mh = random_compiled_qubit(rng)
        N = inst.error_rates(Mh).real().N
        eps = 1 - N[0, 0]
        mu, A = spectra.dominant_eigenpair(N)
        radius = eps**2 / (1 - 2 * eps)
        worst = max(worst, abs(mu - (1 - eps)) / radius if radius > 0 else 0.0)
        for m in range(1, max_m + 1):
            p = sim.exact_sequence_prob(Mh, None, [0] * m)
            resid = spectra.allzeros_residual(N, m)
            split = max(split, abs(p - A * mu**m - resid))
            bound = spectra.allzeros_residual_bound(N, m, xi=N.shape[0] - 1)
            worst = max(worst, abs(resid) / bound if bound > 0 else (0.0 if abs(resid) < 1e-300 else np.inf))
            checks += 1
    return SuiteResult(
        "allzeros-model",
        worst <= 1.0 and split < 1e-12,
        checks,
        worst,
        1.0,
        {"deviation": "ratio to bound", "decomposition_error": split},
    )


def random_unit_sum_matrix(size: int, eps: float, rng: np.random.Generator) -> np.ndarray:
    A = np.zeros(size * size)
    A[1:] = rng.dirichlet(np.full(size * size - 1, rng.uniform(0.2, 2.0))) * eps
    A[0] = 1 - eps
    return A.reshape(size, size)


def spectra_fuzz(seed: int = 0, count: int = 1000) -> SuiteResult:
    """Dominant-eigenvalue bound on random nonnegative unit-sum matrices."""
    rng = np.random.default_rng(seed)
    violations, worst = 0, 0.0
    for _ in range(count):
        size = int(rng.integers(2, 9))
        eps = float(rng.uniform(0, 0.33))
        A = random_unit_sum_matrix(size, eps, rng)
        bound = spectra.dominant_eigen_bound(A)
        vals = np.linalg.eigvals(A)
        near = np.abs(vals - A[0, 0]) <= bound.radius + 1e-12
        others = vals[~near]
        ok = near.sum() == 1 and np.all(np.abs(others) <= eps + 1e-12)
        if bound.radius > 0:
            worst = max(worst, float(np.abs(vals[near] - A[0, 0]).max() / bound.radius) if near.any() else np.inf)
        violations += not ok
    return SuiteResult("spectra-fuzz", violations == 0, count, worst, 1.0, {"violations": violations})


def disc_inclusion(seed: int = 0, count: int = 100) -> SuiteResult:
    """Eigenvalues inside the Gershgorin and Cassini unions."""
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(count):
        for size in (5, 6):
            A = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
            vals = np.linalg.eigvals(A)
            failures += not spectra.eigenvalues_in_gershgorin(A)
            failures += not all(spectra.brauer_union_contains(A, v, atol=1e-9) for v in vals)
    return SuiteResult("disc-inclusion", failures == 0, 2 * 2 * count, float(failures), 0.0)


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "twirl-invariance": twirl_invariance,
    "compile-oracle": compile_oracle,
    "compiled-structure": compiled_structure,
    "sequence-probability": sequence_probability,
    "kappa-identity": kappa_identity,
    "gauge-obstruction": gauge_obstruction,
    "allzeros-model": allzeros_model,
    "spectra-fuzz": spectra_fuzz,
    "disc-inclusion": disc_inclusion,
}


def available_suites() -> list[str]:
    return sorted(SUITES) + ["all"]


def run_suite(name: str, seed: int = 0) -> list[SuiteResult]:
    if name == "all":
        return [SUITES[s](seed=seed) for s in sorted(SUITES)]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; available: {', '.join(available_suites())}")
    return [SUITES[name](seed=seed)]

"""Estimators built on de-randomized outcome data.

All sequence-length dependence is obtained from one long run per record by
marginalizing later measurements: the statistic for length m' only looks at
the first m' outcomes.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import weyl
from .instrument import ErrorRateMatrix, FidelityTable, Instrument, error_rates_from_gpf, gpf_table
from .sim import Dataset
from .weyl import DimensionError, ZdVector

logger = logging.getLogger(__name__)


class FitError(ValueError):
    """Not enough usable data for a log-domain fit."""


class CharacterizationError(ValueError):
    """Inputs to the single-qubit characterization are mutually inconsistent."""


def _kmatrix(data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.k_matrix()
    return np.asarray(data, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class DecayCurve:
    """Estimates at increasing sequence lengths.

    ``cov`` is the full covariance of ``values`` across lengths, needed
    because marginalized points share the same records.
    """

    lengths: np.ndarray
    values: np.ndarray
    shots: np.ndarray
    stderr: np.ndarray
    cov: np.ndarray | None = None
    imag: np.ndarray | None = None
    imag_stderr: np.ndarray | None = None

    def __post_init__(self):
        lengths = np.asarray(self.lengths, dtype=np.int64)
        if lengths.ndim != 1 or len(lengths) == 0:
            raise ValueError("a decay curve needs at least one point")
        if np.any(np.diff(lengths) <= 0):
            raise ValueError("sequence lengths must be strictly increasing")
        object.__setattr__(self, "lengths", lengths)
        for name in ("values", "shots", "stderr"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), lengths.shape).copy()
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.lengths)

    def table(self) -> str:
        lines = ["m_prime\tp_hat\tshots\tstderr"]
        for m, p, s, e in zip(self.lengths, self.values, self.shots, self.stderr):
            lines.append(f"{m}\t{p:.10g}\t{int(s)}\t{e:.6g}")
        return "\n".join(lines) + "\n"


def _curve_from_samples(lengths, samples: np.ndarray) -> DecayCurve:
    """Mean/covariance of per-record statistics, one column per length."""
    R = samples.shape[0]
    if R == 0:
        raise ValueError("empty dataset")
    mean = samples.mean(axis=0)
    if np.iscomplexobj(samples):
        re, im = samples.real, samples.imag
        cov = np.atleast_2d(np.cov(re, rowvar=False, ddof=1)) / R if R > 1 else np.zeros((len(lengths),) * 2)
        im_se = im.std(axis=0, ddof=1) / np.sqrt(R) if R > 1 else np.zeros(len(lengths))
        return DecayCurve(lengths, mean.real, R, np.sqrt(np.diag(cov)), cov, mean.imag, im_se)
    cov = np.atleast_2d(np.cov(samples, rowvar=False, ddof=1)) / R if R > 1 else np.zeros((len(lengths),) * 2)
    return DecayCurve(lengths, mean, R, np.sqrt(np.diag(cov)), cov)


def survival_indicators(data, lengths: Sequence[int]) -> np.ndarray:
    """(R, L) indicators that the first m' de-randomized outcomes are all zero."""
    k = _kmatrix(data)
    lengths = np.asarray(lengths, dtype=np.int64)
    if k.shape[0] == 0:
        raise ValueError("empty dataset")
    if lengths.min() < 1 or lengths.max() > k.shape[1]:
        raise ValueError(f"lengths must lie in 1..{k.shape[1]}")
    alive = np.cumprod(k == 0, axis=1).astype(bool)
    return alive[:, lengths - 1]


def survival_curve(data, lengths: Sequence[int] | None = None) -> DecayCurve:
    """Fraction of records whose first m' outcomes are all zero.

    Standard errors are binomial; the covariance between lengths i <= j is
    (p_j - p_i p_j) / R because survival to j implies survival to i.
    """
    k = _kmatrix(data)
    if lengths is None:
        lengths = np.arange(1, k.shape[1] + 1)
    lengths = np.asarray(lengths, dtype=np.int64)
    ind = survival_indicators(k, lengths)
    R = ind.shape[0]
    p = ind.mean(axis=0)
    hi = np.maximum.outer(lengths, lengths)
    p_joint = p[np.searchsorted(lengths, hi)]
    cov = (p_joint - np.outer(p, p)) / R
    return DecayCurve(lengths, p, R, np.sqrt(p * (1 - p) / R), cov)


# ---------------------------------------------------------------------------
# exponential fits


@dataclass(frozen=True, eq=False)
class FitResult:
    """Model value(m) = amplitude * base^m fitted in the log domain."""

    amplitude: float
    base: float
    covariance: np.ndarray
    residuals: np.ndarray
    log_params: np.ndarray
    log_covariance: np.ndarray
    lengths: np.ndarray
    dropped: int = 0

    @property
    def base_stderr(self) -> float:
        return float(np.sqrt(max(self.covariance[1, 1], 0.0)))

    @property
    def amplitude_stderr(self) -> float:
        return float(np.sqrt(max(self.covariance[0, 0], 0.0)))

    def predict(self, m) -> np.ndarray:
        return self.amplitude * self.base ** np.asarray(m, dtype=float)


def fit_exponential(curve: DecayCurve, min_points: int = 3) -> FitResult:
    """Weighted least squares of log(value) against length.

    Weights come from delta-method variances var(value) / value^2. Points
    with value <= 0 are dropped. When the curve carries a full covariance the
    parameter covariance is the sandwich H Sigma H^T, which stays honest for
    correlated (marginalized) points.
    """
    y = np.asarray(curve.values, dtype=float)
    keep = y > 0
    dropped = int((~keep).sum())
    if keep.sum() == 0:
        raise FitError("every point is zero; nothing to fit")
    if keep.sum() < min_points:
        raise FitError(f"need at least {min_points} points with positive value, got {int(keep.sum())}")
    m = curve.lengths[keep].astype(float)
    y = y[keep]
    shots = np.maximum(curve.shots[keep], 1.0)
    var = np.maximum(curve.stderr[keep] ** 2, (0.5 / shots) ** 2)
    w = y**2 / var

    X = np.column_stack([np.ones_like(m), m])
    XtW = X.T * w
    H = np.linalg.solve(XtW @ X, XtW)
    logy = np.log(y)
    params = H @ logy
    if curve.cov is not None:
        sub = np.asarray(curve.cov)[np.ix_(keep, keep)]
        sigma_log = sub / np.outer(y, y)
    else:
        sigma_log = np.diag(var / y**2)
    log_cov = H @ sigma_log @ H.T
    amplitude, base = np.exp(params)
    J = np.diag([amplitude, base])
    resid = y - amplitude * base**m
    if dropped:
        logger.info("dropped %d non-positive points from the fit", dropped)
    return FitResult(float(amplitude), float(base), J @ log_cov @ J, resid, params, log_cov, curve.lengths[keep], dropped)


# ---------------------------------------------------------------------------
# phase-product estimators


def _as_index_array(c, d: int, n: int) -> np.ndarray:
    out = []
    for v in c:
        if isinstance(v, ZdVector):
            if (v.d, v.n) != (d, n):
                raise DimensionError("phase vector dims differ from the data")
            out.append(v.index)
        elif isinstance(v, (int, np.integer)):
            if not 0 <= v < d**n:
                raise DimensionError(f"phase index {v} out of range")
            out.append(int(v))
        else:
            vec = list(v)
            if len(vec) != n:
                raise DimensionError(f"phase vector {vec} has length {len(vec)} != n={n}")
            out.append(weyl.index_of(vec, d))
    return np.array(out, dtype=np.int64)


def phase_exponents(k: np.ndarray, c, d: int, n: int) -> np.ndarray:
    """Integer exponents q with prod_j conj(chi_{k_j}(c_j - c_{j+1})) = omega^q.

    ``k`` is (R, L) outcome indices and ``c`` has length L; c_{L+1} = 0.
    """
    c_idx = _as_index_array(c, d, n)
    L = len(c_idx)
    if k.shape[1] < L:
        raise ValueError(f"phase vector length {L} exceeds record length {k.shape[1]}")
    dig = weyl.digits(d, n)
    c_dig = dig[c_idx]
    diff = c_dig - np.vstack([c_dig[1:], np.zeros((1, n), dtype=np.int64)])
    kd = dig[k[:, :L]]  # (R, L, n)
    return (-np.einsum("rjn,jn->r", kd, diff)) % d


def _phase_values(k: np.ndarray, c, d: int, n: int) -> np.ndarray:
    return weyl._roots_of_unity(d)[phase_exponents(k, c, d, n)]


@dataclass(frozen=True)
class KappaEstimate:
    value: complex
    stderr_real: float
    stderr_imag: float
    shots: int

    @property
    def imaginary_significant(self) -> bool:
        return abs(self.value.imag) > 3 * max(self.stderr_imag, 1e-300) and abs(self.value.imag) > 1e-12


def kappa_estimator(data, c, d: int | None = None, n: int | None = None) -> KappaEstimate:
    """Empirical mean of prod_j conj(chi_{k_j}(c_j - c_{j+1})) over records.

    ``c`` may be shorter than the records; the statistic then uses only the
    first len(c) outcomes.
    """
    if isinstance(data, Dataset):
        d, n = data.d, data.n
    elif d is None or n is None:
        raise TypeError("d and n are required for raw outcome arrays")
    k = _kmatrix(data)
    if k.shape[0] == 0:
        raise ValueError("empty dataset")
    if len(c) == 0:
        raise ValueError("empty phase vector")
    vals = _phase_values(k, c, d, n)
    R = len(vals)
    se_re = float(vals.real.std(ddof=1) / np.sqrt(R)) if R > 1 else 0.0
    se_im = float(vals.imag.std(ddof=1) / np.sqrt(R)) if R > 1 else 0.0
    return KappaEstimate(complex(vals.mean()), se_re, se_im, R)


def kappa_product_formula(table: FidelityTable, c, rho=None) -> complex:
    """tr(Z^-c_1 rho) prod_j nu~_{c_j, c_{j+1}} with c_{m+1} = 0."""
    d, n = table.d, table.n
    c_idx = _as_index_array(c, d, n)
    if rho is None:
        prefactor = 1.0 + 0j
    else:
        rho = np.asarray(rho, dtype=complex)
        z = ZdVector.from_index(int(c_idx[0]), d, n)
        prefactor = complex(np.trace(weyl.clock_operator(-z) @ rho))
    nxt = np.append(c_idx[1:], 0)
    return prefactor * complex(np.prod(table.values[c_idx, nxt]))


def kappa_curve(data, pattern: Callable[[int], list], lengths: Sequence[int], d: int | None = None, n: int | None = None) -> DecayCurve:
    """kappa estimates for ``pattern(m')`` at each m' in ``lengths``."""
    if isinstance(data, Dataset):
        d, n = data.d, data.n
    k = _kmatrix(data)
    samples = np.column_stack([_phase_values(k, pattern(L), d, n) for L in lengths])
    return _curve_from_samples(np.asarray(lengths), samples)


# single-qubit phase patterns, all starting at c_1 = 0


def alternating_pattern(length: int) -> list[int]:
    """c = (0, 1, 0, 1, ...); expectation (nu~_01 nu~_10)^floor(length / 2)."""
    return [j % 2 for j in range(length)]


def tail_pattern(length: int) -> list[int]:
    """c = (0, 1, 1, ..., 1); expectation nu~_01 nu~_10 nu~_11^(length - 2)."""
    if length < 2:
        raise ValueError("the tail pattern needs length >= 2")
    return [0] + [1] * (length - 1)


NAMED_PATTERNS = {"alternating": alternating_pattern, "tail": tail_pattern}


# ---------------------------------------------------------------------------
# log-linear design matrix


def design_row(c, d: int, n: int) -> np.ndarray:
    """Multiplicity of each nu~_{a,b} in the product, at position a + d^n b."""
    c_idx = _as_index_array(c, d, n)
    D = d**n
    nxt = np.append(c_idx[1:], 0)
    row = np.zeros(D * D)
    np.add.at(row, c_idx + D * nxt, 1)
    return row


@dataclass(frozen=True, eq=False)
class DesignSolution:
    """Least-squares log fidelities; entry a + d^n b is log nu~_{a,b}.

    Entry 0 is pinned to log nu~_{0,0} = 0. Directions in ``null_space``
    (columns) cannot be learned from the supplied sequences.
    """

    d: int
    n: int
    log_fidelities: np.ndarray
    design: np.ndarray
    rank: int
    null_space: np.ndarray
    residuals: np.ndarray
    identifiable: np.ndarray = field(repr=False)

    def log_fidelity(self, a: int, b: int) -> float:
        return float(self.log_fidelities[a + self.d**self.n * b])

    def fidelities(self) -> np.ndarray:
        """nu~ table [s, t]; unidentifiable entries are NaN."""
        D = self.d**self.n
        vals = np.where(self.identifiable, np.exp(self.log_fidelities), np.nan)
        return vals.reshape(D, D).T


def design_matrix_solve(kappa_estimates: Sequence[tuple], d: int, n: int, rank_tol: float = 1e-9) -> DesignSolution:
    """Solve log kappa(c) = D(c) . log nu~ in the least-squares sense."""
    if not kappa_estimates:
        raise ValueError("no kappa estimates supplied")
    rows, rhs = [], []
    for c, value in kappa_estimates:
        if isinstance(value, KappaEstimate):
            value = value.value
        value = complex(value)
        if _as_index_array(c, d, n)[0] != 0:
            raise ValueError("every sequence must start with c_1 = 0")
        if value.real <= 0:
            raise ValueError(f"kappa {value} is not positive; log-linear model undefined")
        rows.append(design_row(c, d, n))
        rhs.append(np.log(value.real))
    Dm = np.array(rows)
    rhs = np.array(rhs)
    reduced = Dm[:, 1:]  # log nu~_{0,0} = 0
    sol, *_ = np.linalg.lstsq(reduced, rhs, rcond=None)
    rank = int(np.linalg.matrix_rank(reduced, tol=rank_tol)) if reduced.size else 0
    null = scipy.linalg.null_space(reduced, rcond=rank_tol)
    full_null = np.vstack([np.zeros((1, null.shape[1])), null])
    identifiable = np.abs(full_null).max(axis=1, initial=0.0) < 1e-8 if null.size else np.ones(Dm.shape[1], bool)
    log_fid = np.concatenate([[0.0], sol])
    if rank < reduced.shape[1]:
        logger.info("design matrix rank %d < %d unknowns", rank, reduced.shape[1])
    return DesignSolution(d, n, log_fid, Dm, rank, full_null, rhs - reduced @ sol, identifiable)


# ---------------------------------------------------------------------------
# single-qubit characterization


class UnorderedPair:
    """Two values with no assignment to nu~_{0,1} versus nu~_{1,0}."""

    __slots__ = ("_values",)

    def __init__(self, x: float, y: float):
        self._values = tuple(sorted((float(x), float(y))))

    @property
    def values(self) -> tuple[float, float]:
        """Canonical (ascending) listing; the order carries no meaning."""
        return self._values

    def __eq__(self, other):
        if not isinstance(other, UnorderedPair):
            return NotImplemented
        return self._values == other._values

    def __hash__(self):
        return hash(self._values)

    def isclose(self, other: Sequence[float], atol: float) -> bool:
        a = sorted(other)
        return all(abs(x - y) <= atol for x, y in zip(self._values, a))

    def product(self) -> float:
        return self._values[0] * self._values[1]

    def __repr__(self) -> str:
        return f"{{{self._values[0]:.10g}, {self._values[1]:.10g}}}"


@dataclass(frozen=True, eq=False)
class CharacterizationResult:
    nu11_tilde: float
    C: float
    pair: UnorderedPair
    nu00: float
    B: float
    discriminant: float
    stderr: dict
    flags: dict
    fits: dict = field(default_factory=dict)

    def error_rate_candidates(self) -> tuple[ErrorRateMatrix, ErrorRateMatrix]:
        """The two nu tables consistent with the data (nu_01 and nu_10 swapped)."""
        out = []
        for first, second in (self.pair.values, self.pair.values[::-1]):
            table = FidelityTable(2, 1, np.array([[1.0, first], [second, self.nu11_tilde]]))
            out.append(error_rates_from_gpf(table))
        return out[0], out[1]

    @property
    def nu11(self) -> float:
        """Error rate nu_{1,1}, identical for both assignments."""
        return float((1 - sum(self.pair.values) + self.nu11_tilde) / 4)

    def to_dict(self) -> dict:
        return {
            "nu11_tilde": self.nu11_tilde,
            "C": self.C,
            "unordered_pair": list(self.pair.values),
            "pair_is_unordered": True,
            "nu00": self.nu00,
            "nu11": self.nu11,
            "epsilon": 1 - self.nu00,
            "B": self.B,
            "discriminant": self.discriminant,
            "stderr": dict(self.stderr),
            "flags": dict(self.flags),
            "fits": {
                name: {
                    "amplitude": f.amplitude,
                    "base": f.base,
                    "covariance": f.covariance.tolist(),
                    "dropped_points": f.dropped,
                }
                for name, f in self.fits.items()
            },
        }


def solve_sign_ambiguity(
    C: float,
    nu11_tilde: float,
    nu00: float,
    stderr_C: float = 0.0,
    stderr_nu11: float = 0.0,
    stderr_nu00: float = 0.0,
    noise_floor: float = 1e-12,
) -> CharacterizationResult:
    """Roots of x^2 + B x + C = 0 with B = 1 + nu~_11 - 4 nu_00.

    A negative discriminant within three propagated standard errors (or the
    float noise floor) is clamped to zero and flagged; anything more negative
    means the inputs cannot come from one instrument.
    """
    B = 1 + nu11_tilde - 4 * nu00
    disc = B * B - 4 * C
    se_B = float(np.hypot(stderr_nu11, 4 * stderr_nu00))
    se_disc = float(np.hypot(2 * B * se_B, 4 * stderr_C))
    flags = {"discriminant_clamped": False}
    if disc < 0:
        if disc < -max(3 * se_disc, noise_floor):
            raise CharacterizationError(
                f"discriminant B^2 - 4C = {disc:.3e} is below -3 standard errors ({se_disc:.3e}); C > B^2/4"
            )
        flags["discriminant_clamped"] = True
        disc = 0.0
    root = np.sqrt(disc)
    pair = UnorderedPair((-B + root) / 2, (-B - root) / 2)
    if root > 0:
        d_plus_B = (-1 + B / root) / 2
        d_minus_B = (-1 - B / root) / 2
        d_C = 1 / root
        se_roots = [
            float(np.hypot(d_plus_B * se_B, d_C * stderr_C)),
            float(np.hypot(d_minus_B * se_B, d_C * stderr_C)),
        ]
    else:
        # double root: linearization fails, sqrt(disc) moves by at most sqrt(se_disc)
        se_roots = [float(np.hypot(se_B / 2, np.sqrt(se_disc) / 2))] * 2
    stderr = {
        "C": stderr_C,
        "nu11_tilde": stderr_nu11,
        "nu00": stderr_nu00,
        "B": se_B,
        "discriminant": se_disc,
        "pair": max(se_roots),
    }
    return CharacterizationResult(float(nu11_tilde), float(C), pair, float(nu00), float(B), float(disc), stderr, flags)


def characterize_single_qubit(
    alternating: Dataset,
    tail: Dataset | None = None,
    survival: Dataset | None = None,
    max_length: int | None = None,
) -> CharacterizationResult:
    """Estimate C, nu~_11 and nu_00 from data and resolve the quadratic.

    One dataset may serve all three roles; the estimators only differ in the
    statistic computed from the outcomes.
    """
    tail = alternating if tail is None else tail
    survival = alternating if survival is None else survival
    for ds in (alternating, tail, survival):
        if (ds.d, ds.n) != (2, 1):
            raise DimensionError("single-qubit characterization needs d=2, n=1")

    def limit(ds):
        return ds.m if max_length is None else min(ds.m, max_length)

    pairs = np.arange(1, limit(alternating) // 2 + 1)
    alt_curve = kappa_curve(alternating, alternating_pattern, 2 * pairs)
    alt_curve = DecayCurve(pairs, alt_curve.values, alt_curve.shots, alt_curve.stderr, alt_curve.cov, alt_curve.imag, alt_curve.imag_stderr)
    tail_lengths = np.arange(2, limit(tail) + 1)
    tail_curve = kappa_curve(tail, tail_pattern, tail_lengths)
    surv_curve = survival_curve(survival, np.arange(1, limit(survival) + 1))

    fit_C = fit_exponential(alt_curve)
    fit_11 = fit_exponential(tail_curve)
    fit_00 = fit_exponential(surv_curve)

    complex_kappa = any(
        bool(np.any(np.abs(cv.imag) > 3 * np.maximum(cv.imag_stderr, 1e-300)))
        for cv in (alt_curve, tail_curve)
        if cv.imag is not None
    )
    result = solve_sign_ambiguity(
        fit_C.base,
        fit_11.base,
        fit_00.base,
        fit_C.base_stderr,
        fit_11.base_stderr,
        fit_00.base_stderr,
    )
    result.flags["complex_kappa_warning"] = complex_kappa
    # the decay rate equals nu_00 only up to O(eps^2); the roots inherit that bias
    result.flags["nu00_from_decay_rate"] = True
    result.flags["shared_dataset"] = alternating is tail or alternating is survival or tail is survival
    result.fits.update({"C": fit_C, "nu11_tilde": fit_11, "nu00": fit_00})
    return result


def exact_characterization_inputs(M: Instrument) -> tuple[float, float, float]:
    """(C, nu~_11, nu_00) of a qubit instrument, computed without sampling."""
    table = gpf_table(M)
    nu = error_rates_from_gpf(table)
    C = (table[0, 1] * table[1, 0]).real
    return float(C), float(table[1, 1].real), float(nu.nu[0, 0].real)

"""Quantum instruments, generalized Pauli fidelities and randomized compiling."""

from __future__ import annotations

import hashlib
import json
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from . import weyl
from .weyl import DimensionError, ZdVector

logger = logging.getLogger(__name__)

CP_ATOL = 1e-10
TP_ATOL = 1e-10
STOCHASTIC_ATOL = 1e-10

# Enumerating (a, b, x) costs d^(3n) instrument conjugations.
BRUTE_FORCE_LIMIT = 729


class InstrumentError(ValueError):
    """An instrument failed validation or is unsuitable for an operation."""


Label = ZdVector | int


def _idx(label: Label, d: int, n: int) -> int:
    if isinstance(label, ZdVector):
        if label.d != d or label.n != n:
            raise DimensionError(f"label dims ({label.d}, {label.n}) != ({d}, {n})")
        return label.index
    label = int(label)
    if not 0 <= label < d**n:
        raise DimensionError(f"label {label} out of range for d={d}, n={n}")
    return label


@dataclass(frozen=True, eq=False)
class Instrument:
    """Outcome-indexed family of branch superoperators.

    ``branches[k]`` is the superoperator M_k for the outcome with index k, in
    the interleaved vectorization basis of :mod:`instrbench.weyl`.
    """

    d: int
    n: int
    branches: np.ndarray

    def __post_init__(self):
        weyl.check_dims(self.d, self.n)
        D2 = self.d ** (2 * self.n)
        branches = np.array(self.branches, dtype=complex)
        if branches.shape != (self.d**self.n, D2, D2):
            raise DimensionError(
                f"branches shape {branches.shape} != {(self.d**self.n, D2, D2)}"
            )
        branches.setflags(write=False)
        object.__setattr__(self, "branches", branches)

    @property
    def num_outcomes(self) -> int:
        return self.d**self.n

    def branch(self, k: Label) -> np.ndarray:
        return self.branches[_idx(k, self.d, self.n)]

    def total_channel(self) -> np.ndarray:
        return self.branches.sum(axis=0)

    def problems(self, cp_atol: float = CP_ATOL, tp_atol: float = TP_ATOL) -> list[str]:
        """Human-readable list of violated validity conditions (empty if valid)."""
        out = []
        d, n = self.d, self.n
        ident = weyl.identity_vector(d, n)
        for k, M in enumerate(self.branches):
            choi = weyl.choi_matrix(M, d, n)
            if not np.allclose(choi, choi.conj().T, atol=cp_atol):
                out.append(f"branch {k}: not Hermiticity preserving")
                continue
            low = np.linalg.eigvalsh((choi + choi.conj().T) / 2).min()
            if low < -cp_atol:
                out.append(f"branch {k}: Choi eigenvalue {low:.3e} < -{cp_atol}")
            effect = weyl.devectorize(M.conj().T @ ident, d, n)
            high = np.linalg.eigvalsh((effect + effect.conj().T) / 2).max()
            if high > 1 + tp_atol:
                out.append(f"branch {k}: trace increasing (effect eigenvalue {high:.3e})")
        tp_dev = np.abs(ident.conj() @ self.total_channel() - ident.conj()).max()
        if tp_dev > tp_atol:
            out.append(f"sum of branches not trace preserving (deviation {tp_dev:.3e})")
        return out

    def validate(self, cp_atol: float = CP_ATOL, tp_atol: float = TP_ATOL) -> Instrument:
        problems = self.problems(cp_atol, tp_atol)
        if problems:
            raise InstrumentError("; ".join(problems))
        return self

    def is_valid(self) -> bool:
        return not self.problems()

    def allclose(self, other: Instrument, atol: float = 1e-10) -> bool:
        return (self.d, self.n) == (other.d, other.n) and bool(
            np.abs(self.branches - other.branches).max() <= atol
        )

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "n": self.n,
            "branch_count": self.num_outcomes,
            "branches": [
                {
                    "outcome": list(ZdVector.from_index(k, self.d, self.n)),
                    "superoperator": weyl.operator_to_dict(M, self.d, self.n, "superoperator"),
                }
                for k, M in enumerate(self.branches)
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> Instrument:
        d, n = int(doc["d"]), int(doc["n"])
        if int(doc["branch_count"]) != d**n or len(doc["branches"]) != d**n:
            raise DimensionError("branch count must equal d^n")
        D2 = d ** (2 * n)
        branches = np.zeros((d**n, D2, D2), dtype=complex)
        seen = set()
        for entry in doc["branches"]:
            k = weyl.index_of(entry["outcome"], d)
            M, d2, n2 = weyl.operator_from_dict(entry["superoperator"], "superoperator")
            if (d2, n2) != (d, n):
                raise DimensionError("branch dims disagree with instrument header")
            branches[k] = M
            seen.add(k)
        if len(seen) != d**n:
            raise DimensionError("duplicate or missing outcome labels")
        return cls(d, n, branches)

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> Instrument:
        return cls.from_dict(json.loads(text))

    def fingerprint(self) -> str:
        """SHA-256 of the canonical serialization."""
        return hashlib.sha256(self.dumps().encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class FidelityTable:
    """Generalized Pauli fidelities, ``values[s, t]`` = nu~_{s,t}."""

    d: int
    n: int
    values: np.ndarray

    def __post_init__(self):
        D = self.d**self.n
        values = np.array(self.values, dtype=complex)
        if values.shape != (D, D):
            raise DimensionError(f"table shape {values.shape} != {(D, D)}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __getitem__(self, st: tuple[Label, Label]) -> complex:
        s, t = st
        return complex(self.values[_idx(s, self.d, self.n), _idx(t, self.d, self.n)])

    def log_vector(self) -> np.ndarray:
        """log nu~_{a,b} at position a + d^n b."""
        return np.log(self.values.T.reshape(-1).astype(complex))


@dataclass(frozen=True, eq=False)
class ErrorRateMatrix:
    """Register-shift probabilities ``nu[a, b]``; ``N`` is the transpose."""

    d: int
    n: int
    nu: np.ndarray

    def __post_init__(self):
        D = self.d**self.n
        nu = np.array(self.nu)
        if nu.shape != (D, D):
            raise DimensionError(f"error-rate shape {nu.shape} != {(D, D)}")
        nu.setflags(write=False)
        object.__setattr__(self, "nu", nu)

    @property
    def N(self) -> np.ndarray:
        return self.nu.T

    def __getitem__(self, ab: tuple[Label, Label]) -> complex:
        a, b = ab
        return self.nu[_idx(a, self.d, self.n), _idx(b, self.d, self.n)]

    def stochastic_problems(self, atol: float = STOCHASTIC_ATOL) -> list[str]:
        out = []
        imag = float(np.abs(np.imag(self.nu)).max())
        if imag > atol:
            out.append(f"non-real entries (max imaginary part {imag:.3e})")
        low = float(np.real(self.nu).min())
        if low < -atol:
            out.append(f"negative entry {low:.3e}")
        total = complex(self.nu.sum())
        if abs(total - 1) > atol:
            out.append(f"entries sum to {total:.12g}")
        return out

    def is_stochastic(self, atol: float = STOCHASTIC_ATOL) -> bool:
        return not self.stochastic_problems(atol)

    def real(self, atol: float = STOCHASTIC_ATOL) -> ErrorRateMatrix:
        """Checked conversion to a real probability table."""
        problems = self.stochastic_problems(atol)
        if problems:
            raise InstrumentError("error rates are not a distribution: " + "; ".join(problems))
        return ErrorRateMatrix(self.d, self.n, np.clip(np.real(self.nu), 0.0, None))


# ---------------------------------------------------------------------------
# constructors


def ideal_measurement(d: int, n: int) -> Instrument:
    """Luders instrument with M_k = |k>><<k|."""
    weyl.check_dims(d, n)
    P = weyl.projector_vectors(d, n)
    return Instrument(d, n, np.einsum("ik,jk->kij", P, P.conj()))


def instrument_from_branches(branches: Sequence[np.ndarray], d: int, n: int, validate: bool = True) -> Instrument:
    out = Instrument(d, n, np.asarray(branches))
    return out.validate() if validate else out


def stochastic_instrument(rates: ErrorRateMatrix | np.ndarray, d: int | None = None, n: int | None = None) -> Instrument:
    """Uniform stochastic instrument M_k = sum_{a,b} nu_{a,b} |k+b>><<k+a|."""
    if not isinstance(rates, ErrorRateMatrix):
        if d is None or n is None:
            raise TypeError("d and n are required when passing a raw array")
        rates = ErrorRateMatrix(d, n, rates)
    d, n, nu = rates.d, rates.n, rates.nu
    D = d**n
    add = weyl.addition_table(d, n)
    P = weyl.projector_vectors(d, n)
    branches = np.empty((D, D * D, D * D), dtype=complex)
    for k in range(D):
        Q = np.zeros((D, D), dtype=complex)
        # Q[k+b, k+a] = nu[a, b]
        Q[np.ix_(add[k], add[k])] = nu.T
        branches[k] = P @ Q @ P.T
    return Instrument(d, n, branches)


def sandwich_instrument(pre: np.ndarray | None, post: np.ndarray | None, base: Instrument | None = None, *, d: int | None = None, n: int | None = None) -> Instrument:
    """Branches post @ M_k @ pre around ``base`` (ideal measurement by default)."""
    if base is None:
        if d is None or n is None:
            raise TypeError("d and n are required without a base instrument")
        base = ideal_measurement(d, n)
    D2 = base.d ** (2 * base.n)
    pre = np.eye(D2) if pre is None else np.asarray(pre)
    post = np.eye(D2) if post is None else np.asarray(post)
    return Instrument(base.d, base.n, post[None] @ base.branches @ pre[None])


def confusion_instrument(confusion: np.ndarray, d: int, n: int) -> Instrument:
    """Classification errors: M_k = sum_j confusion[k, j] |j>><<j|."""
    confusion = np.asarray(confusion, dtype=float)
    D = d**n
    if confusion.shape != (D, D):
        raise DimensionError(f"confusion matrix shape {confusion.shape} != {(D, D)}")
    if (confusion < 0).any() or not np.allclose(confusion.sum(axis=0), 1.0, atol=1e-12):
        raise InstrumentError("confusion matrix columns must be probability vectors")
    P = weyl.projector_vectors(d, n)
    return Instrument(d, n, np.einsum("ij,kj,lj->kil", P, confusion, P.conj()))


def weyl_stochastic_channel(probabilities: Mapping[tuple[Label, Label], float], d: int, n: int) -> np.ndarray:
    """sum p_{x,z} (Z^z X^x conjugation); missing mass goes to the identity."""
    D2 = d ** (2 * n)
    S = np.zeros((D2, D2), dtype=complex)
    total = 0.0
    for (x, z), p in probabilities.items():
        if p < 0:
            raise InstrumentError(f"negative Weyl error probability {p}")
        xv = ZdVector.from_index(_idx(x, d, n), d, n)
        zv = ZdVector.from_index(_idx(z, d, n), d, n)
        S += p * weyl.weyl_channel(xv, zv)
        total += p
    if total > 1 + 1e-12:
        raise InstrumentError(f"Weyl error probabilities sum to {total} > 1")
    return S + (1 - total) * np.eye(D2)


def random_instrument(d: int, n: int, rng: np.random.Generator, kraus_rank: int = 2) -> Instrument:
    """Haar-like random CP trace-preserving instrument."""
    D = d**n
    blocks = D * kraus_rank
    G = rng.normal(size=(blocks * D, D)) + 1j * rng.normal(size=(blocks * D, D))
    Q, _ = np.linalg.qr(G)
    kraus = Q.reshape(D, kraus_rank, D, D)
    return Instrument(d, n, np.array([weyl.superoperator_from_kraus(kraus[k], d, n) for k in range(D)]))


def _random_unitary_near_identity(D: int, rng: np.random.Generator, angle: float) -> np.ndarray:
    H = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    H = (H + H.conj().T) / 2
    w, V = np.linalg.eigh(H)
    w = angle * w / max(np.abs(w).max(), 1e-300)
    return (V * np.exp(-1j * w)) @ V.conj().T


def random_noisy_measurement(d: int, n: int, rng: np.random.Generator, strength: float = 0.05) -> Instrument:
    """Ideal measurement dressed with small coherent, stochastic and readout errors."""
    D = d**n
    D2 = D * D

    def noise_channel():
        U = _random_unitary_near_identity(D, rng, strength)
        probs = rng.dirichlet(np.ones(D2)) * strength * rng.uniform()
        weyl_part = sum(
            probs[i] * weyl.weyl_channel(ZdVector.from_index(i // D, d, n), ZdVector.from_index(i % D, d, n))
            for i in range(1, D2)
        )
        weyl_part = weyl_part + (1 - probs[1:].sum()) * np.eye(D2)
        return weyl.conjugation_superoperator(U, d, n) @ weyl_part

    confusion = np.eye(D) * (1 - strength) + rng.dirichlet(np.ones(D), size=D).T * strength
    base = confusion_instrument(confusion / confusion.sum(axis=0), d, n)
    return sandwich_instrument(noise_channel(), noise_channel(), base)


# ---------------------------------------------------------------------------
# fidelities and error rates


def transfer_elements(M: Instrument) -> np.ndarray:
    """Array T[k, s, t] = <<Z^t| M_k |Z^s>>."""
    V = weyl.clock_vectors(M.d, M.n)
    return np.einsum("it,kij,js->kst", V.conj(), M.branches, V)


def gpf_table(M: Instrument) -> FidelityTable:
    """nu~_{s,t} = d^-n sum_k conj(chi_k(s - t)) <<Z^t|M_k|Z^s>>."""
    d, n = M.d, M.n
    D = d**n
    T = transfer_elements(M)
    chars = weyl.character_table(d, n)
    sub = weyl.addition_table(d, n)[:, weyl.negation_index(d, n)]  # sub[s, t] = idx(s - t)
    # phase[k, s, t] = conj(chi_k(s - t))
    phase = chars[:, sub].conj()
    values = (phase * T).sum(axis=0) / D
    return FidelityTable(d, n, values)


def gpf(M: Instrument, s: Label, t: Label) -> complex:
    return gpf_table(M)[s, t]


def error_rates_from_gpf(table: FidelityTable) -> ErrorRateMatrix:
    """nu_{a,b} = d^-2n sum_{s,t} nu~_{s,t} conj(chi_s(a)) chi_t(b)."""
    T = weyl.character_table(table.d, table.n)
    D = table.d**table.n
    return ErrorRateMatrix(table.d, table.n, T.conj().T @ table.values @ T / D**2)


def gpf_from_error_rates(rates: ErrorRateMatrix) -> FidelityTable:
    """nu~_{s,t} = sum_{a,b} nu_{a,b} chi_s(a) conj(chi_t(b))."""
    T = weyl.character_table(rates.d, rates.n)
    return FidelityTable(rates.d, rates.n, T @ rates.nu @ T.conj().T)


def error_rates(M: Instrument) -> ErrorRateMatrix:
    return error_rates_from_gpf(gpf_table(M))


def compiled_from_gpf(table: FidelityTable) -> Instrument:
    """M^_k = d^-2n sum_{s,t} chi_k(s - t) nu~_{s,t} |Z^t>><<Z^s|."""
    d, n = table.d, table.n
    D = d**n
    V = weyl.clock_vectors(d, n)
    chars = weyl.character_table(d, n)
    sub = weyl.addition_table(d, n)[:, weyl.negation_index(d, n)]
    coeff = chars[:, sub] * table.values[None] / D**2  # [k, s, t]
    return Instrument(d, n, np.einsum("kst,it,js->kij", coeff, V, V.conj()))


def randomly_compile(M: Instrument) -> Instrument:
    """Closed-form randomly compiled instrument built from the error rates of M."""
    return stochastic_instrument(error_rates(M))


def conjugated_instrument(M: Instrument, a: Label, b: Label, x: Label) -> Instrument:
    """One randomization: branch k is X^x Z^a M_{k-x} Z^b X^-x (as channels)."""
    d, n = M.d, M.n
    av, bv, xv = (ZdVector.from_index(_idx(v, d, n), d, n) for v in (a, b, x))
    zero = ZdVector.zero(d, n)
    left = weyl.weyl_channel(xv, zero) @ weyl.weyl_channel(zero, av)
    right = weyl.weyl_channel(zero, bv) @ weyl.weyl_channel(-xv, zero)
    D = d**n
    shifted = np.array([M.branches[(ZdVector.from_index(k, d, n) - xv).index] for k in range(D)])
    return Instrument(d, n, left[None] @ shifted @ right[None])


def brute_force_compile(M: Instrument) -> Instrument:
    """Exact average of :func:`conjugated_instrument` over all (a, b, x)."""
    d, n = M.d, M.n
    D = d**n
    if D**3 > BRUTE_FORCE_LIMIT:
        raise DimensionError(f"d^(3n) = {D ** 3} exceeds brute-force limit {BRUTE_FORCE_LIMIT}")
    acc = np.zeros_like(M.branches)
    for a in range(D):
        for b in range(D):
            for x in range(D):
                acc += conjugated_instrument(M, a, b, x).branches
    return Instrument(d, n, acc / D**3)


def is_uniform_stochastic(M: Instrument, atol: float = 1e-10) -> bool:
    rates = error_rates(M)
    if not rates.is_stochastic(atol):
        return False
    return stochastic_instrument(rates.real(atol)).allclose(M, atol=max(atol, 1e-9))


def error_rate(compiled: Instrument | ErrorRateMatrix, atol: float = STOCHASTIC_ATOL) -> float:
    """epsilon = 1 - nu_{0,0}, half the diamond distance to the ideal instrument."""
    if isinstance(compiled, Instrument):
        if not is_uniform_stochastic(compiled, atol):
            raise InstrumentError("instrument is not uniform stochastic; compile it first")
        rates = error_rates(compiled)
    else:
        rates = compiled
    rates = rates.real(atol)
    return float(1.0 - rates.nu[0, 0])


# ---------------------------------------------------------------------------
# single-qubit gauge freedom


def _pauli_vectors() -> np.ndarray:
    paulis = [
        np.eye(2),
        np.array([[0, 1], [1, 0]]),
        np.array([[0, -1j], [1j, 0]]),
        np.diag([1.0, -1.0]),
    ]
    return np.array([weyl.vectorize(P, 2, 1) for P in paulis]).T


def gauge_superoperator(ratio: float) -> np.ndarray:
    """B with 2B = |I>><<I| + |X>><<X| + |Y>><<Y| + ratio |Z>><<Z|."""
    if ratio == 0 or not np.isfinite(ratio):
        raise InstrumentError(f"gauge ratio must be finite and nonzero, got {ratio}")
    V = _pauli_vectors()
    return (V * np.array([1.0, 1.0, 1.0, ratio])) @ V.conj().T / 2


def gauge_transform(M: Instrument, ratio: float) -> Instrument:
    """Similarity transform M_k -> B M_k B^-1 (qubit only).

    The state must be mapped with the same ``B`` for sequence statistics to be
    preserved; see :func:`gauge_superoperator`. The output is generally not CP.
    """
    if (M.d, M.n) != (2, 1):
        raise DimensionError("the gauge transform is defined for a single qubit")
    B = gauge_superoperator(ratio)
    B_inv = gauge_superoperator(1.0 / ratio)
    return Instrument(2, 1, B[None] @ M.branches @ B_inv[None])


def swap_gauge_ratio(M: Instrument) -> float:
    """The ratio nu~_{1,0} / nu~_{0,1} that swaps the two off-diagonal fidelities."""
    table = gpf_table(M)
    nu01, nu10 = table[0, 1], table[1, 0]
    if abs(nu01) < 1e-14:
        raise InstrumentError("nu~_{0,1} vanishes; the gauge is undefined")
    ratio = nu10 / nu01
    if abs(ratio.imag) > 1e-10:
        raise InstrumentError(f"gauge ratio is not real: {ratio}")
    return float(ratio.real)

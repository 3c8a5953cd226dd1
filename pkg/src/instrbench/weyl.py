"""Arithmetic over Z_d^n, characters, Weyl operators/channels and vectorization.

Conventions used throughout the package:

* A vector ``j`` in Z_d^n is indexed by the integer ``sum_i j_i d^(n-1-i)``,
  so qudit 0 is the most significant digit. This matches ``np.kron`` ordering.
* Operators are vectorized in the interleaved per-qudit order

      |A>> = sum_{a,b} <b|A|a> (x)_j |a_j b_j>,

  which gives ``<<A|B>> = tr(A^dag B)`` and ``|A (x) B>> = |A>> (x) |B>>``.
  Superoperators act on such vectors from the left.
"""

from __future__ import annotations

import functools
import itertools
import json
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass

import numpy as np

BASIS_CONVENTION = "interleaved-column:|a_j b_j>=<b|A|a>"

# Dense storage only: superoperators are (d^n)^2 x (d^n)^2.
MAX_SUPEROPERATOR_DIM = 4096


class DimensionError(ValueError):
    """Raised when operands live on incompatible (d, n) spaces."""


def check_dims(d: int, n: int, superoperator: bool = True) -> None:
    if d < 2 or n < 1:
        raise DimensionError(f"need d >= 2 and n >= 1, got d={d}, n={n}")
    limit = d ** (2 * n) if superoperator else d**n
    if limit > MAX_SUPEROPERATOR_DIM:
        raise DimensionError(f"d={d}, n={n} exceeds the dense scale limit {MAX_SUPEROPERATOR_DIM}")


@dataclass(frozen=True)
class ZdVector:
    """An element of Z_d^n with entries reduced mod d."""

    entries: tuple[int, ...]
    d: int

    def __post_init__(self):
        if self.d < 2:
            raise DimensionError(f"d must be >= 2, got {self.d}")
        if len(self.entries) < 1:
            raise DimensionError("a ZdVector needs at least one entry")
        object.__setattr__(self, "entries", tuple(int(e) % self.d for e in self.entries))

    @classmethod
    def of(cls, entries: int | Iterable[int], d: int) -> ZdVector:
        if isinstance(entries, (int, np.integer)):
            entries = (int(entries),)
        return cls(tuple(entries), d)

    @classmethod
    def zero(cls, d: int, n: int) -> ZdVector:
        return cls((0,) * n, d)

    @classmethod
    def from_index(cls, index: int, d: int, n: int) -> ZdVector:
        if not 0 <= index < d**n:
            raise DimensionError(f"index {index} out of range for d={d}, n={n}")
        digits = []
        for _ in range(n):
            index, r = divmod(index, d)
            digits.append(r)
        return cls(tuple(reversed(digits)), d)

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def index(self) -> int:
        out = 0
        for e in self.entries:
            out = out * self.d + e
        return out

    def _check(self, other: ZdVector) -> None:
        if not isinstance(other, ZdVector):
            raise TypeError(f"expected ZdVector, got {type(other).__name__}")
        if other.d != self.d or other.n != self.n:
            raise DimensionError(f"dims ({self.d}, {self.n}) vs ({other.d}, {other.n})")

    def __add__(self, other: ZdVector) -> ZdVector:
        self._check(other)
        return ZdVector(tuple(a + b for a, b in zip(self.entries, other.entries)), self.d)

    def __sub__(self, other: ZdVector) -> ZdVector:
        self._check(other)
        return ZdVector(tuple(a - b for a, b in zip(self.entries, other.entries)), self.d)

    def __neg__(self) -> ZdVector:
        return ZdVector(tuple(-a for a in self.entries), self.d)

    def dot(self, other: ZdVector) -> int:
        self._check(other)
        return sum(a * b for a, b in zip(self.entries, other.entries)) % self.d

    def is_zero(self) -> bool:
        return not any(self.entries)

    def __iter__(self) -> Iterator[int]:
        return iter(self.entries)

    def __repr__(self) -> str:
        return f"ZdVector({list(self.entries)}, d={self.d})"


def all_vectors(d: int, n: int) -> list[ZdVector]:
    """Every element of Z_d^n in index order."""
    return [ZdVector(t, d) for t in itertools.product(range(d), repeat=n)]


@dataclass(frozen=True)
class Phase:
    """The root of unity exp(2 pi i numerator / d), stored exactly."""

    numerator: int
    d: int

    def __post_init__(self):
        object.__setattr__(self, "numerator", int(self.numerator) % self.d)

    def __mul__(self, other: Phase) -> Phase:
        if not isinstance(other, Phase):
            return NotImplemented
        if other.d != self.d:
            raise DimensionError(f"phase orders differ: {self.d} vs {other.d}")
        return Phase(self.numerator + other.numerator, self.d)

    def conjugate(self) -> Phase:
        return Phase(-self.numerator, self.d)

    def __pow__(self, k: int) -> Phase:
        return Phase(self.numerator * k, self.d)

    def __complex__(self) -> complex:
        return complex(_roots_of_unity(self.d)[self.numerator])

    def is_one(self) -> bool:
        return self.numerator == 0


@functools.lru_cache(maxsize=None)
def _roots_of_unity(d: int) -> np.ndarray:
    # Exact values at quarter turns so that d = 2, 4 give exact +-1, +-i.
    q = np.arange(d)
    roots = np.exp(2j * np.pi * q / d)
    for k in range(d):
        if (4 * k) % d == 0:
            roots[k] = 1j ** ((4 * k) // d)
    roots.setflags(write=False)
    return roots


def chi(z: ZdVector, j: ZdVector) -> Phase:
    """Character chi_z(j) = exp(2 pi i z.j / d) as an exact phase."""
    return Phase(z.dot(j), z.d)


@functools.lru_cache(maxsize=None)
def _digits(d: int, n: int) -> np.ndarray:
    """Integer array of shape (d^n, n): row i holds the Z_d^n vector with index i."""
    out = np.array(list(itertools.product(range(d), repeat=n)), dtype=np.int64).reshape(d**n, n)
    out.setflags(write=False)
    return out


def digits(d: int, n: int) -> np.ndarray:
    return _digits(d, n)


def index_of(entries: Sequence[int] | np.ndarray, d: int) -> int | np.ndarray:
    """Index of one vector (1-d input) or of each row of a 2-d integer array."""
    arr = np.asarray(entries, dtype=np.int64) % d
    weights = d ** np.arange(arr.shape[-1] - 1, -1, -1)
    out = arr @ weights
    return int(out) if np.ndim(out) == 0 else out


@functools.lru_cache(maxsize=None)
def _exponent_table(d: int, n: int) -> np.ndarray:
    dig = _digits(d, n)
    out = (dig @ dig.T) % d
    out.setflags(write=False)
    return out


def character_exponents(d: int, n: int) -> np.ndarray:
    """Integer table E[z, j] = z.j mod d; chi_z(j) = omega^E[z, j]."""
    return _exponent_table(d, n)


@functools.lru_cache(maxsize=None)
def _character_table(d: int, n: int) -> np.ndarray:
    out = _roots_of_unity(d)[_exponent_table(d, n)]
    out.setflags(write=False)
    return out


def character_table(d: int, n: int) -> np.ndarray:
    """Complex table T[z, j] = chi_z(j), converted from exact exponents."""
    return _character_table(d, n)


def _single_x(d: int, x: int) -> np.ndarray:
    return np.roll(np.eye(d, dtype=complex), x % d, axis=0)


def _single_z(d: int, z: int) -> np.ndarray:
    return np.diag(_roots_of_unity(d)[(z * np.arange(d)) % d])


def _tensor(factors: Iterable[np.ndarray]) -> np.ndarray:
    return functools.reduce(np.kron, factors)


def shift_operator(x: ZdVector) -> np.ndarray:
    """X^x = sum_j |j + x><j|."""
    return _tensor(_single_x(x.d, e) for e in x)


def clock_operator(z: ZdVector) -> np.ndarray:
    """Z^z = sum_j chi_z(j) |j><j|."""
    return _tensor(_single_z(z.d, e) for e in z)


def weyl_operator(x: ZdVector, z: ZdVector) -> np.ndarray:
    """The Weyl operator Z^z X^x as a dense d^n x d^n matrix."""
    x._check(z)
    check_dims(x.d, x.n, superoperator=False)
    return clock_operator(z) @ shift_operator(x)


def basis_projector(k: ZdVector) -> np.ndarray:
    D = k.d**k.n
    out = np.zeros((D, D), dtype=complex)
    out[k.index, k.index] = 1.0
    return out


@functools.lru_cache(maxsize=None)
def _interleave_perm(d: int, n: int) -> np.ndarray:
    """perm with vec_interleaved = vec_column_stacked[perm]."""
    D = d**n
    # column stacking: flat index a * D + b, a = column (input) multi-index
    col = np.arange(D * D).reshape([d] * (2 * n))
    order = [ax for j in range(n) for ax in (j, n + j)]
    perm = col.transpose(order).reshape(-1)
    perm.setflags(write=False)
    return perm


def vectorize(A: np.ndarray, d: int, n: int) -> np.ndarray:
    """|A>> in the interleaved basis."""
    A = np.asarray(A)
    D = d**n
    if A.shape != (D, D):
        raise DimensionError(f"expected a {D}x{D} operator, got shape {A.shape}")
    return A.reshape(-1, order="F")[_interleave_perm(d, n)].astype(complex)


def devectorize(v: np.ndarray, d: int, n: int) -> np.ndarray:
    v = np.asarray(v)
    D = d**n
    if v.shape != (D * D,):
        raise DimensionError(f"expected a length-{D * D} vector, got shape {v.shape}")
    col = np.empty(D * D, dtype=complex)
    col[_interleave_perm(d, n)] = v
    return col.reshape((D, D), order="F")


def superoperator_from_kraus(kraus: Iterable[np.ndarray], d: int, n: int) -> np.ndarray:
    """Superoperator of rho -> sum_K K rho K^dag in the interleaved basis."""
    D = d**n
    perm = _interleave_perm(d, n)
    S = np.zeros((D * D, D * D), dtype=complex)
    for K in kraus:
        K = np.asarray(K, dtype=complex)
        if K.shape != (D, D):
            raise DimensionError(f"Kraus operator shape {K.shape} != ({D}, {D})")
        S += np.kron(K.conj(), K)
    return S[np.ix_(perm, perm)]


def conjugation_superoperator(U: np.ndarray, d: int, n: int) -> np.ndarray:
    return superoperator_from_kraus([U], d, n)


def weyl_channel(x: ZdVector, z: ZdVector) -> np.ndarray:
    """Conjugation by Z^z X^x; X and Z parts commute as channels."""
    check_dims(x.d, x.n)
    return conjugation_superoperator(weyl_operator(x, z), x.d, x.n)


@functools.lru_cache(maxsize=None)
def _weyl_channel_stack(d: int, n: int) -> np.ndarray:
    vecs = all_vectors(d, n)
    out = np.array([weyl_channel(x, z) for x in vecs for z in vecs])
    out.setflags(write=False)
    return out


def weyl_channel_stack(d: int, n: int) -> np.ndarray:
    """All Weyl channels, entry ``x_index * d^n + z_index`` is Z^z X^x conjugation."""
    return _weyl_channel_stack(d, n)


@functools.lru_cache(maxsize=None)
def _clock_vectors(d: int, n: int) -> np.ndarray:
    vecs = all_vectors(d, n)
    out = np.array([vectorize(clock_operator(z), d, n) for z in vecs]).T
    out.setflags(write=False)
    return out


def clock_vectors(d: int, n: int) -> np.ndarray:
    """Matrix whose column s is |Z^s>>."""
    return _clock_vectors(d, n)


@functools.lru_cache(maxsize=None)
def _projector_vectors(d: int, n: int) -> np.ndarray:
    D = d**n
    out = np.zeros((D * D, D), dtype=complex)
    for k in range(D):
        P = np.zeros((D, D))
        P[k, k] = 1.0
        out[:, k] = vectorize(P, d, n)
    out.setflags(write=False)
    return out


def projector_vectors(d: int, n: int) -> np.ndarray:
    """Matrix whose column k is |k>> = vec(|k><k|)."""
    return _projector_vectors(d, n)


def identity_vector(d: int, n: int) -> np.ndarray:
    return vectorize(np.eye(d**n), d, n)


def choi_matrix(S: np.ndarray, d: int, n: int) -> np.ndarray:
    """Choi matrix sum_{ij} |i><j| (x) E(|i><j|)."""
    D = d**n
    choi = np.zeros((D * D, D * D), dtype=complex)
    for i in range(D):
        for j in range(D):
            E = np.zeros((D, D))
            E[i, j] = 1.0
            out = devectorize(S @ vectorize(E, d, n), d, n)
            choi[i * D:(i + 1) * D, j * D:(j + 1) * D] = out
    return choi


def is_completely_positive(S: np.ndarray, d: int, n: int, atol: float = 1e-10) -> bool:
    choi = choi_matrix(S, d, n)
    if not np.allclose(choi, choi.conj().T, atol=atol):
        return False
    return bool(np.linalg.eigvalsh((choi + choi.conj().T) / 2).min() >= -atol)


# ---------------------------------------------------------------------------
# serialization


def operator_to_dict(matrix: np.ndarray, d: int, n: int, kind: str) -> dict:
    """Row-major list of [re, im] pairs with a (d, n, basis) header."""
    matrix = np.asarray(matrix, dtype=complex)
    flat = matrix.reshape(-1)
    return {
        "kind": kind,
        "d": d,
        "n": n,
        "basis": BASIS_CONVENTION,
        "shape": list(matrix.shape),
        "data": [[float(v.real), float(v.imag)] for v in flat],
    }


def operator_from_dict(doc: dict, kind: str | None = None) -> tuple[np.ndarray, int, int]:
    if kind is not None and doc.get("kind") != kind:
        raise ValueError(f"expected kind {kind!r}, got {doc.get('kind')!r}")
    if doc.get("basis") != BASIS_CONVENTION:
        raise ValueError(f"unsupported basis convention {doc.get('basis')!r}")
    d, n = int(doc["d"]), int(doc["n"])
    shape = tuple(doc["shape"])
    expected = d**n if doc["kind"] == "operator" else d ** (2 * n)
    if shape != (expected, expected):
        raise DimensionError(f"shape {shape} inconsistent with d={d}, n={n}")
    data = np.array(doc["data"], dtype=float)
    matrix = (data[:, 0] + 1j * data[:, 1]).reshape(shape)
    return matrix, d, n


def dump_operator(matrix: np.ndarray, d: int, n: int) -> str:
    kind = "operator" if matrix.shape[0] == d**n else "superoperator"
    return json.dumps(operator_to_dict(matrix, d, n, kind))


def load_operator(text: str) -> tuple[np.ndarray, int, int]:
    return operator_from_dict(json.loads(text))


@functools.lru_cache(maxsize=None)
def _addition_table(d: int, n: int) -> np.ndarray:
    dig = _digits(d, n)
    out = index_of((dig[:, None, :] + dig[None, :, :]) % d, d)
    out.setflags(write=False)
    return out


def addition_table(d: int, n: int) -> np.ndarray:
    """Index table: ``table[i, j]`` is the index of vec(i) + vec(j) mod d."""
    return _addition_table(d, n)


def negation_index(d: int, n: int) -> np.ndarray:
    return index_of((-_digits(d, n)) % d, d)

"""Eigenvalue localization: Gershgorin discs, ovals of Cassini and dominant-eigenvalue bounds."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np


def _square(A) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return A


def off_diagonal_radii(A) -> np.ndarray:
    """r_i(A) = sum_{j != i} |A_ij|."""
    A = _square(A)
    absA = np.abs(A)
    return absA.sum(axis=1) - np.abs(np.diag(A))


@dataclass(frozen=True, eq=False)
class DiscSet:
    centers: np.ndarray
    radii: np.ndarray
    row_norms: np.ndarray

    def __len__(self) -> int:
        return len(self.centers)

    def contains(self, z: complex, atol: float = 0.0) -> np.ndarray:
        """Membership of ``z`` in each disc."""
        return np.abs(z - self.centers) <= self.radii + atol

    def union_contains(self, z: complex, atol: float = 0.0) -> bool:
        return bool(self.contains(z, atol).any())


def gershgorin(A) -> DiscSet:
    A = _square(A)
    radii = off_diagonal_radii(A)
    centers = np.diag(A).astype(complex)
    return DiscSet(centers, radii, np.abs(centers) + radii)


def eigenvalues_in_gershgorin(A, atol: float = 1e-9) -> bool:
    """Dense eigensolve check that every eigenvalue lies in the disc union."""
    discs = gershgorin(A)
    return all(discs.union_contains(lam, atol) for lam in np.linalg.eigvals(_square(A)))


def brauer_contains(A, z: complex, atol: float = 0.0) -> dict[tuple[int, int], bool]:
    """Membership of ``z`` in each oval |z - A_ii||z - A_jj| <= r_i r_j, i < j."""
    A = _square(A)
    if A.shape[0] < 2:
        raise ValueError("ovals of Cassini need dimension >= 2")
    c = np.diag(A)
    r = off_diagonal_radii(A)
    dist = np.abs(z - c)
    L = A.shape[0]
    return {
        (i, j): bool(dist[i] * dist[j] <= r[i] * r[j] + atol)
        for i in range(L)
        for j in range(i + 1, L)
    }


def brauer_union_contains(A, z: complex, atol: float = 0.0) -> bool:
    return any(brauer_contains(A, z, atol).values())


def disc_distance(A, i: int, j: int) -> float:
    """Exact k_{i,j}: smallest distance between points of discs i and j."""
    A = _square(A)
    r = off_diagonal_radii(A)
    return float(max(0.0, abs(A[i, i] - A[j, j]) - r[i] - r[j]))


def disc_separation_bound(A, i: int) -> float:
    """Lower bound max(0, |A_00| - r_0 - R_i) on k_{0,i}.

    Disc i sits inside the origin-centred disc of radius R_i, so disc 0 is at
    least this far from it.
    """
    A = _square(A)
    L = A.shape[0]
    if not 0 < i < L:
        raise IndexError(f"index {i} outside 1..{L - 1}")
    discs = gershgorin(A)
    return float(max(0.0, abs(A[0, 0]) - discs.radii[0] - discs.row_norms[i]))


def refined_radius(A, separation: str = "bound") -> float | None:
    """Radius max_i r_0 r_i / k_{0,i} around A_00 containing exactly one eigenvalue.

    ``separation`` selects the exact disc distance (``"exact"``) or the
    cheaper lower bound (``"bound"``). Returns None when some r_i >= k_{0,i},
    in which case the refinement does not apply.
    """
    A = _square(A)
    L = A.shape[0]
    if L == 1:
        return 0.0
    r = off_diagonal_radii(A)
    out = 0.0
    for i in range(1, L):
        if separation == "exact":
            k = disc_distance(A, 0, i)
        elif separation == "bound":
            k = disc_separation_bound(A, i)
        else:
            raise ValueError(f"unknown separation mode {separation!r}")
        if not r[i] < k:
            return None
        out = max(out, r[0] * r[i] / k)
    return out


@dataclass(frozen=True)
class DominantEigenBound:
    center: float
    radius: float | None
    subdominant_bound: float
    applicable: bool
    generic_radius: float | None = None
    reason: str = ""

    def contains(self, mu: complex, atol: float = 0.0) -> bool:
        return self.applicable and abs(mu - self.center) <= self.radius + atol


def dominant_eigen_bound(A, sum_atol: float = 1e-12) -> DominantEigenBound:
    """Bounds for a nonnegative matrix with unit total sum and A_00 = 1 - eps.

    For eps < 1/3 the dominant eigenvalue is within eps^2 / (1 - 2 eps) of
    A_00 and every other eigenvalue has modulus at most eps.
    """
    A = _square(A)
    if np.iscomplexobj(A):
        if np.abs(A.imag).max() > sum_atol:
            raise ValueError("matrix must be real and nonnegative")
        A = A.real
    if A.min() < 0:
        raise ValueError(f"matrix has a negative entry {A.min():.3e}")
    total = A.sum()
    if abs(total - 1) > sum_atol:
        raise ValueError(f"entries sum to {total:.15g}, expected 1")
    eps = 1.0 - float(A[0, 0])
    generic = refined_radius(A, "bound")
    if eps >= 1 / 3:
        return DominantEigenBound(float(A[0, 0]), None, eps, False, generic, f"eps = {eps:.6g} >= 1/3")
    radius = eps**2 / (1 - 2 * eps)
    return DominantEigenBound(float(A[0, 0]), radius, eps, True, generic)


def dominant_eigenpair(N) -> tuple[complex, complex]:
    """Largest-modulus eigenvalue mu of N and the amplitude A = 1^T P_mu e_0.

    P_mu is the spectral projector v w^T / (w^T v), so Pr(0; m) = A mu^m plus
    the contribution of the remaining eigenvalues.
    """
    N = _square(N)
    vals, right = np.linalg.eig(N)
    i = int(np.argmax(np.abs(vals)))
    mu = vals[i]
    lvals, left = np.linalg.eig(N.T)
    j = int(np.argmin(np.abs(lvals - mu)))
    v, w = right[:, i], left[:, j]
    proj = np.outer(v, w) / (w @ v)
    amplitude = proj[:, 0].sum()
    return complex(mu), complex(amplitude)


def jordan_size_heuristic(N, atol: float = 1e-8) -> int:
    """Heuristic largest Jordan block size minus one (never used by default).

    Counts how far the eigenvalue cluster's algebraic multiplicity exceeds the
    geometric multiplicity of N - lambda I at tolerance ``atol``.
    """
    N = _square(N)
    L = N.shape[0]
    vals = np.linalg.eigvals(N)
    worst = 0
    seen = np.zeros(L, dtype=bool)
    for i in range(L):
        if seen[i]:
            continue
        cluster = np.abs(vals - vals[i]) <= max(atol, atol * abs(vals[i])) ** 0.5
        seen |= cluster
        alg = int(cluster.sum())
        lam = vals[cluster].mean()
        geo = L - np.linalg.matrix_rank(N - lam * np.eye(L), tol=atol)
        worst = max(worst, alg - max(geo, 1))
    return worst


def allzeros_residual_bound(N, m: int, xi: int | str = "auto") -> float:
    """binom(m, xi) eps^(m - xi) with eps = 1 - N_00.

    ``xi="auto"`` is the always-valid worst case (dimension - 1);
    ``xi="heuristic"`` uses :func:`jordan_size_heuristic`.
    """
    N = np.real_if_close(_square(N))
    eps = 1.0 - float(np.real(N[0, 0]))
    if eps >= 1 / 3:
        raise ValueError(f"eps = {eps:.6g} >= 1/3; the single-exponential model is not justified")
    if xi == "auto":
        xi = N.shape[0] - 1
    elif xi == "heuristic":
        xi = jordan_size_heuristic(N)
    xi = int(xi)
    if xi < 0:
        raise ValueError("xi must be nonnegative")
    if m < xi:
        return float(comb(m, min(m, xi)))
    return float(comb(m, xi) * eps ** (m - xi))


def allzeros_residual(N, m: int) -> complex:
    """1^T (N^m - mu^m P_mu) e_0 evaluated as 1^T (N - mu P_mu)^m e_0.

    Same quantity as Pr(0; m) - A mu^m but free of the cancellation that
    swamps it once eps^m falls below double-precision roundoff.
    """
    N = _square(N).astype(complex)
    vals, right = np.linalg.eig(N)
    i = int(np.argmax(np.abs(vals)))
    mu = vals[i]
    lvals, left = np.linalg.eig(N.T)
    j = int(np.argmin(np.abs(lvals - mu)))
    proj = np.outer(right[:, i], left[:, j]) / (left[:, j] @ right[:, i])
    rest = np.linalg.matrix_power(N - mu * proj, m)
    return complex(rest[:, 0].sum())

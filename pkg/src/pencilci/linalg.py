"""Dense symmetric and symmetric-definite kernels.

Cholesky factorization with a positivity floor, the SPD square root (spectral
route plus a series-based cross-check), the Lyapunov derivative of the square
root, ordered generalized eigendecompositions with B-orthonormal eigenvectors,
and closed-form treatment of 2x2 pencils.

Matrices are plain float ndarrays; the symmetric ones are kept exactly
symmetric by construction via :func:`symmetrize`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NotPositiveDefinite, SeriesDiverged

__all__ = [
    "CholeskyFactor",
    "EigenPair",
    "symmetrize",
    "matrix_bandwidth",
    "cholesky",
    "spd_sqrt",
    "spd_sqrt_series",
    "sqrt_derivative",
    "gen_eig_ordered",
    "eig2x2_pencil",
    "coalescence_residual",
]

_EPS = np.finfo(float).eps

# Relative pivot floor: a Cholesky pivot at or below 1e3*eps*max(diag) is
# treated as a positive-definiteness violation rather than ground through.
PIVOT_FLOOR_FACTOR = 1e3 * _EPS

# Adjacent eigenvalues closer than 4*eps (relative to the larger magnitude)
# are flagged as ties; callers decide whether that means veering or failure.
TIE_RTOL = 4 * _EPS


def symmetrize(M: np.ndarray) -> np.ndarray:
    """Return (M + M.T)/2, enforcing exact entrywise symmetry."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def matrix_bandwidth(M: np.ndarray) -> int:
    """Smallest b such that M[i, j] == 0 whenever |i - j| > b."""
    M = np.asarray(M)
    n = M.shape[0]
    for d in range(n - 1, 0, -1):
        if np.any(np.diag(M, -d) != 0.0) or np.any(np.diag(M, d) != 0.0):
            return d
    return 0


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor with positive diagonal, L @ L.T = B."""

    L: np.ndarray
    bandwidth: int

    @property
    def n(self) -> int:
        return self.L.shape[0]


@dataclass(frozen=True)
class EigenPair:
    """Ordered eigendecomposition of a symmetric-definite pencil (A, B).

    values are sorted decreasing and vectors' columns satisfy V.T @ B @ V = I.
    Adjacent values agreeing to TIE_RTOL (relative to the larger magnitude)
    are not reordered or rejected; their 0-based positions are reported in
    degenerate_pairs. Column signs are unspecified; callers normalize.
    """

    values: np.ndarray
    vectors: np.ndarray
    degenerate_pairs: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def degenerate(self) -> bool:
        return bool(self.degenerate_pairs)


def _tie_pairs(values: np.ndarray) -> tuple[int, ...]:
    """0-based positions i where values[i] and values[i+1] tie to 4*eps.

    The scale uses the larger of the two magnitudes so an exact double zero
    (difference 0, scale 0) still counts as a tie.
    """
    diffs = values[:-1] - values[1:]
    scale = np.maximum(np.abs(values[:-1]), np.abs(values[1:]))
    return tuple(int(i) for i in np.flatnonzero(diffs <= TIE_RTOL * scale))


def cholesky(B: np.ndarray) -> CholeskyFactor:
    """Factor an SPD matrix as B = L @ L.T, L lower triangular, diag(L) > 0.

    The elimination touches only entries inside B's band, so the factor's
    bandwidth equals the bandwidth of B.

    Raises
    ------
    NotPositiveDefinite
        If an elimination pivot falls at or below PIVOT_FLOOR_FACTOR times
        the largest diagonal entry of B.
    """
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    bw = matrix_bandwidth(B)
    pivot_floor = PIVOT_FLOOR_FACTOR * float(np.max(np.diag(B)))
    L = np.zeros_like(B)
    for j in range(n):
        lo = max(0, j - bw)
        pivot = B[j, j] - L[j, lo:j] @ L[j, lo:j]
        if pivot <= pivot_floor:
            raise NotPositiveDefinite(
                f"Cholesky pivot {pivot:.6e} at index {j} is at or below the "
                f"floor {pivot_floor:.6e}"
            )
        L[j, j] = math.sqrt(pivot)
        hi = min(n, j + bw + 1)
        if hi > j + 1:
            rows = slice(j + 1, hi)
            L[rows, j] = (B[rows, j] - L[rows, lo:j] @ L[j, lo:j]) / L[j, j]
    return CholeskyFactor(L=L, bandwidth=bw)


def _eigh_spd(B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of B, raising if B is not safely SPD."""
    B = np.asarray(B, dtype=float)
    w, U = scipy.linalg.eigh(B)
    floor = PIVOT_FLOOR_FACTOR * float(np.max(np.abs(w), initial=0.0))
    if w[0] <= floor:
        raise NotPositiveDefinite(
            f"smallest eigenvalue {w[0]:.6e} is at or below the floor {floor:.6e}"
        )
    return w, U


def spd_sqrt(B: np.ndarray) -> np.ndarray:
    """The unique SPD square root of B, via spectral decomposition.

    Raises
    ------
    NotPositiveDefinite
        If B has an eigenvalue at or below the positivity floor.
    """
    w, U = _eigh_spd(B)
    return symmetrize((U * np.sqrt(w)) @ U.T)


def spd_sqrt_series(
    B: np.ndarray,
    gamma: float,
    tol: float = 1e-14,
    max_terms: int = 100_000,
) -> np.ndarray:
    """SPD square root via the binomial series, scaled by gamma.

    Writes C = B/gamma = I + Y and sums sqrt(gamma) * (I + Y)^{1/2} with the
    series (1 + y)^{1/2} = 1 + y/2 - y^2/8 + y^3/16 - ..., whose coefficients
    satisfy c_k = c_{k-1} (3 - 2k) / (2k), c_0 = 1. Convergence needs
    ||Y|| < 1, i.e. gamma > ||B||_2. Slow by design: this exists as a
    cross-check oracle for :func:`spd_sqrt`, not for production use.

    Raises
    ------
    SeriesDiverged
        If gamma <= ||B||_2, or term norms fail to decrease monotonically
        after the third term, or max_terms is exhausted.
    """
    B = np.asarray(B, dtype=float)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    norm_b = float(np.linalg.norm(B, 2))
    if norm_b >= gamma:
        raise SeriesDiverged(
            f"||B|| = {norm_b:.6e} >= gamma = {gamma:.6e}; series cannot contract"
        )
    n = B.shape[0]
    Y = B / gamma - np.eye(n)
    S = np.eye(n)
    power = np.eye(n)
    coeff = 1.0
    prev_norm = math.inf
    for k in range(1, max_terms + 1):
        coeff *= (3.0 - 2.0 * k) / (2.0 * k)
        power = power @ Y
        term = coeff * power
        term_norm = float(np.linalg.norm(term))
        S = S + term
        if term_norm < tol:
            break
        if k > 3 and term_norm >= prev_norm:
            raise SeriesDiverged(
                f"term {k} norm {term_norm:.6e} did not decrease "
                f"(previous {prev_norm:.6e})"
            )
        prev_norm = term_norm
    else:
        raise SeriesDiverged(f"no convergence within {max_terms} terms")
    return math.sqrt(gamma) * symmetrize(S)


def sqrt_derivative(S: np.ndarray, dB: np.ndarray) -> np.ndarray:
    """The unique symmetric X with X @ S + S @ X = dB, for SPD S.

    This is the derivative of the SPD square root: if S(t)^2 = B(t) then
    X = dS/dt solves the above with dB = dB/dt. Solved in S's eigenbasis,
    where the equation decouples to X_ij = dB_ij / (s_i + s_j).
    """
    dB = np.asarray(dB, dtype=float)
    s, U = _eigh_spd(S)
    dBt = U.T @ dB @ U
    X = U @ (dBt / np.add.outer(s, s)) @ U.T
    return symmetrize(X)


def gen_eig_ordered(A: np.ndarray, B: np.ndarray) -> EigenPair:
    """Ordered eigendecomposition of the symmetric-definite pencil (A, B).

    Returns eigenvalues sorted decreasing and B-orthonormal eigenvectors
    (V.T @ B @ V = I), computed by Cholesky reduction to a standard symmetric
    problem through a proven dense solver. Ties between adjacent eigenvalues
    are flagged on the result, not raised.

    Raises
    ------
    NotPositiveDefinite
        If B is not positive definite.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    try:
        w, V = scipy.linalg.eigh(A, B)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"B is not positive definite: {exc}") from None
    w = w[::-1].copy()
    V = V[:, ::-1].copy()
    return EigenPair(values=w, vectors=V, degenerate_pairs=_tie_pairs(w))


def eig2x2_pencil(
    a: float, b: float, c: float, alpha: float, beta: float, gamma: float
) -> tuple[float, float, float, float]:
    """Closed-form eigenvalues of the 2x2 pencil ([[a,b],[b,c]], [[alpha,beta],[beta,gamma]]).

    Rescales to at = a/alpha, ct = c/gamma, bt = b/sqrt(alpha*gamma),
    dt = beta/sqrt(alpha*gamma) and solves the shifted quadratic through
    ah = (at - ct)/2 and bh = bt - dt*(at + ct)/2:

        mu = (-bh*dt +- sqrt(bh^2 + (1 - dt^2) ah^2)) / (1 - dt^2),
        lam = mu + (at + ct)/2.

    Returns (mu1, mu2, lam1, lam2) with lam1 >= lam2.

    Raises
    ------
    NotPositiveDefinite
        If [[alpha, beta], [beta, gamma]] is not positive definite.
    """
    if not (alpha > 0.0 and alpha * gamma - beta * beta > 0.0):
        raise NotPositiveDefinite(
            f"[[{alpha}, {beta}], [{beta}, {gamma}]] is not positive definite"
        )
    root_ag = math.sqrt(alpha * gamma)
    at = a / alpha
    ct = c / gamma
    bt = b / root_ag
    dt = beta / root_ag
    ah = 0.5 * (at - ct)
    bh = bt - 0.5 * (at + ct) * dt
    denom = 1.0 - dt * dt
    disc = math.sqrt(bh * bh + denom * ah * ah)
    mu1 = (-bh * dt + disc) / denom
    mu2 = (-bh * dt - disc) / denom
    shift = 0.5 * (at + ct)
    return mu1, mu2, mu1 + shift, mu2 + shift


def coalescence_residual(
    a: float, b: float, c: float, alpha: float, beta: float, gamma: float
) -> tuple[float, float]:
    """The pair (a*gamma - alpha*c, b*gamma - beta*c).

    Both components vanish exactly when the 2x2 pencil
    ([[a,b],[b,c]], [[alpha,beta],[beta,gamma]]) has a double eigenvalue.
    """
    return a * gamma - alpha * c, b * gamma - beta * c

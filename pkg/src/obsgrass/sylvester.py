"""Extended-observability Gram matrices by three routes.

For Schur-stable pairs (A, C) and (A', C') the Gram matrix between their
extended observability matrices O = [C; CA; ...] and O' is

    G = O^T O' = sum_{t>=0} (A^T)^t C^T C' (A')^t

which is the unique solution of the Sylvester equation

    A^T G A' - G = -C^T C'.

Three evaluation routes are provided: a truncated-sum oracle, a general
dense solve via Kronecker vectorization, and the O(n^2) closed form for
diagonal A.  An analytic FLOPS model covers all three.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    DivisionNearOneError,
    NonFiniteError,
    NoUniqueSolutionError,
    UnknownSolverError,
)

# Minimum margin 1 - rho(A) rho(A') (dense) or min |1 - a_i a'_j| (diagonal)
# before the Gram series is declared numerically resonant.
RESONANCE_EPSILON = 1e-9

FLOPS_CSV_HEADER = "solver,n,flops,wall_time_s"


@dataclass(frozen=True)
class GramMatrix:
    """n x n inner-product matrix between extended observability matrices."""

    g: np.ndarray

    def __post_init__(self):
        g = np.array(self.g, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise DimensionMismatchError(f"gram matrix must be square, got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gram entries")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @property
    def n(self) -> int:
        return self.g.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.g))


@dataclass(frozen=True)
class FlopsReport:
    solver_name: str
    n: int
    flops: int
    wall_time: float = 0.0

    def csv_row(self) -> str:
        return f"{self.solver_name},{self.n},{self.flops},{self.wall_time:.9g}"


def spectral_radius(a: np.ndarray, iterations: int = 50) -> float:
    """Spectral radius estimate by power iteration.

    Returns the geometric mean of the trailing growth factors, which
    converges to rho(A) while damping the non-normal transient.  Cheap and
    adequate at the n <= 64 sizes this library targets.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    v = np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    log_growth = []
    for _ in range(iterations):
        w = a @ v
        nrm = float(np.linalg.norm(w))
        if nrm < 1e-300:
            return 0.0
        log_growth.append(math.log(nrm))
        v = w / nrm
    tail = log_growth[-max(iterations // 5, 1):]
    return float(math.exp(sum(tail) / len(tail)))


def _as_pair(a, c, what: str):
    """Normalize (a, c) to a 2-D transition plus row vector; 1-D a means diagonal."""
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float).reshape(-1)
    if a.ndim == 1:
        if a.shape[0] != c.shape[0]:
            raise DimensionMismatchError(f"{what}: a {a.shape} vs c {c.shape}")
        return np.diag(a), c, float(np.max(np.abs(a))) if a.size else 0.0
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] != c.shape[0]:
        raise DimensionMismatchError(f"{what}: a {a.shape} vs c {c.shape}")
    return a, c, None


def gram_truncated(a, c, a2, c2, horizon: int) -> GramMatrix:
    """Brute-force oracle: sum_{t=0}^{K-1} (A^T)^t C^T C' (A')^t.

    Accepts dense matrices or 1-D diagonals for a and a2.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    a, c, _ = _as_pair(a, c, "first pair")
    a2, c2, _ = _as_pair(a2, c2, "second pair")
    if a.shape[0] != a2.shape[0]:
        raise DimensionMismatchError(f"state dimensions differ: {a.shape[0]} vs {a2.shape[0]}")
    g = np.zeros((a.shape[0], a2.shape[0]))
    x, y = c.copy(), c2.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(horizon):
            g += np.outer(x, y)
            x = x @ a
            y = y @ a2
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
                raise NonFiniteError("truncated Gram sum overflowed (spectral radius >= 1?)")
    return GramMatrix(g)


def gram_sylvester_dense(a, c, a2, c2) -> GramMatrix:
    """General route: solve A^T G A' - G = -C^T C' by Kronecker vectorization.

    The n^2 x n^2 system (A'^T kron A^T - I) vec(G) = -vec(C^T C') is solved
    by dense LU.  Simple and exactly testable at n <= 64; the named
    Bartels-Stewart reference appears only in the FLOPS model, never as an
    implementation.

    Both transitions must be Schur-stable; the spectral-radius product is
    estimated by power iteration (max-abs for diagonal inputs) and the solve
    is refused when the stability margin falls below RESONANCE_EPSILON,
    since some eigenvalue product then sits too close to 1 for a trustworthy
    unique solution.
    """
    a, c, rho_a = _as_pair(a, c, "first pair")
    a2, c2, rho_a2 = _as_pair(a2, c2, "second pair")
    n = a.shape[0]
    if a2.shape[0] != n:
        raise DimensionMismatchError(f"state dimensions differ: {n} vs {a2.shape[0]}")
    if rho_a is None:
        rho_a = spectral_radius(a)
    if rho_a2 is None:
        rho_a2 = spectral_radius(a2)
    if rho_a * rho_a2 >= 1.0 - RESONANCE_EPSILON:
        raise NoUniqueSolutionError(
            f"spectral radius product {rho_a * rho_a2:.6g} leaves no stability margin; "
            "eigenvalue products approach 1"
        )
    m = np.kron(a2.T, a.T) - np.eye(n * n)
    rhs = -np.outer(c, c2).reshape(-1, order="F")
    try:
        vec_g = np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError:
        raise NoUniqueSolutionError("Sylvester system is singular") from None
    g = vec_g.reshape((n, n), order="F")
    return GramMatrix(g)


def gram_diagonal(a_diag, c, a2_diag, c2, epsilon: float = RESONANCE_EPSILON) -> GramMatrix:
    """Closed form for diagonal transitions: G = C^T C' / (1 - a a'^T), elementwise.

        G[i, j] = c[i] c'[j] / (1 - a[i] a'[j])

    Work: n^2 products a_i a'_j, n^2 subtractions, n^2 products c_i c'_j,
    n^2 divisions = 4n^2 FLOPS total.  Near-resonant denominators raise
    rather than clamp; soft normalization upstream keeps |a| < 1 strictly.
    """
    a_diag = np.asarray(a_diag, dtype=float).reshape(-1)
    c = np.asarray(c, dtype=float).reshape(-1)
    a2_diag = np.asarray(a2_diag, dtype=float).reshape(-1)
    c2 = np.asarray(c2, dtype=float).reshape(-1)
    if a_diag.shape != c.shape or a2_diag.shape != c2.shape or a_diag.shape != a2_diag.shape:
        raise DimensionMismatchError(
            f"shapes: a {a_diag.shape}, c {c.shape}, a' {a2_diag.shape}, c' {c2.shape}"
        )
    denom = 1.0 - np.outer(a_diag, a2_diag)
    if np.min(np.abs(denom)) < epsilon:
        raise DivisionNearOneError(
            f"denominator within {epsilon:.0e} of zero: some |a_i a'_j| is about 1"
        )
    return GramMatrix(np.outer(c, c2) / denom)


def count_flops(solver_name: str, n: int, horizon: int | None = None) -> FlopsReport:
    """Analytic FLOPS model for the three Gram routes.

    diagonal: 4n^2 (the closed form above).  dense-reference: 25n^3, the
    documented cost of the classical dense solver this path stands in for.
    truncated: K per-term costs of two n x n matrix products plus the outer
    accumulation, K(2n^3 + n^2).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if solver_name == "diagonal":
        return FlopsReport(solver_name, n, 4 * n * n)
    if solver_name in ("dense", "dense-reference"):
        return FlopsReport(solver_name, n, 25 * n ** 3)
    if solver_name == "truncated":
        if horizon is None or horizon < 1:
            raise ValueError("truncated solver needs a positive horizon")
        return FlopsReport(solver_name, n, horizon * (2 * n ** 3 + n * n))
    raise UnknownSolverError(f"unknown solver {solver_name!r}")

"""Subspace distances between extended observability subspaces.

Two routes to the geometry: Gram matrices (Sylvester solutions, no bases
ever formed) and principal angles of truncated orthonormalized bases.  The
chordal distance comes from the Gram route via the trace form

    d^2 = 2n - 2 Tr(G1^-1 G3 G2^-1 G3^T),

the simplified rank-1 distance from Gram traces only, and the classical
Binet-Cauchy / Fubini-Study / Martin / geodesic distances from principal
angles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateTraceError,
    DimensionMismatchError,
    IllConditionedGramError,
    InfiniteDistanceError,
    NoUniqueSolutionError,
    RankDeficientError,
    UnknownMetricError,
)
from .ssm import DenseSSM, DiagonalSSM, decay_horizon, truncated_observability
from .sylvester import gram_diagonal, gram_sylvester_dense, spectral_radius

# Self-Gram condition estimate above which the chordal trace form is refused.
GRAM_COND_THRESHOLD = 1e12

# Fraction by which singular values may exceed 1 before clamping is suspect.
SV_CLAMP_TOL = 1e-10

# Default equality-guard width for the simplified distance: tight enough to
# never mask genuine parameter differences at training scales.
EQUALITY_EPSILON = 1e-12

METRICS = ("chordal", "simplified", "binet_cauchy", "fubini_study", "martin", "geodesic")


@dataclass(frozen=True)
class PrincipalAngles:
    """Canonical angles between two subspaces, ascending, each in [0, pi/2]."""

    angles: np.ndarray

    def __post_init__(self):
        a = np.array(self.angles, dtype=float).reshape(-1)
        if np.any(a < 0.0) or np.any(a > math.pi / 2 + 1e-12):
            raise ValueError("principal angles must lie in [0, pi/2]")
        if np.any(np.diff(a) < 0.0):
            raise ValueError("principal angles must be sorted ascending")
        a.setflags(write=False)
        object.__setattr__(self, "angles", a)


@dataclass(frozen=True)
class SubspaceDistance:
    """A named distance value.

    For metric "chordal" the value is the squared chordal distance (the
    quantity the trace form yields directly); every other metric stores the
    plain distance.
    """

    value: float
    metric: str

    def __post_init__(self):
        if self.metric not in METRICS:
            raise UnknownMetricError(f"unknown metric {self.metric!r}")
        if not (self.value >= 0.0):
            raise ValueError(f"distance must be nonnegative, got {self.value}")


def principal_angles_truncated(o1, o2) -> PrincipalAngles:
    """Principal angles between the column spans of two truncated bases.

    Each K x n matrix is orthonormalized; cos(theta_i) are the singular
    values of the cross-product of the orthonormal bases, clamped to [0, 1]
    before arccos.
    """
    o1 = np.asarray(o1, dtype=float)
    o2 = np.asarray(o2, dtype=float)
    if o1.ndim != 2 or o2.ndim != 2 or o1.shape[0] != o2.shape[0]:
        raise DimensionMismatchError(f"bases must share row count: {o1.shape} vs {o2.shape}")
    bases = []
    for name, o in (("first", o1), ("second", o2)):
        u, s, _ = np.linalg.svd(o, full_matrices=False)
        if s[0] == 0.0 or s[-1] <= 1e-10 * s[0]:
            raise RankDeficientError(f"{name} basis loses column rank (sv ratio "
                                     f"{s[-1] / max(s[0], 1e-300):.3e})")
        bases.append(u)
    sv = np.linalg.svd(bases[0].T @ bases[1], compute_uv=False)
    sv = np.clip(sv, 0.0, 1.0)
    return PrincipalAngles(np.sort(np.arccos(sv)))


def _canon_key(s):
    a = s.a_diag if isinstance(s, DiagonalSSM) else s.a
    return (s.kind, a.tobytes(), s.c.tobytes())


def _self_and_cross_grams(s1, s2):
    """G1, G2, G3 for a pair of SSMs, choosing the diagonal or dense route."""
    if s1.n != s2.n:
        raise DimensionMismatchError(f"state dimensions differ: {s1.n} vs {s2.n}")
    for s in (s1, s2):
        if isinstance(s, DiagonalSSM) and not s.schur_stable:
            raise NoUniqueSolutionError("diagonal transition has |a_i| >= 1; "
                                        "infinite-horizon Gram diverges")
    if isinstance(s1, DiagonalSSM) and isinstance(s2, DiagonalSSM):
        g1 = gram_diagonal(s1.a_diag, s1.c, s1.a_diag, s1.c).g
        g2 = gram_diagonal(s2.a_diag, s2.c, s2.a_diag, s2.c).g
        g3 = gram_diagonal(s1.a_diag, s1.c, s2.a_diag, s2.c).g
    else:
        a1 = s1.a if isinstance(s1, DenseSSM) else np.diag(s1.a_diag)
        a2 = s2.a if isinstance(s2, DenseSSM) else np.diag(s2.a_diag)
        g1 = gram_sylvester_dense(a1, s1.c, a1, s1.c).g
        g2 = gram_sylvester_dense(a2, s2.c, a2, s2.c).g
        g3 = gram_sylvester_dense(a1, s1.c, a2, s2.c).g
    return g1, g2, g3


def chordal_distance_sq(s1, s2) -> SubspaceDistance:
    """Squared chordal distance between extended observability subspaces.

        d^2 = 2n - 2 Tr(G1^-1 G3 G2^-1 G3^T)

    computed with linear solves, never explicit inverses or inverse square
    roots; G4 = G3^T by real symmetry of the inner product.  Raises
    IllConditionedGram when either self-Gram's condition estimate exceeds
    GRAM_COND_THRESHOLD; the simplified distance is the intended fallback in
    that regime.
    """
    # the trace cancels heavily on near-singular Grams, so evaluate in a
    # canonical argument order to keep d(s1,s2) and d(s2,s1) bitwise equal
    if _canon_key(s2) < _canon_key(s1):
        s1, s2 = s2, s1
    g1, g2, g3 = _self_and_cross_grams(s1, s2)
    n = g1.shape[0]
    for name, g in (("G1", g1), ("G2", g2)):
        cond = np.linalg.cond(g)
        if not np.isfinite(cond) or cond > GRAM_COND_THRESHOLD:
            raise IllConditionedGramError(
                f"{name} condition estimate {cond:.3e} exceeds {GRAM_COND_THRESHOLD:.0e}; "
                "use the simplified distance"
            )
    x = np.linalg.solve(g1, g3)
    y = np.linalg.solve(g2, g3.T)
    tr = float(np.sum(x * y.T))
    value = 2.0 * n - 2.0 * tr
    tol = 1e-6 * (1.0 + 2.0 * n)
    if value < -tol or value > 2.0 * n + tol:
        raise IllConditionedGramError(
            f"trace form left [0, 2n] by more than tolerance (value {value:.6g}); "
            "Grams too ill-conditioned"
        )
    return SubspaceDistance(float(np.clip(value, 0.0, 2.0 * n)), "chordal")


def simplified_distance_value(a_diag, c, a2_diag, c2, epsilon: float = EQUALITY_EPSILON) -> float:
    """The rank-1 simplified distance on raw diagonal parameters.

        cos^2(theta) = Tr(G3 G4) / (Tr(G1) Tr(G2)),  G4 = G3^T

    so the numerator is just ||G3||_F^2, and the value is 1 - cos^2(theta).
    When both parameter vectors agree within epsilon (max-norm) the distance
    is 0 exactly: the raw quotient does not reach cos^2 = 1 at identical
    parameters unless the observability matrix is exactly rank 1, so equality
    is guarded explicitly.
    """
    a_diag = np.asarray(a_diag, dtype=float).reshape(-1)
    c = np.asarray(c, dtype=float).reshape(-1)
    a2_diag = np.asarray(a2_diag, dtype=float).reshape(-1)
    c2 = np.asarray(c2, dtype=float).reshape(-1)
    if (np.max(np.abs(a_diag - a2_diag), initial=0.0) <= epsilon
            and np.max(np.abs(c - c2), initial=0.0) <= epsilon):
        return 0.0
    g1 = gram_diagonal(a_diag, c, a_diag, c).g
    g2 = gram_diagonal(a2_diag, c2, a2_diag, c2).g
    g3 = gram_diagonal(a_diag, c, a2_diag, c2).g
    tr1, tr2 = float(np.trace(g1)), float(np.trace(g2))
    if tr1 < 1e-300 or tr2 < 1e-300:
        raise DegenerateTraceError(f"self-Gram trace underflow: {tr1:.3e}, {tr2:.3e}")
    cos2 = float(np.sum(g3 * g3)) / (tr1 * tr2)
    return float(1.0 - np.clip(cos2, 0.0, 1.0))


def simplified_distance(s1: DiagonalSSM, s2: DiagonalSSM,
                        epsilon: float = EQUALITY_EPSILON) -> SubspaceDistance:
    """Simplified distance between two diagonal SSMs (see simplified_distance_value)."""
    if not isinstance(s1, DiagonalSSM) or not isinstance(s2, DiagonalSSM):
        raise TypeError("simplified distance is defined for diagonal SSMs")
    if s1.n != s2.n:
        raise DimensionMismatchError(f"state dimensions differ: {s1.n} vs {s2.n}")
    for s in (s1, s2):
        if not s.schur_stable:
            raise NoUniqueSolutionError("diagonal transition has |a_i| >= 1; "
                                        "infinite-horizon Gram diverges")
    return SubspaceDistance(
        simplified_distance_value(s1.a_diag, s1.c, s2.a_diag, s2.c, epsilon),
        "simplified",
    )


def classical_distance(angles: PrincipalAngles, metric: str) -> SubspaceDistance:
    """Distance from principal angles by the named classical formula.

        binet_cauchy:  sqrt(1 - prod cos^2 theta_i)
        fubini_study:  arccos(prod cos theta_i)
        martin:        sqrt(-log prod cos^2 theta_i)   (infinite at pi/2)
        geodesic:      sqrt(sum theta_i^2)
        chordal:       sqrt(sum sin^2 theta_i)
    """
    th = angles.angles
    if metric == "binet_cauchy":
        prod_cos2 = float(np.prod(np.cos(th) ** 2))
        return SubspaceDistance(math.sqrt(max(1.0 - prod_cos2, 0.0)), metric)
    if metric == "fubini_study":
        prod_cos = float(np.prod(np.cos(th)))
        return SubspaceDistance(math.acos(min(max(prod_cos, -1.0), 1.0)), metric)
    if metric == "martin":
        cos2 = np.cos(th) ** 2
        if np.any(th >= math.pi / 2) or np.any(cos2 <= 0.0):
            raise InfiniteDistanceError("martin distance diverges at angle pi/2")
        return SubspaceDistance(math.sqrt(max(-float(np.sum(np.log(cos2))), 0.0)), metric)
    if metric == "geodesic":
        return SubspaceDistance(math.sqrt(float(np.sum(th ** 2))), metric)
    if metric == "chordal":
        return SubspaceDistance(math.sqrt(float(np.sum(np.sin(th) ** 2))), metric)
    raise UnknownMetricError(f"unknown metric {metric!r}")


def observability_angles(s1, s2, horizon: int | None = None) -> PrincipalAngles:
    """Principal angles between two SSMs' observability subspaces via
    truncated bases at a decay-bound horizon."""
    if s1.n != s2.n:
        raise DimensionMismatchError(f"state dimensions differ: {s1.n} vs {s2.n}")
    if horizon is None:
        rhos = []
        for s in (s1, s2):
            if isinstance(s, DiagonalSSM):
                rhos.append(float(np.max(np.abs(s.a_diag))))
            else:
                rhos.append(spectral_radius(s.a))
        horizon = max(decay_horizon(max(rhos)), s1.n + 1)
    o1 = truncated_observability(s1, horizon)
    o2 = truncated_observability(s2, horizon)
    return principal_angles_truncated(o1, o2)


def ssm_distance(s1, s2, metric: str, epsilon: float = EQUALITY_EPSILON) -> SubspaceDistance:
    """Route a distance request: Gram-based for chordal and simplified,
    truncated-basis principal angles for the classical metrics."""
    if metric == "chordal":
        return chordal_distance_sq(s1, s2)
    if metric == "simplified":
        return simplified_distance(s1, s2, epsilon)
    if metric in METRICS:
        return classical_distance(observability_angles(s1, s2), metric)
    raise UnknownMetricError(f"unknown metric {metric!r}")

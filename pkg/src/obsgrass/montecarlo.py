"""Monte Carlo validation of the fast subspace similarity.

The fast similarity drops the principal-angle machinery and reads
cos^2(theta) off traces of small Gram matrices.  This module checks that
the shortcut still tracks parameter drift the way a distance should: for
random diagonal systems whose weights drift along a Gaussian random walk
(increment variance 1/25 per level, so the accumulated perturbation at
level i has variance i/25), the similarity between the original system
and each drifted snapshot should fall monotonically enough that its
Pearson correlation with the drift level is strongly negative.

Each iteration draws a fresh system (a, b, c) with standard normal
entries, walks (a, c) through ``noise_levels`` snapshots, and correlates
the level index with sqrt(cos^2(theta)) computed between the original
and drifted weights (diagonals squashed into (-1, 1) by soft
normalization before the Gram evaluation, as everywhere else).  Pearson
r and its two-sided t-distribution p-value are recorded per iteration
and aggregated with a deterministic pairwise reduction, so results do
not depend on the number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import t as t_dist

from .errors import ConfigError
from .ssm import soft_normalize

WALK_INCREMENT_VARIANCE = 1.0 / 25.0
DEFAULT_NOISE_LEVELS = 100
MIN_ITERATIONS = 1


@dataclass(frozen=True)
class MonteCarloResult:
    """Aggregated correlation statistics over the Monte Carlo iterations.

    ``degenerate`` counts iterations whose similarity series was constant
    (correlation undefined); those are excluded from the aggregates, and
    every statistic is NaN when all iterations were degenerate.
    """

    mean_pearson: float
    std_pearson: float
    mean_pvalue: float
    iterations: int
    degenerate: int = 0

    def __post_init__(self):
        if self.iterations < MIN_ITERATIONS:
            raise ValueError("iterations must be >= 1")
        if np.isfinite(self.mean_pearson) and abs(self.mean_pearson) > 1 + 1e-12:
            raise ValueError("mean Pearson r outside [-1, 1]")
        if np.isfinite(self.std_pearson) and self.std_pearson < 0:
            raise ValueError("std of Pearson r must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "mean_pearson": self.mean_pearson,
            "std_pearson": self.std_pearson,
            "mean_pvalue": self.mean_pvalue,
            "iterations": self.iterations,
            "degenerate": self.degenerate,
        }


def similarity_sqrt(a0, c0, a1, c1) -> float:
    """sqrt(cos^2 theta) between two diagonal systems given *raw* weights.

    The diagonals are soft-normalized here; callers pass the untouched
    random-walk weights.  Clamps the trace ratio at zero before the root
    so accumulated rounding can never produce a NaN."""
    at0, at1 = soft_normalize(np.asarray(a0, float)), soft_normalize(np.asarray(a1, float))
    c0 = np.asarray(c0, float)
    c1 = np.asarray(c1, float)
    g3 = np.outer(c0, c1) / (1.0 - np.outer(at0, at1))
    g1 = float(np.sum(c0 * c0 / (1.0 - at0 * at0)))
    g2 = float(np.sum(c1 * c1 / (1.0 - at1 * at1)))
    ratio = float(np.sum(g3 * g3.T)) / (g1 * g2)
    return float(np.sqrt(max(ratio, 0.0)))


def pearson_with_pvalue(x, y):
    """Pearson r between two equal-length series and its two-sided p-value
    from the t distribution with len-2 degrees of freedom.  Returns
    (nan, nan) when either series is constant (correlation undefined)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size != y.size:
        raise ValueError("series lengths differ")
    if x.size < 2 or np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        return float("nan"), float("nan")
    xc = x - x.mean()
    yc = y - y.mean()
    r = float(np.dot(xc, yc) / np.sqrt(np.dot(xc, xc) * np.dot(yc, yc)))
    r = max(-1.0, min(1.0, r))
    dof = x.size - 2
    if dof < 1 or abs(r) == 1.0:
        return r, 0.0
    t_stat = r * np.sqrt(dof / (1.0 - r * r))
    return r, float(2.0 * t_dist.sf(abs(t_stat), dof))


def pairwise_sum(values: np.ndarray) -> float:
    """Sum by recursive halving: the reduction tree depends only on the
    array length, so the result is independent of evaluation order."""
    vals = np.asarray(values, float)
    if vals.size == 0:
        return 0.0
    while vals.size > 1:
        half = vals.size // 2
        head = vals[: 2 * half]
        vals = np.concatenate([head[0::2] + head[1::2], vals[2 * half:]])
    return float(vals[0])


def _aggregate(values: np.ndarray):
    """Deterministic mean/std (population) via the pairwise reduction."""
    if values.size == 0:
        return float("nan"), float("nan")
    mean = pairwise_sum(values) / values.size
    var = pairwise_sum((values - mean) ** 2) / values.size
    return mean, float(np.sqrt(max(var, 0.0)))


def _iteration(rng, n: int, levels: int):
    """One Monte Carlo iteration: fresh system, random walk, Pearson r."""
    a = rng.normal(size=n)
    rng.normal(size=n)  # b: part of the sampled weight triple, inert here
    c = rng.normal(size=n)
    step = np.sqrt(WALK_INCREMENT_VARIANCE)
    drift_a = np.zeros(n)
    drift_c = np.zeros(n)
    sims = np.empty(levels)
    sims[0] = 1.0  # zero drift: identical systems
    for i in range(1, levels):
        drift_a = drift_a + rng.normal(size=n) * step
        drift_c = drift_c + rng.normal(size=n) * step
        sims[i] = similarity_sqrt(a, c, a + drift_a, c + drift_c)
    return pearson_with_pvalue(np.arange(levels, dtype=float), sims)


def mc_validate(
    iterations: int = 10000,
    n: int = 16,
    noise_levels: int = DEFAULT_NOISE_LEVELS,
    seed: int = 0,
    threads: int = 1,
) -> MonteCarloResult:
    """Runs the drift-correlation study and aggregates the statistics.

    Per-iteration seeds are spawned up front from ``seed``, and results
    land in arrays indexed by iteration, so any ``threads`` count yields
    bitwise-identical output."""
    if iterations < MIN_ITERATIONS:
        raise ConfigError("iterations must be >= 1")
    if n < 1:
        raise ConfigError("state size must be >= 1")
    if noise_levels < 1:
        raise ConfigError("noise_levels must be >= 1")
    rngs = np.random.default_rng(seed).spawn(iterations)
    rs = np.empty(iterations)
    ps = np.empty(iterations)

    def run_range(lo: int, hi: int):
        for k in range(lo, hi):
            rs[k], ps[k] = _iteration(rngs[k], n, noise_levels)

    threads = max(1, int(threads))
    if threads == 1 or iterations < 2 * threads:
        run_range(0, iterations)
    else:
        bounds = np.linspace(0, iterations, threads + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda se: run_range(*se), zip(bounds[:-1], bounds[1:])))

    good = np.isfinite(rs)
    degenerate = int(np.sum(~good))
    mean_r, std_r = _aggregate(rs[good])
    mean_p, _ = _aggregate(ps[good])
    return MonteCarloResult(
        mean_pearson=mean_r,
        std_pearson=std_r,
        mean_pvalue=mean_p,
        iterations=iterations,
        degenerate=degenerate,
    )

"""Regularization losses over per-timestep observability subspaces.

The main loss penalizes, for each timestep t, the simplified subspace
distance between the old model's aggregated states (A~_t, C~_t) and the new
model's, averaged over t.  The plus variant adds a Frobenius penalty on B~.
Frobenius baselines on raw parameters and on simulated outputs are provided
for comparison, along with the analytic gradient of the main loss needed to
train through it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateTraceError, ShapeMismatchError
from .grassmann import EQUALITY_EPSILON
from .ssm import AggregatedStates, DenseSSM, DiagonalSSM, simulate

VARIANTS = ("ism", "ism_plus", "param_mse", "output_mse", "none")


@dataclass(frozen=True)
class LossConfig:
    """Composition weights for the total continual-learning loss.

    lambda_ scales the regularizer against the classification term, gamma
    weights the B~ penalty inside the plus variant, and tau_outputs is the
    simulation horizon of the output baseline.  (The trailing underscore
    only dodges the Python keyword; the JSON key is "lambda".)
    """

    variant: str = "ism"
    lambda_: float = 0.0
    gamma: float = 0.0
    tau_outputs: int = 16

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown loss variant {self.variant!r}")
        if self.lambda_ < 0 or self.gamma < 0:
            raise ConfigError("lambda and gamma must be nonnegative")
        if self.tau_outputs < 1:
            raise ConfigError("tau_outputs must be >= 1")

    def to_dict(self) -> dict:
        return {"variant": self.variant, "lambda": self.lambda_,
                "gamma": self.gamma, "tau_outputs": self.tau_outputs}

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        known = {"variant", "lambda", "gamma", "tau_outputs"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown loss config keys: {sorted(extra)}")
        return cls(
            variant=d.get("variant", "ism"),
            lambda_=float(d.get("lambda", 0.0)),
            gamma=float(d.get("gamma", 0.0)),
            tau_outputs=int(d.get("tau_outputs", 16)),
        )


@dataclass(frozen=True)
class LossValue:
    total: float
    cls: float
    reg: float
    per_slice: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _check_pair(old: AggregatedStates, new: AggregatedStates):
    if old.a_tilde.shape != new.a_tilde.shape:
        raise ShapeMismatchError(
            f"bundle shapes differ: {old.a_tilde.shape} vs {new.a_tilde.shape}"
        )


def _slice_terms(a0, c0, a1, c1):
    """Per-slice pieces of the simplified distance, vectorized over slices.

    Arguments are (S, n) arrays: S independent diagonal pairs.  Returns
    (tr1, tr2, g3, denom, num, den) where g3[s, i, j] is the cross-Gram of
    slice s, with old indexing rows and new indexing columns.
    """
    tr1 = np.sum(c0 * c0 / (1.0 - a0 * a0), axis=1)
    tr2 = np.sum(c1 * c1 / (1.0 - a1 * a1), axis=1)
    if np.any(tr1 < 1e-300) or np.any(tr2 < 1e-300):
        raise DegenerateTraceError("a per-slice self-Gram trace underflowed")
    denom = 1.0 - a0[:, :, None] * a1[:, None, :]
    g3 = c0[:, :, None] * c1[:, None, :] / denom
    num = np.sum(g3 * g3, axis=(1, 2))
    den = tr1 * tr2
    return tr1, tr2, g3, denom, num, den


def slice_distance_values(a0, c0, a1, c1, epsilon: float = EQUALITY_EPSILON):
    """Simplified distance of S independent slices, shape (S,) out.

    Each row of the (S, n) arguments is one diagonal pair.  The equality
    guard snaps a slice to 0 when its old and new parameters agree within
    epsilon (max-norm).
    """
    _, _, _, _, num, den = _slice_terms(a0, c0, a1, c1)
    values = 1.0 - np.clip(num / den, 0.0, 1.0)
    eq = (np.max(np.abs(a0 - a1), axis=1, initial=0.0) <= epsilon) \
        & (np.max(np.abs(c0 - c1), axis=1, initial=0.0) <= epsilon)
    return np.where(eq, 0.0, values)


def slice_distance_grads(a0, c0, a1, c1):
    """Per-slice gradient of slice_distance_values in (a1, c1); no guard.

    Writing per slice N = ||G3||_F^2 and D = Tr(G1) Tr(G2) (the old pair is
    a constant), the slice value is 1 - N/D and

        dN/dc'_j = 2 c'_j sum_i c_i^2 / (1 - a_i a'_j)^2
        dN/da'_j = 2 c'_j^2 sum_i a_i c_i^2 / (1 - a_i a'_j)^3
        dD/dc'_j = Tr(G1) * 2 c'_j / (1 - a'_j^2)
        dD/da'_j = Tr(G1) * c'_j^2 * 2 a'_j / (1 - a'_j^2)^2

    assembled as d(1 - N/D) = (N dD - D dN) / D^2.  The equality guard is a
    measure-zero patch on the value and takes no part here: central
    differences of the guarded loss straddle the guard band and see the
    quotient on both sides.
    """
    tr1, tr2, g3, denom, num, den = _slice_terms(a0, c0, a1, c1)

    # sum_i c_i^2 / (1 - a_i a'_j)^k for k = 2, 3, per slice: shape (S, n)
    c0sq = (c0 * c0)[:, :, None]
    s2 = np.sum(c0sq / denom ** 2, axis=1)
    s3 = np.sum((a0 * c0 * c0)[:, :, None] / denom ** 3, axis=1)

    dn_dc = 2.0 * c1 * s2
    dn_da = 2.0 * c1 * c1 * s3
    one_minus = 1.0 - a1 * a1
    dd_dc = tr1[:, None] * 2.0 * c1 / one_minus
    dd_da = tr1[:, None] * c1 * c1 * 2.0 * a1 / one_minus ** 2

    scale = (1.0 / (den * den))[:, None]
    d_a = (num[:, None] * dd_da - den[:, None] * dn_da) * scale
    d_c = (num[:, None] * dd_dc - den[:, None] * dn_dc) * scale
    return d_a, d_c


def ism_loss(old: AggregatedStates, new: AggregatedStates,
             epsilon: float = EQUALITY_EPSILON):
    """Mean over timesteps of the simplified subspace distance.

    per_slice[t] = 1 - ||G3_t||_F^2 / (Tr(G1_t) Tr(G2_t)), with the equality
    guard snapping a slice to 0 when its old and new parameters agree within
    epsilon.  Callers working over a batch average these values (and their
    gradients) across the batch.
    """
    _check_pair(old, new)
    per_slice = slice_distance_values(old.a_tilde, old.c_tilde,
                                      new.a_tilde, new.c_tilde, epsilon)
    return float(np.mean(per_slice)), per_slice


def ism_plus_loss(old: AggregatedStates, new: AggregatedStates, gamma: float) -> float:
    """ism_loss plus gamma times the mean squared Frobenius deviation of B~."""
    _check_pair(old, new)
    value, _ = ism_loss(old, new)
    db = new.b_tilde - old.b_tilde
    return value + gamma * float(np.mean(np.sum(db * db, axis=1)))


def _triple(x):
    if isinstance(x, DiagonalSSM):
        return x.a_diag, x.b, x.c
    if isinstance(x, DenseSSM):
        return x.a, x.b, x.c
    a, b, c = x
    return np.asarray(a, float), np.asarray(b, float), np.asarray(c, float)


def baseline_param_mse(old, new) -> float:
    """Sum of squared Frobenius deviations of the (A, B, C) triple."""
    o, n = _triple(old), _triple(new)
    total = 0.0
    for wo, wn in zip(o, n):
        if wo.shape != wn.shape:
            raise ShapeMismatchError(f"triple shapes differ: {wo.shape} vs {wn.shape}")
        d = wn - wo
        total += float(np.sum(d * d))
    return total


def baseline_output_mse(old: DiagonalSSM, new: DiagonalSSM, inputs) -> float:
    """Squared output deviation over a shared input sequence, from h0 = 0."""
    x = np.asarray(inputs, dtype=float).reshape(-1)
    y_old = simulate(old, x).outputs
    y_new = simulate(new, x).outputs
    d = y_new - y_old
    return float(np.sum(d * d))


def total_loss(cls: float, reg: float, config: LossConfig) -> LossValue:
    return LossValue(total=cls + config.lambda_ * reg, cls=cls, reg=reg)


def ism_gradient(old: AggregatedStates, new: AggregatedStates):
    """Analytic gradient of ism_loss with respect to the new bundle.

    Per-slice quotient derivatives (see slice_distance_grads) scaled by
    1/tau for the mean.  Old states are constants: the old model stays
    frozen during training.

    Returns (d_a_tilde, d_c_tilde), each of shape (tau, n).
    """
    _check_pair(old, new)
    tau = old.a_tilde.shape[0]
    d_a, d_c = slice_distance_grads(old.a_tilde, old.c_tilde,
                                    new.a_tilde, new.c_tilde)
    return d_a / tau, d_c / tau

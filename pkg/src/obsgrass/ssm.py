"""Core state-space model types and operations.

Discrete SSMs here follow the recurrence

    h(t) = A h(t-1) + B x(t)
    y(t) = C h(t)

with scalar input x and scalar output y. The module provides the dense and
diagonal parameter triples, zero-order-hold discretization, simulation,
similarity (P-equivalence) transforms, soft normalization, the S6 state
aggregation step, and finite truncations of the extended observability
matrix [C; CA; CA^2; ...].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import (
    ConfigError,
    DimensionMismatchError,
    NonFiniteError,
    SingularStateError,
    SingularTransformError,
)

# Condition-number ceiling for similarity transforms.  Above this the
# round-trip P -> P^-1 error starts eating into test tolerances.
P_COND_THRESHOLD = 1e6

# Soft normalization saturates to +-1 in float64 for |x| > ~38; clamp to the
# nearest representable value inside the open interval so downstream Gram
# denominators 1 - a*a' stay strictly positive.
_SN_HI = np.nextafter(1.0, 0.0)
_SN_LO = np.nextafter(-1.0, 0.0)


def _freeze(x, shape_hint: str) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite entries in {shape_hint}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DenseSSM:
    """General (A, B, C) triple with a full n x n state transition."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        a = _freeze(self.a, "a")
        b = _freeze(self.b, "b").reshape(-1)
        c = _freeze(self.c, "c").reshape(-1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(f"a must be square, got shape {a.shape}")
        n = a.shape[0]
        if n < 1 or b.shape != (n,) or c.shape != (n,):
            raise DimensionMismatchError(
                f"inconsistent shapes: a {a.shape}, b {b.shape}, c {c.shape}"
            )
        b.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def kind(self) -> str:
        return "dense"


@dataclass(frozen=True)
class DiagonalSSM:
    """Structured triple with diagonal state transition, the fast-path input."""

    a_diag: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        a = _freeze(self.a_diag, "a_diag").reshape(-1)
        b = _freeze(self.b, "b").reshape(-1)
        c = _freeze(self.c, "c").reshape(-1)
        n = a.shape[0]
        if n < 1 or b.shape != (n,) or c.shape != (n,):
            raise DimensionMismatchError(
                f"inconsistent shapes: a_diag {a.shape}, b {b.shape}, c {c.shape}"
            )
        object.__setattr__(self, "a_diag", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.a_diag.shape[0]

    @property
    def kind(self) -> str:
        return "diagonal"

    @property
    def schur_stable(self) -> bool:
        """True iff max |a_i| < 1, required before infinite-horizon Grams."""
        return bool(np.max(np.abs(self.a_diag)) < 1.0)

    def to_dense(self) -> DenseSSM:
        return DenseSSM(np.diag(self.a_diag), self.b, self.c)


@dataclass(frozen=True)
class SequenceStateBundle:
    """Per-timestep discretized states of a selective SSM layer.

    a_bar and b_bar have shape (tau, o, n): one (A_bar, B_bar) pair per
    timestep and outer channel.  c has shape (tau, n): the output map is
    shared across channels at each step.
    """

    a_bar: np.ndarray
    b_bar: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        a = _freeze(self.a_bar, "a_bar")
        b = _freeze(self.b_bar, "b_bar")
        c = _freeze(self.c, "c")
        if a.ndim != 3 or b.shape != a.shape:
            raise DimensionMismatchError(
                f"a_bar and b_bar must both be (tau, o, n), got {a.shape} and {b.shape}"
            )
        tau, _, n = a.shape
        if c.shape != (tau, n):
            raise DimensionMismatchError(
                f"c must be (tau, n) = ({tau}, {n}), got {c.shape}"
            )
        object.__setattr__(self, "a_bar", a)
        object.__setattr__(self, "b_bar", b)
        object.__setattr__(self, "c", c)

    @property
    def tau(self) -> int:
        return self.a_bar.shape[0]

    @property
    def o(self) -> int:
        return self.a_bar.shape[1]

    @property
    def n(self) -> int:
        return self.a_bar.shape[2]


@dataclass(frozen=True)
class AggregatedStates:
    """Soft-normalized per-timestep (A~, B~, C~), each of shape (tau, n).

    Every entry lies strictly inside (-1, 1), so each tau-slice is a
    Schur-stable diagonal system by construction.
    """

    a_tilde: np.ndarray
    b_tilde: np.ndarray
    c_tilde: np.ndarray

    def __post_init__(self):
        a = _freeze(self.a_tilde, "a_tilde")
        b = _freeze(self.b_tilde, "b_tilde")
        c = _freeze(self.c_tilde, "c_tilde")
        if a.ndim != 2 or b.shape != a.shape or c.shape != a.shape:
            raise DimensionMismatchError(
                f"aggregated states must share shape (tau, n): {a.shape}, {b.shape}, {c.shape}"
            )
        for name, arr in (("a_tilde", a), ("b_tilde", b), ("c_tilde", c)):
            if np.any(np.abs(arr) >= 1.0):
                raise NonFiniteError(f"{name} has entries outside (-1, 1)")
        object.__setattr__(self, "a_tilde", a)
        object.__setattr__(self, "b_tilde", b)
        object.__setattr__(self, "c_tilde", c)

    @property
    def tau(self) -> int:
        return self.a_tilde.shape[0]

    @property
    def n(self) -> int:
        return self.a_tilde.shape[1]

    def slice_ssm(self, t: int) -> DiagonalSSM:
        """The independent diagonal SSM carried by timestep t."""
        return DiagonalSSM(self.a_tilde[t], self.b_tilde[t], self.c_tilde[t])


@dataclass(frozen=True)
class SimulationTrace:
    hidden: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray


def soft_normalize(x):
    """SN(x) = 2 / (1 + exp(-x)) - 1, elementwise.

    Algebraically identical to tanh(x/2), which is how it is evaluated
    (no overflow for large negative x).  Output is clamped to the open
    interval (-1, 1): float64 tanh saturates to exactly +-1 for |x| > ~38,
    which would break the strict Schur-stability guarantee downstream.
    """
    y = np.tanh(np.asarray(x, dtype=float) / 2.0)
    y = np.clip(y, _SN_LO, _SN_HI)
    if y.ndim == 0:
        return float(y)
    return y


def soft_normalize_deriv(x):
    """d SN / dx = (1 - SN(x)^2) / 2, elementwise."""
    s = np.tanh(np.asarray(x, dtype=float) / 2.0)
    out = (1.0 - s * s) / 2.0
    if out.ndim == 0:
        return float(out)
    return out


def discretize_zoh(a_cont, b_cont, delta: float, method: str = "series"):
    """Zero-order-hold discretization of a continuous-time pair (A, B).

        A_bar = exp(delta A)
        B_bar = (delta A)^-1 (exp(delta A) - I) delta B

    The default evaluation path expands B_bar as the convergent series

        B_bar = sum_{k>=0} delta^(k+1) A^k / (k+1)! B

    which equals the exact formula for invertible A and remains defined for
    singular A (in particular A = 0 gives B_bar = delta B).  Pass
    method="exact" to force the inverse formula; it raises SingularStateError
    when A is singular beyond tolerance.

    A 1-D a_cont is treated as the diagonal of A and handled elementwise.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if method not in ("series", "exact"):
        raise ValueError(f"unknown method {method!r}")
    a = np.asarray(a_cont, dtype=float)
    b = np.asarray(b_cont, dtype=float).reshape(-1)

    if a.ndim == 1:
        if a.shape[0] != b.shape[0]:
            raise DimensionMismatchError(f"a_cont {a.shape} vs b_cont {b.shape}")
        da = delta * a
        a_bar = np.exp(da)
        if method == "exact" and np.any(np.abs(a) < 1e-13 * max(1.0, np.max(np.abs(a)))):
            raise SingularStateError("diagonal a_cont has (near-)zero entries")
        # expm1(da)/da -> 1 as da -> 0, so the series limit is delta*b there
        b_bar = np.empty_like(b)
        nz = da != 0.0
        b_bar[nz] = delta * b[nz] * np.expm1(da[nz]) / da[nz]
        b_bar[~nz] = delta * b[~nz]
        if not (np.all(np.isfinite(a_bar)) and np.all(np.isfinite(b_bar))):
            raise NonFiniteError("discretization overflowed")
        return a_bar, b_bar

    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] != b.shape[0]:
        raise DimensionMismatchError(f"a_cont {a.shape} vs b_cont {b.shape}")

    a_bar = expm(delta * a)
    if not np.all(np.isfinite(a_bar)):
        raise NonFiniteError("matrix exponential overflowed")

    if method == "exact":
        sv = np.linalg.svd(a, compute_uv=False)
        if sv[-1] <= 1e-13 * max(sv[0], 1.0):
            raise SingularStateError("a_cont is singular beyond tolerance")
        b_bar = np.linalg.solve(delta * a, (a_bar - np.eye(a.shape[0])) @ (delta * b))
    else:
        # term_k = delta^(k+1) A^k b / (k+1)!; factorial decay dominates
        term = delta * b
        b_bar = term.copy()
        for k in range(1, 80):
            term = (delta / (k + 1)) * (a @ term)
            b_bar += term
            if np.max(np.abs(term)) <= 1e-18 * max(1.0, np.max(np.abs(b_bar))):
                break
    if not np.all(np.isfinite(b_bar)):
        raise NonFiniteError("discretization overflowed")
    return a_bar, b_bar


def simulate(ssm, inputs, h0=None) -> SimulationTrace:
    """Run the recurrence h(t) = A h(t-1) + B x(t), y(t) = C h(t)."""
    x = np.asarray(inputs, dtype=float).reshape(-1)
    if x.shape[0] < 1:
        raise ValueError("need at least one input step")
    n = ssm.n
    h = np.zeros(n) if h0 is None else np.asarray(h0, dtype=float).reshape(-1).copy()
    if h.shape != (n,):
        raise DimensionMismatchError(f"h0 shape {h.shape} vs state dimension {n}")
    diag = isinstance(ssm, DiagonalSSM)
    hidden = np.empty((x.shape[0], n))
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(x.shape[0]):
            if diag:
                h = ssm.a_diag * h + ssm.b * x[t]
            else:
                h = ssm.a @ h + ssm.b * x[t]
            hidden[t] = h
        outputs = hidden @ ssm.c
    if not (np.all(np.isfinite(hidden)) and np.all(np.isfinite(outputs))):
        raise NonFiniteError("simulation overflowed (unstable recurrence?)")
    return SimulationTrace(hidden=hidden, inputs=x, outputs=outputs)


def p_transform(ssm: DenseSSM, p) -> DenseSSM:
    """Similarity transform to the equivalent realization (PAP^-1, PB, CP^-1).

    The transformed system has identical input-output behavior when started
    from P h0 instead of h0; the extended observability subspace is shared.
    """
    pm = np.asarray(p, dtype=float)
    n = ssm.n
    if pm.shape != (n, n):
        raise DimensionMismatchError(f"p shape {pm.shape} vs state dimension {n}")
    sv = np.linalg.svd(pm, compute_uv=False)
    if sv[-1] == 0.0 or sv[0] / sv[-1] > P_COND_THRESHOLD:
        raise SingularTransformError(
            f"p condition number {sv[0] / max(sv[-1], 1e-300):.3e} above {P_COND_THRESHOLD:.0e}"
        )
    p_inv = np.linalg.inv(pm)
    return DenseSSM(pm @ ssm.a @ p_inv, pm @ ssm.b, ssm.c @ p_inv)


def aggregate_states(bundle: SequenceStateBundle) -> AggregatedStates:
    """Collapse the outer channel dimension and soft-normalize.

    a_tilde[t] = SN(mean over o of a_bar[t]), b_tilde likewise, and
    c_tilde[t] = SN(c[t]).  Each tau-slice of the result is an independent
    Schur-stable diagonal system; no averaging happens across tau.
    """
    if bundle.o < 1:
        raise DimensionMismatchError("outer dimension must be >= 1")
    return AggregatedStates(
        a_tilde=soft_normalize(bundle.a_bar.mean(axis=1)),
        b_tilde=soft_normalize(bundle.b_bar.mean(axis=1)),
        c_tilde=soft_normalize(bundle.c),
    )


def truncated_observability(ssm, horizon: int) -> np.ndarray:
    """First K rows of the extended observability matrix: row t = C A^t."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if isinstance(ssm, DiagonalSSM):
        t = np.arange(horizon)[:, None]
        return ssm.c[None, :] * ssm.a_diag[None, :] ** t
    rows = np.empty((horizon, ssm.n))
    row = ssm.c.copy()
    for t in range(horizon):
        rows[t] = row
        row = row @ ssm.a
    return rows


def decay_horizon(max_abs_a: float, tol: float = 1e-12, cap: int = 5000) -> int:
    """Smallest K with (max |a|)^K < tol, capped.

    Geometric decay of C A^t bounds the Gram tail beyond K below tolerance.
    """
    if max_abs_a >= 1.0:
        return cap
    if max_abs_a <= tol:
        return 1
    k = int(math.ceil(math.log(tol) / math.log(max_abs_a))) + 1
    return int(min(max(k, 1), cap))


# ---------------------------------------------------------------------------
# serialization
#
# {"kind": "dense"|"diagonal", "n": int, "a": nested|flat, "b": [...], "c": [...]}
# Dense "a" is row-major nested lists.  Reals are written with 17 significant
# digits so round-trips are bit-exact.


def format_real(x: float) -> str:
    """Render a float with 17 significant digits (bit-exact round-trip)."""
    return format(float(x), ".17g")


def reals_to_json(obj) -> str:
    """Serialize nested lists/arrays of reals with round-trip precision."""
    arr = np.asarray(obj, dtype=float)
    if arr.ndim == 0:
        return format_real(float(arr))
    return "[" + ", ".join(reals_to_json(sub) for sub in arr) + "]"


_fmt = format_real


def _fmt_vec(v) -> str:
    return "[" + ", ".join(_fmt(x) for x in v) + "]"


def ssm_to_json(ssm) -> str:
    if isinstance(ssm, DiagonalSSM):
        a_txt = _fmt_vec(ssm.a_diag)
    elif isinstance(ssm, DenseSSM):
        a_txt = "[" + ", ".join(_fmt_vec(row) for row in ssm.a) + "]"
    else:
        raise TypeError(f"cannot serialize {type(ssm).__name__}")
    return (
        '{"kind": "%s", "n": %d, "a": %s, "b": %s, "c": %s}'
        % (ssm.kind, ssm.n, a_txt, _fmt_vec(ssm.b), _fmt_vec(ssm.c))
    )


def ssm_from_json(text: str):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e}") from None
    if not isinstance(obj, dict):
        raise ConfigError("SSM JSON must be an object")
    for key in ("kind", "n", "a", "b", "c"):
        if key not in obj:
            raise ConfigError(f"SSM JSON missing field {key!r}")
    kind, n = obj["kind"], obj["n"]
    if not isinstance(n, int) or n < 1:
        raise ConfigError(f"invalid state dimension {n!r}")
    try:
        a = np.asarray(obj["a"], dtype=float)
        b = np.asarray(obj["b"], dtype=float)
        c = np.asarray(obj["c"], dtype=float)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"non-numeric SSM entries: {e}") from None
    try:
        if kind == "diagonal":
            if a.shape != (n,):
                raise ConfigError(f"diagonal a must have shape ({n},), got {a.shape}")
            return DiagonalSSM(a, b, c)
        if kind == "dense":
            if a.shape != (n, n):
                raise ConfigError(f"dense a must have shape ({n}, {n}), got {a.shape}")
            return DenseSSM(a, b, c)
    except DimensionMismatchError as e:
        raise ConfigError(str(e)) from None
    raise ConfigError(f"unknown kind {kind!r}")


def write_ssm(path, ssm) -> None:
    with open(path, "w") as f:
        f.write(ssm_to_json(ssm) + "\n")


def read_ssm(path):
    with open(path) as f:
        return ssm_from_json(f.read())

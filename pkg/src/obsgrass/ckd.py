"""Centered-kernel disparity between paired representation matrices.

Given representations X (m x p) and Y (m x q) over the same m probe
points, with linear kernels K = X X^T and L = Y Y^T and the centering
projector H = I - (1/m) 11^T:

    HSIC(K, L) = trace(H K H . H L H) / (m - 1)^2
    CKA(X, Y)  = HSIC(K, L) / sqrt(HSIC(K, K) HSIC(L, L))
    CKD(X, Y)  = 1 - CKA(X, Y)

CKD is 0 for representations identical up to isotropic scaling and
orthogonal rotation, and grows toward 1 as they decorrelate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateKernelError, ShapeMismatchError

_SELF_HSIC_FLOOR = 1e-300
_CKD_RANGE_TOL = 1e-6

STATE_LABELS = ("A", "B", "C")


@dataclass(frozen=True)
class CKDReport:
    """Per-layer drift of one state matrix across checkpoints.

    ``per_layer[l, t]`` is the CKD between checkpoint t's state and the
    first checkpoint's state, for layer l."""

    per_layer: np.ndarray
    state_label: str

    def __post_init__(self):
        arr = np.array(self.per_layer, dtype=float)
        if arr.ndim != 2:
            raise ShapeMismatchError(f"per_layer must be 2-D, got {arr.shape}")
        if np.any(~np.isfinite(arr)):
            raise ValueError("CKD values must be finite")
        if np.any(arr < -_CKD_RANGE_TOL) or np.any(arr > 1.0 + _CKD_RANGE_TOL):
            raise ValueError("CKD values must lie in [0, 1] up to tolerance")
        arr.setflags(write=False)
        object.__setattr__(self, "per_layer", arr)
        if self.state_label not in STATE_LABELS:
            raise ValueError(f"state_label must be one of {STATE_LABELS}")


def _as_rep(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D (samples x features), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeMismatchError(f"{name} contains non-finite entries")
    return arr


def _centered_gram(x: np.ndarray) -> np.ndarray:
    k = x @ x.T
    k = k - k.mean(axis=0, keepdims=True)
    k = k - k.mean(axis=1, keepdims=True)
    return k


def hsic(x, y) -> float:
    """Empirical HSIC of the linear kernels of x and y."""
    x = _as_rep(x, "x")
    y = _as_rep(y, "y")
    if x.shape[0] != y.shape[0]:
        raise ShapeMismatchError(
            f"x and y must have the same number of rows, got {x.shape[0]} and {y.shape[0]}"
        )
    m = x.shape[0]
    if m < 2:
        raise ShapeMismatchError("HSIC needs at least 2 samples")
    kc = _centered_gram(x)
    lc = _centered_gram(y)
    return float(np.sum(kc * lc) / (m - 1) ** 2)


def cka(x, y) -> float:
    """Linear centered kernel alignment; raises if either input is constant."""
    hxy = hsic(x, y)
    hxx = hsic(x, x)
    hyy = hsic(y, y)
    if hxx < _SELF_HSIC_FLOOR or hyy < _SELF_HSIC_FLOOR:
        raise DegenerateKernelError(
            "self-HSIC vanished: a representation is constant across samples"
        )
    return hxy / np.sqrt(hxx * hyy)


def ckd(x, y) -> float:
    """Centered-kernel disparity: 1 - CKA(x, y)."""
    return 1.0 - cka(x, y)

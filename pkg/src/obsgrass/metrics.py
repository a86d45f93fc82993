"""Continual-learning metrics over the task-accuracy matrix.

With a[k][j] the accuracy on task j's test split after training task k
(1-indexed, j <= k):

    AA_k  = (1/k) sum_{j=1..k} a[k][j]
    AIA_k = (1/k) sum_{i=1..k} AA_i
    FM_k  = (1/(k-1)) sum_{j=1..k-1} max_{i in 1..k-1} (a[i][j] - a[k][j])
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InsufficientTasksError

ACC_CSV_HEADER = "task_k,task_j,acc"
METRICS_CSV_HEADER = "k,AA,AIA,FM"


@dataclass(frozen=True)
class TaskAccuracyMatrix:
    """Lower-triangular T x T accuracy matrix; NaN above the diagonal."""

    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise DimensionMismatchError(f"accuracy matrix must be square, got {a.shape}")
        t = a.shape[0]
        lower = np.tril_indices(t)
        vals = a[lower]
        if np.any(~np.isfinite(vals)) or np.any(vals < 0.0) or np.any(vals > 1.0):
            raise ValueError("accuracies must lie in [0, 1] on and below the diagonal")
        a[np.triu_indices(t, k=1)] = np.nan
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @classmethod
    def from_rows(cls, rows) -> "TaskAccuracyMatrix":
        """Build from ragged rows: row k (0-indexed) holds k+1 accuracies."""
        t = len(rows)
        a = np.full((t, t), np.nan)
        for k, row in enumerate(rows):
            if len(row) != k + 1:
                raise DimensionMismatchError(
                    f"row {k} must have {k + 1} entries, got {len(row)}"
                )
            a[k, : k + 1] = row
        return cls(a)

    @property
    def num_tasks(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class CLMetrics:
    """aa and aia have length T.  fm has length T with NaN at k=1 (undefined),
    or length 0 for a single-task stream."""

    aa: np.ndarray
    aia: np.ndarray
    fm: np.ndarray

    def __post_init__(self):
        for name in ("aa", "aia", "fm"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for arr in (self.aa, self.aia):
            if np.any(arr < 0.0) or np.any(arr > 1.0):
                raise ValueError("AA and AIA must lie in [0, 1]")
        defined = self.fm[~np.isnan(self.fm)]
        if np.any(defined < -1.0) or np.any(defined > 1.0):
            raise ValueError("FM must lie in [-1, 1]")


def forgetting_at(acc: TaskAccuracyMatrix, k: int) -> float:
    """FM_k, 1-indexed.  Needs at least two tasks' worth of history."""
    if k < 2:
        raise InsufficientTasksError(f"FM is undefined for k={k}; need k >= 2")
    if k > acc.num_tasks:
        raise InsufficientTasksError(f"k={k} exceeds {acc.num_tasks} recorded tasks")
    a = acc.a
    # For column j only rows i >= j are recorded; the max runs over those.
    prior_best = np.nanmax(a[: k - 1, : k - 1], axis=0)
    return float(np.mean(prior_best - a[k - 1, : k - 1]))


def compute_metrics(acc: TaskAccuracyMatrix) -> CLMetrics:
    a = acc.a
    t = acc.num_tasks
    aa = np.array([np.mean(a[k, : k + 1]) for k in range(t)])
    aia = np.cumsum(aa) / np.arange(1, t + 1)
    if t == 1:
        fm = np.zeros(0)
    else:
        fm = np.full(t, np.nan)
        for k in range(2, t + 1):
            fm[k - 1] = forgetting_at(acc, k)
    return CLMetrics(aa=aa, aia=aia, fm=fm)


def accuracy_csv(acc: TaskAccuracyMatrix) -> str:
    lines = [ACC_CSV_HEADER]
    for k in range(acc.num_tasks):
        for j in range(k + 1):
            lines.append(f"{k + 1},{j + 1},{acc.a[k, j]:.10g}")
    return "\n".join(lines) + "\n"


def metrics_csv(metrics: CLMetrics) -> str:
    lines = [METRICS_CSV_HEADER]
    t = metrics.aa.shape[0]
    for k in range(t):
        fm_txt = ""
        if metrics.fm.shape[0] == t and not np.isnan(metrics.fm[k]):
            fm_txt = f"{metrics.fm[k]:.10g}"
        lines.append(f"{k + 1},{metrics.aa[k]:.10g},{metrics.aia[k]:.10g},{fm_txt}")
    return "\n".join(lines) + "\n"

"""Synthetic class-incremental task streams of SSM-generated sequences.

All classes in a stream share one bank of stable poles; each class is a
distinct set of modal weights over those modes, constrained so every
class has the same DC gain.  A sample is the weighted modal response to
a noisy step input, plus observation noise.  Because the steady level is identical
across classes, the class signal lives in the temporal shape of the
sequence (which modes carry the response), not in its scale — a
classifier has to learn a modal decomposition, and sequential training
on later tasks degrades that decomposition rather than just shifting a
decision threshold.

The stream instruments every data access with ``(split, task, phase)``
records so a test can audit the exemplar-free contract: while training
task t, no earlier task's training data may be read.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatchError

# Generator defaults, frozen after pilot runs.  The output scale stays near
# unity (large sequence levels destabilize plain gradient descent), the
# mixing-cosine cap keeps single-task accuracy comfortably above 0.8 at
# the default budget, and the observation noise leaves enough class
# overlap for forgetting to be measurable.
GENERATOR_STATE_SIZE = 6
POLE_RANGE = (0.35, 0.95)
POLE_MIN_GAP = 0.07
TRAJECTORY_MIN_GAP = 0.25
COEF_SUBSPACE_RANK = 3
MAX_COEF_COSINE = 0.5
SPREAD_LIMIT = 3.0
DC_GAIN = 0.0
INPUT_MEAN = 1.0
INPUT_NOISE = 0.3
OBSERVATION_NOISE = 0.1
TRAIN_FRACTION = 0.8


@dataclass(frozen=True)
class TaskData:
    """One task's train/test splits.  Labels are global class ids."""

    train_inputs: np.ndarray  # (N_train, tau, n_features)
    train_labels: np.ndarray  # (N_train,) int
    test_inputs: np.ndarray
    test_labels: np.ndarray
    classes: tuple  # global class ids present in this task

    def __post_init__(self):
        for name in ("train_inputs", "test_inputs"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 3:
                raise DimensionMismatchError(
                    f"{name} must be (samples, tau, features), got {arr.shape}"
                )
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("train_labels", "test_labels"):
            arr = np.asarray(getattr(self, name), dtype=int)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.train_inputs.shape[0] != self.train_labels.shape[0]:
            raise DimensionMismatchError("train inputs/labels length mismatch")
        if self.test_inputs.shape[0] != self.test_labels.shape[0]:
            raise DimensionMismatchError("test inputs/labels length mismatch")
        object.__setattr__(self, "classes", tuple(int(c) for c in self.classes))


class TaskStream:
    """Ordered tasks with pairwise-disjoint label sets and an access log.

    ``access_log`` holds ``(split, task, phase)`` tuples: the split that
    was read, which task it belonged to, and which task was being
    trained/evaluated at the time.
    """

    def __init__(self, tasks, classes_per_task: int):
        tasks = tuple(tasks)
        if not tasks:
            raise ConfigError("a task stream needs at least one task")
        seen = set()
        for k, task in enumerate(tasks):
            labels = set(task.classes)
            if seen & labels:
                raise ConfigError(f"task {k} reuses labels {sorted(seen & labels)}")
            seen |= labels
        self._tasks = tasks
        self.classes_per_task = int(classes_per_task)
        self.access_log = []

    @property
    def num_tasks(self) -> int:
        return len(self._tasks)

    @property
    def tau(self) -> int:
        return self._tasks[0].train_inputs.shape[1]

    @property
    def n_features(self) -> int:
        return self._tasks[0].train_inputs.shape[2]

    def classes_seen(self, phase: int) -> int:
        """Number of distinct classes in tasks 0..phase."""
        return sum(len(self._tasks[k].classes) for k in range(phase + 1))

    def train_data(self, task: int, phase: int):
        self.access_log.append(("train", task, phase))
        t = self._tasks[task]
        return t.train_inputs, t.train_labels

    def test_data(self, task: int, phase: int):
        self.access_log.append(("test", task, phase))
        t = self._tasks[task]
        return t.test_inputs, t.test_labels

    def train_reads_before_phase(self):
        """Exemplar-free audit: train-split reads of tasks earlier than the
        phase that read them.  Must be empty for a compliant trainer."""
        return [rec for rec in self.access_log if rec[0] == "train" and rec[1] < rec[2]]


def _pole_bank(rng) -> np.ndarray:
    """One shared set of well-separated stable poles per stream."""
    lo, hi = POLE_RANGE
    n = GENERATOR_STATE_SIZE
    for _ in range(1000):
        poles = np.sort(rng.uniform(lo, hi, size=n))
        if np.min(np.diff(poles)) >= POLE_MIN_GAP:
            return poles
    return np.linspace(lo, hi, n)


def _mean_trajectories(weights, poles, tau: int) -> np.ndarray:
    """Noise-free class mean trajectories under the constant drive.

    Class ``c``'s mean output at step ``t`` is
    ``DC_GAIN - sum_j w_j * poles_j**t`` with modal weights ``w`` summing
    to ``DC_GAIN`` per output channel; classes are distinguishable exactly
    insofar as these curves differ.  Returns ``(classes, n_features, tau)``.
    """
    pows = poles[None, :] ** np.arange(1, tau + 1)[:, None]  # (tau, modes)
    return DC_GAIN - np.einsum("cfm,tm->cft", weights, pows)


def _modal_weights(total_classes: int, n_features: int, poles, tau: int, rng):
    """Per-class modal weight vectors with separated mean trajectories.

    Each weight vector sums to ``DC_GAIN`` per output channel, so every
    class shares the same steady level and differs only in which modes
    carry the response.  The class-specific parts live in the top singular
    subspace of the (zero-sum) weights-to-trajectory map, scaled so the
    pairwise RMS distance between class mean trajectories is at least
    ``TRAJECTORY_MIN_GAP`` — separation placed where a classifier can see
    it.

    The class-specific coefficients form an orthonormal frame in that
    subspace (Haar-distributed via QR), so classes share no coefficient
    direction; the singular-value scaling of the weights-to-trajectory
    map still mixes them, so the mean *trajectories* overlap partially —
    bounded shared components rather than exact orthogonality, which
    leaves realistic cross-task structure in the stream.  If there are
    more classes than coefficient dimensions a rejection loop bounds
    the pairwise cosines instead (best candidate set wins if the cap is
    infeasible).  The scale is capped at ``SPREAD_LIMIT`` to keep weight
    magnitudes tame.
    """
    n = GENERATOR_STATE_SIZE
    pows = poles[None, :] ** np.arange(1, tau + 1)[:, None]  # (tau, modes)
    ones = np.full((n, 1), 1.0 / np.sqrt(n))
    # Orthonormal basis of the zero-sum hyperplane of weight space.
    null = np.linalg.svd(ones.T)[2][1:].T  # (modes, modes-1)
    u_map, sing, vt = np.linalg.svd(pows @ null, full_matrices=False)
    rank = min(COEF_SUBSPACE_RANK, sing.shape[0], tau)
    basis = null @ vt[:rank].T  # (modes, rank); pows @ basis = U_r diag(sing_r)
    dim = n_features * rank

    if total_classes <= dim:
        gauss = rng.normal(size=(dim, total_classes))
        q, r = np.linalg.qr(gauss)
        coefs = (q * np.sign(np.diag(r))).T  # orthonormal rows, Haar-distributed
    else:
        coefs = None
        best_cos = np.inf
        for _ in range(1000):
            cand = rng.normal(size=(total_classes, dim))
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
            cos = cand @ cand.T
            cos[np.diag_indices(total_classes)] = -np.inf
            worst = float(np.max(cos)) if total_classes > 1 else -np.inf
            if worst < best_cos:
                coefs, best_cos = cand, worst
            if worst <= MAX_COEF_COSINE:
                break
    # Unit coefficient differences are sqrt(2) apart and the map onto
    # trajectories shrinks by at most the smallest retained singular
    # value, so this spread keeps the pairwise RMS trajectory gap at or
    # above TRAJECTORY_MIN_GAP.
    spread = TRAJECTORY_MIN_GAP * np.sqrt(n_features * tau) / sing[rank - 1]
    spread = min(spread, SPREAD_LIMIT)
    deviations = coefs.reshape(total_classes, n_features, rank) @ basis.T
    return DC_GAIN / n + spread * deviations


def _class_system(weights, poles):
    """Generator for one class: shared poles, unit input weights, and the
    observation matrix realizing the class's modal weights (DC gain is
    ``DC_GAIN`` on every output channel by construction)."""
    b = np.ones(GENERATOR_STATE_SIZE)
    return poles, b, weights * (1.0 - poles)


def _simulate_class(a, b, c, count: int, tau: int, rng) -> np.ndarray:
    """Batched simulation: noisy step inputs, outputs plus observation
    noise.  The near-constant drive keeps each sample close to its class's
    mean trajectory, so the class geometry stays legible."""
    x = rng.normal(loc=INPUT_MEAN, scale=INPUT_NOISE, size=(count, tau))
    h = np.zeros((count, a.shape[0]))
    y = np.empty((count, tau, c.shape[0]))
    for t in range(tau):
        h = h * a + np.outer(x[:, t], b)
        y[:, t, :] = h @ c.T
    return y + OBSERVATION_NOISE * rng.normal(size=y.shape)


def generate_task_stream(
    seed: int,
    num_tasks: int = 3,
    classes_per_task: int = 2,
    samples_per_class: int = 200,
    tau: int = 16,
    n_features: int = 3,
) -> TaskStream:
    """Deterministic synthetic stream; see the module docstring."""
    for name, val in (
        ("num_tasks", num_tasks),
        ("classes_per_task", classes_per_task),
        ("samples_per_class", samples_per_class),
        ("tau", tau),
        ("n_features", n_features),
    ):
        if int(val) < 1:
            raise ConfigError(f"{name} must be >= 1, got {val}")

    rng = np.random.default_rng(seed)
    total = num_tasks * classes_per_task
    poles = _pole_bank(rng)
    weights = _modal_weights(total, n_features, poles, tau, rng)

    tasks = []
    n_train = int(round(TRAIN_FRACTION * samples_per_class))
    for k in range(num_tasks):
        class_ids = tuple(range(k * classes_per_task, (k + 1) * classes_per_task))
        inputs, labels = [], []
        for cid in class_ids:
            a, b, c = _class_system(weights[cid], poles)
            inputs.append(_simulate_class(a, b, c, samples_per_class, tau, rng))
            labels.append(np.full(samples_per_class, cid, dtype=int))
        inputs = np.concatenate(inputs)
        labels = np.concatenate(labels)
        # Interleave classes within each split so batches stay mixed.
        train_idx, test_idx = [], []
        for cid_pos in range(len(class_ids)):
            start = cid_pos * samples_per_class
            train_idx.extend(range(start, start + n_train))
            test_idx.extend(range(start + n_train, start + samples_per_class))
        train_idx = rng.permutation(np.array(train_idx))
        test_idx = np.array(test_idx)
        tasks.append(
            TaskData(
                train_inputs=inputs[train_idx],
                train_labels=labels[train_idx],
                test_inputs=inputs[test_idx],
                test_labels=labels[test_idx],
                classes=class_ids,
            )
        )
    return TaskStream(tasks, classes_per_task)

"""Exemplar-free sequential training with state-space regularization.

For each task in order: snapshot and freeze the current model, then train
on the new task's data alone.  Each batch's loss is

    softmax cross-entropy over all classes seen so far
    + lambda * regularizer(frozen model, live model)

where the regularizer compares the two models' aggregated per-step states
(or raw parameters / outputs, per the configured variant) on the current
batch.  No sample, label, or stored embedding from earlier tasks is read;
the data source logs every access so tests can audit that claim.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .ckd import CKDReport, ckd
from .classifier import (
    ModelConfig,
    SSMClassifier,
    checkpoint_to_json,
    layer_states,
    state_injections,
)
from .errors import ConfigError, InsufficientTasksError
from .losses import (
    LossConfig,
    slice_distance_grads,
    slice_distance_values,
    total_loss,
)
from .metrics import TaskAccuracyMatrix, accuracy_csv, compute_metrics, metrics_csv
from .stream import TaskStream, generate_task_stream

CKD_CSV_HEADER = "state,layer,task,ckd"


@dataclass(frozen=True)
class OptimizerConfig:
    """Plain gradient descent with a fixed step and optional cosine decay."""

    step_size: float = 0.2
    epochs: int = 20
    batch_size: int = 32
    cosine_decay: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.step_size) and self.step_size > 0):
            raise ConfigError(f"step_size must be positive, got {self.step_size}")
        for name in ("epochs", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return {
            "step_size": self.step_size,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "cosine_decay": self.cosine_decay,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        unknown = set(d) - {"step_size", "epochs", "batch_size", "cosine_decay"}
        if unknown:
            raise ConfigError(f"unknown optimizer keys: {sorted(unknown)}")
        return cls(**d)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its logit gradient (already /batch)."""
    batch = logits.shape[0]
    shift = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.sum(np.exp(shift), axis=1, keepdims=True))
    logp = shift - logz
    loss = -float(np.mean(logp[np.arange(batch), labels]))
    dlogits = np.exp(logp)
    dlogits[np.arange(batch), labels] -= 1.0
    dlogits /= batch
    return loss, dlogits


def _state_regularizer(loss_config, old_caches, new_caches, scope, lam):
    """ism / ism_plus: per-step state-space distance between the frozen and
    live aggregated states, plus the optional input-state deviation term.
    Returns (reg value, per-layer injections scaled by lambda)."""
    n_scope = len(scope)
    injections = {}
    reg = 0.0
    for idx in scope:
        a0, b0, c0 = layer_states(old_caches[idx])
        a1, b1, c1 = layer_states(new_caches[idx])
        batch, tau, n = a1.shape
        slices = batch * tau
        shape2 = (slices, n)
        vals = slice_distance_values(
            a0.reshape(shape2), c0.reshape(shape2), a1.reshape(shape2), c1.reshape(shape2)
        )
        layer_reg = float(np.mean(vals))
        d_a1, d_c1 = slice_distance_grads(
            a0.reshape(shape2), c0.reshape(shape2), a1.reshape(shape2), c1.reshape(shape2)
        )
        scale = lam / (slices * n_scope)
        d_a = (d_a1 * scale).reshape(batch, tau, n)
        d_c = (d_c1 * scale).reshape(batch, tau, n)
        d_b = None
        if loss_config.variant == "ism_plus":
            diff = b1 - b0
            layer_reg += loss_config.gamma * float(np.sum(diff**2)) / slices
            d_b = (2.0 * loss_config.gamma * lam / (slices * n_scope)) * diff
        injections[idx] = state_injections(
            new_caches[idx], d_a_tilde=d_a, d_b_tilde=d_b, d_c_tilde=d_c
        )
        reg += layer_reg
    return reg / n_scope, injections


def _output_regularizer(old_caches, new_caches, scope, lam):
    """output_mse: distillation on layer output sequences."""
    n_scope = len(scope)
    injections = {}
    reg = 0.0
    for idx in scope:
        diff = new_caches[idx]["y"] - old_caches[idx]["y"]
        batch, tau = diff.shape[:2]
        slices = batch * tau
        reg += float(np.sum(diff**2)) / slices
        injections[idx] = {"dy": (2.0 * lam / (slices * n_scope)) * diff}
    return reg / n_scope, injections


def _param_regularizer(old_model, new_model, scope, lam):
    """param_mse: squared parameter deviation from the frozen model."""
    n_scope = len(scope)
    reg = 0.0
    extra = {}
    for idx in scope:
        layer_grads = {}
        for key, new_val in new_model.layers[idx].items():
            diff = new_val - old_model.layers[idx][key]
            reg += float(np.sum(diff**2))
            layer_grads[key] = (2.0 * lam / n_scope) * diff
        extra[idx] = layer_grads
    return reg / n_scope, extra


def loss_and_grads(model, old_model, inputs, labels, classes_seen, loss_config):
    """Total loss (classification + lambda * regularizer) and its exact
    gradient for every parameter.  ``old_model=None`` disables the
    regularizer (plain sequential fine-tuning)."""
    feats, caches = model.forward(inputs)
    logits = model.logits(feats, classes_seen)
    cls, dlogits = softmax_cross_entropy(logits, labels)
    head_grads, dfeats = model.head_backward(dlogits, feats, classes_seen)

    lam = loss_config.lambda_
    reg = 0.0
    injections = None
    extra_param_grads = None
    if old_model is not None and lam != 0.0 and loss_config.variant != "none":
        scope = model.config.scope_layers()
        if loss_config.variant in ("ism", "ism_plus"):
            _, old_caches = old_model.forward(inputs)
            reg, inj_map = _state_regularizer(loss_config, old_caches, caches, scope, lam)
            injections = [inj_map.get(i) for i in range(len(model.layers))]
        elif loss_config.variant == "output_mse":
            _, old_caches = old_model.forward(inputs)
            reg, inj_map = _output_regularizer(old_caches, caches, scope, lam)
            injections = [inj_map.get(i) for i in range(len(model.layers))]
        elif loss_config.variant == "param_mse":
            reg, extra_param_grads = _param_regularizer(old_model, model, scope, lam)

    layer_grads = model.backward(caches, dfeats, injections)
    if extra_param_grads:
        for idx, extra in extra_param_grads.items():
            for key, g in extra.items():
                layer_grads[idx][key] = layer_grads[idx][key] + g
    value = total_loss(cls, reg, loss_config)
    return value, {"layers": layer_grads, "head": head_grads}


def evaluate_accuracy(model, inputs, labels, classes_seen) -> float:
    preds = model.predict(inputs, classes_seen)
    return float(np.mean(preds == labels))


def train_sequential(
    stream: TaskStream,
    loss_config: LossConfig,
    optimizer_config: OptimizerConfig | None = None,
    seed: int = 0,
    model_config: ModelConfig | None = None,
):
    """Runs the sequential protocol and returns (TaskAccuracyMatrix,
    per-task checkpoints)."""
    opt = optimizer_config or OptimizerConfig()
    if model_config is None:
        model_config = ModelConfig(input_dim=stream.n_features)
    elif model_config.input_dim != stream.n_features:
        raise ConfigError(
            f"model input_dim {model_config.input_dim} != stream features {stream.n_features}"
        )
    rng = np.random.default_rng(seed)
    total_classes = stream.classes_seen(stream.num_tasks - 1)
    model = SSMClassifier(model_config, total_classes, rng)

    reg_enabled = loss_config.variant != "none" and loss_config.lambda_ != 0.0
    rows, checkpoints = [], []
    for task in range(stream.num_tasks):
        classes_seen = stream.classes_seen(task)
        old_model = model.clone() if (task > 0 and reg_enabled) else None
        x_train, y_train = stream.train_data(task, phase=task)
        count = x_train.shape[0]
        steps_per_epoch = math.ceil(count / opt.batch_size)
        total_steps = opt.epochs * steps_per_epoch
        step = 0
        for _epoch in range(opt.epochs):
            perm = rng.permutation(count)
            for start in range(0, count, opt.batch_size):
                idx = perm[start : start + opt.batch_size]
                lr = opt.step_size
                if opt.cosine_decay:
                    lr *= 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
                _, grads = loss_and_grads(
                    model, old_model, x_train[idx], y_train[idx], classes_seen, loss_config
                )
                model.apply_gradients(grads, lr)
                step += 1
        checkpoints.append(model.to_checkpoint(task=task, classes_seen=classes_seen))
        row = []
        for j in range(task + 1):
            x_test, y_test = stream.test_data(j, phase=task)
            row.append(evaluate_accuracy(model, x_test, y_test, classes_seen))
        rows.append(row)
    return TaskAccuracyMatrix.from_rows(rows), checkpoints


def ckd_state_drift(checkpoints, probe_inputs) -> dict:
    """Runs the same probe inputs through every checkpoint and reports, per
    layer and state in {A, B, C}, the representation drift (CKD) of each
    checkpoint's aggregated states against the first checkpoint's."""
    if len(checkpoints) < 2:
        raise InsufficientTasksError("state-drift analysis needs >= 2 checkpoints")
    models = [SSMClassifier.from_checkpoint(c) for c in checkpoints]
    num_layers = models[0].config.layers
    count = len(models)

    rows = []  # rows[t][layer] = {"A": (P, tau*n), ...}
    for model in models:
        _, caches = model.forward(probe_inputs)
        per_layer = []
        for cache in caches:
            a_t, b_t, c_t = layer_states(cache)
            batch = a_t.shape[0]
            per_layer.append(
                {
                    "A": a_t.reshape(batch, -1),
                    "B": b_t.reshape(batch, -1),
                    "C": c_t.reshape(batch, -1),
                }
            )
        rows.append(per_layer)

    reports = {}
    for label in ("A", "B", "C"):
        per_layer = np.zeros((num_layers, count))
        for layer in range(num_layers):
            base = rows[0][layer][label]
            for t in range(count):
                per_layer[layer, t] = ckd(rows[t][layer][label], base)
        reports[label] = CKDReport(per_layer=per_layer, state_label=label)
    return reports


# -- end-to-end driver ---------------------------------------------------------

_RUN_KEYS = {"stream", "loss", "optimizer", "model", "seed", "ckd"}


def default_run_config() -> dict:
    """The bundled run configuration: default stream, tuned regularizer
    weight, and the reference optimizer/model settings."""
    text = resources.files("obsgrass").joinpath("configs/default.json").read_text()
    return json.loads(text)


def load_run_config(path) -> dict:
    """Parses a run-config JSON file, validating the top-level keys."""
    try:
        config = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read run config {path}: {exc}") from None
    if not isinstance(config, dict):
        raise ConfigError("run config must be a JSON object")
    unknown = set(config) - _RUN_KEYS
    if unknown:
        raise ConfigError(f"unknown run-config keys: {sorted(unknown)}")
    return config


def run_experiment(config: dict, out_dir=None) -> dict:
    """Executes a run-config dict: builds the stream, trains sequentially,
    computes metrics, optionally the state-drift report, and writes CSV/JSON
    artifacts when ``out_dir`` is given."""
    unknown = set(config) - _RUN_KEYS
    if unknown:
        raise ConfigError(f"unknown run-config keys: {sorted(unknown)}")
    seed = int(config.get("seed", 0))
    stream_cfg = dict(config.get("stream", {}))
    stream_seed = stream_cfg.pop("seed", seed)
    try:
        stream = generate_task_stream(seed=stream_seed, **stream_cfg)
    except TypeError as exc:
        raise ConfigError(f"bad stream config: {exc}") from None
    loss_config = LossConfig.from_dict(config.get("loss", {}))
    opt = OptimizerConfig.from_dict(config.get("optimizer", {}))
    model_cfg = dict(config.get("model", {}))
    model_cfg.setdefault("input_dim", stream.n_features)
    try:
        model_config = ModelConfig(**model_cfg)
    except TypeError as exc:
        raise ConfigError(f"bad model config: {exc}") from None

    acc, checkpoints = train_sequential(stream, loss_config, opt, seed, model_config)
    metrics = compute_metrics(acc)
    result = {"accuracy": acc, "metrics": metrics, "checkpoints": checkpoints}

    if config.get("ckd"):
        probe, _ = stream.test_data(0, phase=stream.num_tasks - 1)
        result["ckd"] = ckd_state_drift(checkpoints, probe)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "accuracy.csv").write_text(accuracy_csv(acc))
        (out / "metrics.csv").write_text(metrics_csv(metrics))
        for ckpt in checkpoints:
            name = f"checkpoint_task{ckpt['task'] + 1}.json"
            (out / name).write_text(checkpoint_to_json(ckpt) + "\n")
        if "ckd" in result:
            lines = [CKD_CSV_HEADER]
            for label, report in result["ckd"].items():
                layers, count = report.per_layer.shape
                for layer in range(layers):
                    for t in range(count):
                        lines.append(
                            f"{label},{layer},{t + 1},{report.per_layer[layer, t]:.10g}"
                        )
            (out / "ckd.csv").write_text("\n".join(lines) + "\n")
    return result

"""Small selective diagonal-SSM sequence classifier with exact gradients.

Per layer, with state size n, channels o, input dimension d, and input
sequence x(t) in R^d:

    u(t)    = W_in x(t)                             channel mix, (o,)
    dt(t)   = softplus(w_dt * u(t) + b_dt)          per-channel step, (o,)
    A_cont  = -softplus(A_decay)                    decay rates, (o, n)
    Abar(t) = exp(dt(t) * A_cont)                   transition, (o, n), in (0,1)
    bvec(t) = W_B u(t)                              input-dependent B, (n,)
    cvec(t) = c * (1 + W_mod u(t))                  readout, (n,)
    h(t)    = Abar(t) * h(t-1) + dt(t) bvec(t) u(t) state, (o, n)
    y(t)_i  = sum_j chat(t)_j h(t)_ij               output, (o,)

with chat = cvec / ||cvec|| the unit readout direction, shared across
channels.  Normalizing the readout makes the feature map scale-invariant
in cvec, so the classifier's behaviour depends on the readout's
*direction* — the same degree of freedom the subspace regularizers
measure.  The direction has one trainable degree of freedom, the base
vector c; the input-dependent part W_mod is a frozen random modulation
applied multiplicatively, entry by entry.  That split matters for
sequential training: a fully trainable input-conditioned readout lets
training rotate how *unseen* inputs are read with no visible change on
the data a regularizer is evaluated on, whereas drift of the shared base
direction is visible on any batch.  The modulation being multiplicative
in c (rather than an additive offset) keeps the per-sample readout
*geometry* tied to the trainable direction: when training moves c, the
shape of the readout cloud across samples moves with it, so drift
analyses that are invariant to common translations still register the
change — and when a regularizer pins c, it pins that geometry too.

A soft clip bounds the feature path: s*tanh(y/s) feeds the next layer's
x, and the growing linear head maps the time-averaged clipped last-layer
output to logits over the classes seen so far.  (Without the bound the
readout is cubic in the input scale, which plain gradient descent cannot
survive; the scale s keeps typical outputs in the linear region, since a
hard-saturating squash degrades every channel to a sign bit and erases
the feature geometry the regularizers are meant to preserve.
Regularizers on the raw states/outputs are unaffected.)

The head is strictly linear — no bias.  Under class-incremental
cross-entropy a bias receives a feature-independent negative gradient on
every batch of a later task, so earlier classes accumulate a depressed
offset that no state regularizer can see or repair; dropping the bias
makes the logits a pure comparison of feature direction against class
weight vectors, which is the quantity the state-space penalties preserve.

The transition is always strictly stable (dt > 0, A_cont < 0), so the
per-step aggregated states — soft-normalized channel-mean Abar, bvec and
cvec — are valid inputs for the state-space distances.

All gradients are hand-derived reverse-mode (including the scan) and are
validated against central finite differences in the tests; regularizers
feed their gradients in through per-layer injection hooks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DimensionMismatchError
from .ssm import reals_to_json, soft_normalize, soft_normalize_deriv

REG_SCOPES = ("last", "last_half", "all")
LAYER_PARAM_KEYS = ("a_decay", "w_dt", "b_dt", "w_b", "w_c", "w_cm", "w_in")
# The channel mix, the input-injection map, and the readout modulation are
# fixed random projections (reservoir-style): what remains trainable is
# exactly the transition and readout geometry the state-space regularizers
# act on, so parameter drift cannot escape through an unconstrained input
# path.
TRAINABLE_KEYS = ("a_decay", "w_dt", "b_dt", "w_c")
_READOUT_EPS = 1e-6
READOUT_MOD_SCALE = 0.25
SQUASH_SCALE = 3.0


@dataclass(frozen=True)
class ModelConfig:
    state_size: int = 8
    channels: int = 64
    layers: int = 1
    input_dim: int = 1
    reg_scope: str = "all"

    def __post_init__(self):
        for name in ("state_size", "channels", "layers", "input_dim"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.reg_scope not in REG_SCOPES:
            raise ConfigError(f"reg_scope must be one of {REG_SCOPES}, got {self.reg_scope!r}")

    def scope_layers(self) -> tuple:
        """Indices of the layers whose states the regularizer constrains."""
        ell = self.layers
        if self.reg_scope == "last":
            return (ell - 1,)
        if self.reg_scope == "last_half":
            return tuple(range(ell - (ell + 1) // 2, ell))
        return tuple(range(ell))

    def to_dict(self) -> dict:
        return {
            "state_size": self.state_size,
            "channels": self.channels,
            "layers": self.layers,
            "input_dim": self.input_dim,
            "reg_scope": self.reg_scope,
        }


def _softplus(z):
    return np.logaddexp(0.0, z)


class SSMClassifier:
    """Stacked selective-SSM feature extractor plus masked linear head."""

    def __init__(self, config: ModelConfig, num_classes: int, rng=None, _empty=False):
        if num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        self.config = config
        self.num_classes = int(num_classes)
        self.layers = []
        self.head = None
        if _empty:
            return
        if rng is None:
            rng = np.random.default_rng(0)
        o, n = config.channels, config.state_size
        for idx in range(config.layers):
            d = config.input_dim if idx == 0 else o
            self.layers.append(
                {
                    # Wide spreads give the channel bank diverse timescales, so
                    # the untrained feature map already resolves many distinct
                    # temporal shapes (reservoir-style richness).
                    "a_decay": rng.normal(0.0, 1.0, size=(o, n)),
                    "w_dt": rng.normal(0.0, 0.1, size=o),
                    "b_dt": rng.uniform(-2.0, 1.0, size=o),
                    "w_b": rng.normal(size=(n, o)) / np.sqrt(o),
                    "w_c": rng.normal(size=n) / np.sqrt(n),
                    "w_cm": READOUT_MOD_SCALE * rng.normal(size=(n, o)) / np.sqrt(o),
                    "w_in": rng.normal(size=(o, d)) / np.sqrt(d),
                }
            )
        self.head = {"w": np.zeros((num_classes, o))}

    # -- forward ------------------------------------------------------------

    def _coerce_inputs(self, inputs) -> np.ndarray:
        x = np.asarray(inputs, dtype=float)
        if x.ndim == 2:
            x = x[:, :, None]
        if x.ndim != 3 or x.shape[2] != self.config.input_dim:
            raise DimensionMismatchError(
                f"inputs must be (batch, tau, {self.config.input_dim}), got {x.shape}"
            )
        return x

    def forward(self, inputs):
        """Returns (features (B,o), per-layer caches)."""
        x = self._coerce_inputs(inputs)
        caches = []
        for params in self.layers:
            cache = _layer_forward(params, x)
            caches.append(cache)
            x = cache["ty"]
        feats = x.mean(axis=1)
        return feats, caches

    def logits(self, feats, classes_seen: int):
        if not 1 <= classes_seen <= self.num_classes:
            raise ConfigError(f"classes_seen must be in [1, {self.num_classes}]")
        return feats @ self.head["w"][:classes_seen].T

    def predict(self, inputs, classes_seen: int):
        feats, _ = self.forward(inputs)
        return np.argmax(self.logits(feats, classes_seen), axis=1)

    # -- backward -----------------------------------------------------------

    def head_backward(self, dlogits, feats, classes_seen: int):
        """Gradients of the head and of the features feeding it."""
        dw = np.zeros_like(self.head["w"])
        dw[:classes_seen] = dlogits.T @ feats
        dfeats = dlogits @ self.head["w"][:classes_seen]
        return {"w": dw}, dfeats

    def backward(self, caches, dfeats, injections=None):
        """Reverse-mode through all layers.  ``injections`` is an optional
        per-layer list of dicts with broadcastable gradient contributions on
        the keys ``dy`` (raw layer output), ``dabar``, ``dbvec``, ``dcvec``."""
        if injections is None:
            injections = [None] * len(self.layers)
        tau = caches[-1]["y"].shape[1]
        dty = np.broadcast_to(
            dfeats[:, None, :] / tau, caches[-1]["y"].shape
        ).copy()
        grads = [None] * len(self.layers)
        for idx in range(len(self.layers) - 1, -1, -1):
            inj = injections[idx] or {}
            ty = caches[idx]["ty"]
            # Through the soft clip: d/dy [s tanh(y/s)] = 1 - (ty/s)^2.
            dy = dty * (1.0 - (ty / SQUASH_SCALE) ** 2)
            if "dy" in inj:
                dy = dy + inj["dy"]
            grads[idx], dinp = _layer_backward(self.layers[idx], caches[idx], dy, inj)
            dty = dinp
        return grads

    def apply_gradients(self, grads, step: float):
        for params, g in zip(self.layers, grads["layers"]):
            for key in TRAINABLE_KEYS:
                params[key] -= step * g[key]
        self.head["w"] -= step * grads["head"]["w"]

    # -- copies and checkpoints ----------------------------------------------

    def clone(self) -> "SSMClassifier":
        other = SSMClassifier(self.config, self.num_classes, _empty=True)
        other.layers = [{k: v.copy() for k, v in p.items()} for p in self.layers]
        other.head = {k: v.copy() for k, v in self.head.items()}
        return other

    def to_checkpoint(self, task: int, classes_seen: int) -> dict:
        return {
            "task": int(task),
            "classes_seen": int(classes_seen),
            "config": self.config.to_dict(),
            "layers": [{k: p[k].copy() for k in LAYER_PARAM_KEYS} for p in self.layers],
            "head": {"w": self.head["w"].copy()},
        }

    @classmethod
    def from_checkpoint(cls, ckpt: dict) -> "SSMClassifier":
        config = ModelConfig(**ckpt["config"])
        model = cls(config, ckpt["head"]["w"].shape[0], _empty=True)
        model.layers = [
            {k: np.array(p[k], dtype=float) for k in LAYER_PARAM_KEYS}
            for p in ckpt["layers"]
        ]
        model.head = {"w": np.array(ckpt["head"]["w"], dtype=float)}
        return model


def _layer_forward(params, inp):
    u = inp @ params["w_in"].T  # (B,T,o)
    z = u * params["w_dt"] + params["b_dt"]
    dt = _softplus(z)
    a_cont = -_softplus(params["a_decay"])  # (o,n), always < 0
    abar = np.exp(dt[..., None] * a_cont)  # (B,T,o,n)
    bvec = u @ params["w_b"].T  # (B,T,n)
    batch, tau = u.shape[:2]
    o, n = a_cont.shape
    h = np.empty((batch, tau, o, n))
    hprev = np.zeros((batch, o, n))
    for t in range(tau):
        drive = (dt[:, t, :, None] * u[:, t, :, None]) * bvec[:, t, None, :]
        hprev = abar[:, t] * hprev + drive
        h[:, t] = hprev
    # Readout: trainable base direction scaled by a frozen input modulation.
    mod = 1.0 + u @ params["w_cm"].T  # (B,T,n)
    cvec = params["w_c"] * mod
    r = np.sqrt(np.sum(cvec**2, axis=-1) + _READOUT_EPS**2)  # (B,T)
    chat = cvec / r[..., None]
    y = np.einsum("btij,btj->bti", h, chat)
    return {
        "inp": inp, "u": u, "z": z, "dt": dt, "a_cont": a_cont,
        "abar": abar, "bvec": bvec, "mod": mod, "cvec": cvec, "h": h,
        "r": r, "chat": chat, "y": y,
        "ty": SQUASH_SCALE * np.tanh(y / SQUASH_SCALE),
    }


def _layer_backward(params, cache, dy, inj):
    u, z, dt = cache["u"], cache["z"], cache["dt"]
    a_cont, abar = cache["a_cont"], cache["abar"]
    bvec, h, inp = cache["bvec"], cache["h"], cache["inp"]
    r, chat, mod = cache["r"], cache["chat"], cache["mod"]
    batch, tau, o = dy.shape
    n = a_cont.shape[1]

    # Through the unit readout chat = cvec / r.
    dchat = np.einsum("bti,btij->btj", dy, h)
    dcvec = (dchat - chat * np.sum(chat * dchat, axis=-1, keepdims=True)) / r[..., None]
    if "dcvec" in inj:
        dcvec = dcvec + inj["dcvec"]
    # The base direction collects the whole batch's readout gradient.
    dw_c = (dcvec * mod).sum(axis=(0, 1))
    dmod = dcvec * params["w_c"]

    # Backward scan: dL/dh(t) = dy(t) x chat(t) + dL/dh(t+1) * Abar(t+1).
    gh = np.empty_like(h)
    gnext = np.zeros((batch, o, n))
    for t in range(tau - 1, -1, -1):
        g = dy[:, t, :, None] * chat[:, t, None, :]
        if t + 1 < tau:
            g = g + gnext * abar[:, t + 1]
        gh[:, t] = g
        gnext = g

    hprev = np.concatenate([np.zeros((batch, 1, o, n)), h[:, :-1]], axis=1)
    dabar = gh * hprev
    if "dabar" in inj:
        dabar = dabar + inj["dabar"]

    # Drive term dt_i * bvec_j * u_i.
    s = np.einsum("btij,btj->bti", gh, bvec)
    ddt = s * u
    du = s * dt
    dbvec = np.einsum("btij,bti->btj", gh, dt * u)
    if "dbvec" in inj:
        dbvec = dbvec + inj["dbvec"]

    # Abar = exp(dt * A_cont).
    dexp = dabar * abar
    ddt = ddt + np.einsum("btij,ij->bti", dexp, a_cont)
    da_cont = np.einsum("btij,bti->ij", dexp, dt)
    da_decay = -da_cont * expit(params["a_decay"])  # softplus'

    dz = ddt * expit(z)  # softplus'
    dw_dt = np.sum(dz * u, axis=(0, 1))
    db_dt = np.sum(dz, axis=(0, 1))
    du = du + dz * params["w_dt"]

    dw_b = np.einsum("btj,bti->ji", dbvec, u)
    du = du + dbvec @ params["w_b"]
    dw_cm = np.einsum("btj,bti->ji", dmod, u)
    du = du + dmod @ params["w_cm"]

    dw_in = np.einsum("bti,btf->if", du, inp)
    dinp = du @ params["w_in"]
    grads = {
        "a_decay": da_decay, "w_dt": dw_dt, "b_dt": db_dt,
        "w_b": dw_b, "w_c": dw_c, "w_cm": dw_cm, "w_in": dw_in,
    }
    return grads, dinp


def layer_states(cache):
    """Aggregated per-step states (a~, b~, c~), each (B, tau, n)."""
    a_tilde = soft_normalize(cache["abar"].mean(axis=2))
    b_tilde = soft_normalize(cache["bvec"])
    c_tilde = soft_normalize(cache["cvec"])
    return a_tilde, b_tilde, c_tilde


def state_injections(cache, d_a_tilde=None, d_b_tilde=None, d_c_tilde=None):
    """Convert gradients on aggregated states into layer injections.

    The derivative of the soft normalization is taken at its raw input
    (channel-mean Abar, bvec, cvec respectively)."""
    inj = {}
    if d_a_tilde is not None:
        dm = d_a_tilde * soft_normalize_deriv(cache["abar"].mean(axis=2))
        inj["dabar"] = dm[:, :, None, :] / cache["abar"].shape[2]
    if d_b_tilde is not None:
        inj["dbvec"] = d_b_tilde * soft_normalize_deriv(cache["bvec"])
    if d_c_tilde is not None:
        inj["dcvec"] = d_c_tilde * soft_normalize_deriv(cache["cvec"])
    return inj


# -- checkpoint serialization -------------------------------------------------
# Same JSON discipline as the SSM files: every real is written with 17
# significant digits so reload is bit-exact.


def checkpoint_to_json(ckpt: dict) -> str:
    cfg_txt = json.dumps(ckpt["config"], sort_keys=True)
    layer_txts = []
    for p in ckpt["layers"]:
        fields = ", ".join(f'"{k}": {reals_to_json(p[k])}' for k in LAYER_PARAM_KEYS)
        layer_txts.append("{" + fields + "}")
    head_txt = '{"w": %s}' % reals_to_json(ckpt["head"]["w"])
    return (
        '{"task": %d, "classes_seen": %d, "config": %s, "layers": [%s], "head": %s}'
        % (ckpt["task"], ckpt["classes_seen"], cfg_txt, ", ".join(layer_txts), head_txt)
    )


def checkpoint_from_json(text: str) -> dict:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"checkpoint is not valid JSON: {exc}") from None
    try:
        ckpt = {
            "task": int(raw["task"]),
            "classes_seen": int(raw["classes_seen"]),
            "config": dict(raw["config"]),
            "layers": [
                {k: np.array(p[k], dtype=float) for k in LAYER_PARAM_KEYS}
                for p in raw["layers"]
            ],
            "head": {"w": np.array(raw["head"]["w"], dtype=float)},
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed checkpoint: {exc}") from None
    return ckpt

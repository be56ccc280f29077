"""Span-pair probing classifier with from-scratch gradients.

Architecture: per-span affine projection to 256 dims (optionally replaced
by a fixed-window CNN, or fed by a trainable scalar mix of layers),
self-attentive pooling restricted to each span, a two-layer tanh MLP over
the concatenated span representations, and an independent sigmoid per
label trained with binary cross-entropy.
"""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass, field

import numpy as np

from .core import Span
from .encoders import cnn_windows

PROB_EPS = 1e-7
CHECKPOINT_MAGIC = b"EPP1"


@dataclass
class ProbeConfig:
    input_dim: int
    n_labels: int
    two_span: bool
    projection_dim: int = 256
    mlp_hidden_dim: int = 256
    encoder_mode: str = "direct"  # direct | mix | cnn
    cnn_k: int = 1
    n_layers: int = 1  # activation layers consumed by scalar mixing

    def __post_init__(self):
        if min(self.input_dim, self.n_labels, self.projection_dim, self.mlp_hidden_dim) <= 0:
            raise ValueError("all dimensions must be positive")
        if self.encoder_mode not in ("direct", "mix", "cnn"):
            raise ValueError(f"unknown encoder_mode {self.encoder_mode!r}")
        if self.encoder_mode == "cnn" and self.cnn_k not in (1, 2):
            raise ValueError("cnn_k must be 1 or 2")

    @property
    def n_spans(self) -> int:
        return 2 if self.two_span else 1


def init_params(config: ProbeConfig, seed: int) -> dict:
    """Seeded parameter tensors, uniform in +-1/sqrt(fan_in), zero biases."""
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(np.float32)

    p = {}
    d, proj = config.input_dim, config.projection_dim
    for k in range(1, config.n_spans + 1):
        if config.encoder_mode == "cnn":
            width = (2 * config.cnn_k + 1) * d
            p[f"cnn{k}_W"] = uniform((proj, width), width)
            p[f"cnn{k}_b"] = np.zeros(proj, dtype=np.float32)
        else:
            p[f"proj{k}_W"] = uniform((proj, d), d)
            p[f"proj{k}_b"] = np.zeros(proj, dtype=np.float32)
        p[f"att{k}_w"] = uniform((proj,), proj)
    h = config.mlp_hidden_dim
    p["mlp1_W"] = uniform((h, config.n_spans * proj), config.n_spans * proj)
    p["mlp1_b"] = np.zeros(h, dtype=np.float32)
    p["mlp2_W"] = uniform((h, h), h)
    p["mlp2_b"] = np.zeros(h, dtype=np.float32)
    p["out_W"] = uniform((config.n_labels, h), h)
    p["out_b"] = np.zeros(config.n_labels, dtype=np.float32)
    if config.encoder_mode == "mix":
        p["mix_s"] = np.zeros(config.n_layers, dtype=np.float32)
        p["mix_gamma"] = np.ones(1, dtype=np.float32)
    return p


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(x):
    z = x - x.max()
    e = np.exp(z)
    return e / e.sum()


def project(e: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine projection of per-token vectors: A e + b, rowwise."""
    return e @ weight.T + bias


def attention_pool(projected: np.ndarray, span: Span, att_w: np.ndarray) -> np.ndarray:
    """Softmax-weighted sum of the span's projected vectors; tokens outside
    the span never contribute."""
    e_span = projected[span.start : span.end]
    a = _softmax(e_span @ att_w)
    return a @ e_span


def mlp_predict(x: np.ndarray, params: dict) -> np.ndarray:
    """Two tanh layers then independent per-label sigmoids."""
    h1 = np.tanh(x @ params["mlp1_W"].T + params["mlp1_b"])
    h2 = np.tanh(h1 @ params["mlp2_W"].T + params["mlp2_b"])
    return _sigmoid(h2 @ params["out_W"].T + params["out_b"])


def bce_loss(probs: np.ndarray, golds: np.ndarray) -> float:
    """Mean over labels of binary cross-entropy, averaged over targets.
    Probabilities are clamped away from {0, 1} for numerical safety."""
    probs = np.atleast_2d(probs)
    golds = np.atleast_2d(golds)
    pc = np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    per_target = -(golds * np.log(pc) + (1.0 - golds) * np.log(1.0 - pc)).mean(axis=1)
    return float(per_target.mean())


def _sentence_vectors(acts: np.ndarray, params: dict, config: ProbeConfig):
    """Base per-token vectors e plus the mix cache (w, mixbar) if active."""
    if config.encoder_mode == "mix":
        s = params["mix_s"]
        w = _softmax(s)
        mixbar = np.tensordot(w, acts, axes=(0, 0))
        return params["mix_gamma"][0] * mixbar, (w, mixbar)
    return acts[0], None


def _head_vectors(e: np.ndarray, k: int, params: dict, config: ProbeConfig):
    """Per-head token representations fed to attention pooling."""
    if config.encoder_mode == "cnn":
        win = cnn_windows(e, config.cnn_k)
        pre = win @ params[f"cnn{k}_W"].T + params[f"cnn{k}_b"]
        return np.tanh(pre), win
    return project(e, params[f"proj{k}_W"], params[f"proj{k}_b"]), None


def forward_backward(batch, params: dict, config: ProbeConfig, compute_grads: bool = True):
    """Mean batch loss, per-target probabilities, and (optionally) exact
    gradients for every trainable tensor.

    `batch` is a list of (acts, targets) where acts is [layer][token][dim]
    and each target is (span1, span2 or None, multi_hot gold vector).
    """
    dtype = params["mlp1_W"].dtype
    heads = range(1, config.n_spans + 1)

    sent_cache = []
    pooled = []  # per target, per head: (sent_idx, span, a, r)
    target_rows = []
    golds = []
    for s_idx, (acts, targets) in enumerate(batch):
        acts = np.asarray(acts, dtype=dtype)
        e, mix_cache = _sentence_vectors(acts, params, config)
        head_e, head_win, head_z = {}, {}, {}
        for k in heads:
            head_e[k], head_win[k] = _head_vectors(e, k, params, config)
            head_z[k] = head_e[k] @ params[f"att{k}_w"]
        sent_cache.append((acts, e, mix_cache, head_e, head_win))
        for span1, span2, y in targets:
            spans = (span1, span2) if config.two_span else (span1,)
            if config.two_span and span2 is None:
                raise ValueError("two-span probe requires span2 on every target")
            per_head = []
            rs = []
            for k, span in zip(heads, spans):
                z_span = head_z[k][span.start : span.end]
                a = _softmax(z_span)
                r = a @ head_e[k][span.start : span.end]
                per_head.append((s_idx, span, a))
                rs.append(r)
            pooled.append(per_head)
            target_rows.append(np.concatenate(rs))
            golds.append(np.asarray(y, dtype=dtype))

    n_targets = len(target_rows)
    if n_targets == 0:
        raise ValueError("batch contains no targets")
    x = np.stack(target_rows)
    y = np.stack(golds)
    h1 = np.tanh(x @ params["mlp1_W"].T + params["mlp1_b"])
    h2 = np.tanh(h1 @ params["mlp2_W"].T + params["mlp2_b"])
    logits = h2 @ params["out_W"].T + params["out_b"]
    probs = _sigmoid(logits)
    pc = np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    loss = float(-(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).mean())

    if not compute_grads:
        return loss, probs, None

    grads = {name: np.zeros_like(v) for name, v in params.items()}
    # Unclamped sigmoid+BCE collapses to p - y; clamped entries have zero
    # gradient since the clamp freezes the loss there.
    active = (probs > PROB_EPS) & (probs < 1.0 - PROB_EPS)
    dlogits = np.where(active, probs - y, 0.0) / (n_targets * config.n_labels)
    grads["out_W"] += dlogits.T @ h2
    grads["out_b"] += dlogits.sum(axis=0)
    dh2 = dlogits @ params["out_W"]
    dpre2 = dh2 * (1.0 - h2 * h2)
    grads["mlp2_W"] += dpre2.T @ h1
    grads["mlp2_b"] += dpre2.sum(axis=0)
    dh1 = dpre2 @ params["mlp2_W"]
    dpre1 = dh1 * (1.0 - h1 * h1)
    grads["mlp1_W"] += dpre1.T @ x
    grads["mlp1_b"] += dpre1.sum(axis=0)
    dx = dpre1 @ params["mlp1_W"]

    proj = config.projection_dim
    d_head_e = [
        {k: np.zeros_like(sent_cache[s][3][k]) for k in heads}
        for s in range(len(batch))
    ]
    for t_idx, per_head in enumerate(pooled):
        for pos, (s_idx, span, a) in enumerate(per_head):
            dr = dx[t_idx, pos * proj : (pos + 1) * proj]
            k = pos + 1
            e_span = sent_cache[s_idx][3][k][span.start : span.end]
            da = e_span @ dr
            dz = a * (da - a @ da)
            d_span = a[:, None] * dr[None, :] + dz[:, None] * params[f"att{k}_w"][None, :]
            d_head_e[s_idx][k][span.start : span.end] += d_span
            grads[f"att{k}_w"] += e_span.T @ dz

    for s_idx, (acts, e, mix_cache, head_e, head_win) in enumerate(sent_cache):
        de = np.zeros_like(e)
        for k in heads:
            d_ek = d_head_e[s_idx][k]
            if config.encoder_mode == "cnn":
                dpre = d_ek * (1.0 - head_e[k] * head_e[k])
                grads[f"cnn{k}_W"] += dpre.T @ head_win[k]
                grads[f"cnn{k}_b"] += dpre.sum(axis=0)
                # layer-0 inputs are fixed; no upstream gradient needed
            else:
                grads[f"proj{k}_W"] += d_ek.T @ e
                grads[f"proj{k}_b"] += d_ek.sum(axis=0)
                de += d_ek @ params[f"proj{k}_W"]
        if config.encoder_mode == "mix":
            w, mixbar = mix_cache
            grads["mix_gamma"][0] += (de * mixbar).sum()
            dmixbar = params["mix_gamma"][0] * de
            dots = np.array([(dmixbar * acts[l]).sum() for l in range(config.n_layers)])
            grads["mix_s"] += (w * (dots - w @ dots)).astype(grads["mix_s"].dtype)

    return loss, probs, grads


def predict(params: dict, config: ProbeConfig, acts, span1: Span, span2: Span | None = None):
    """Per-label probabilities for a single target."""
    y_dummy = np.zeros(config.n_labels, dtype=np.float32)
    acts = np.asarray(acts, dtype=np.float32)
    if acts.ndim == 2:
        acts = acts[np.newaxis]
    _, probs, _ = forward_backward(
        [(acts, [(span1, span2, y_dummy)])], params, config, compute_grads=False
    )
    return probs[0]


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values())))


def clip_gradients(grads: dict, max_norm: float) -> float:
    """Scale gradients in place so the global L2 norm is at most max_norm."""
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class TrainState:
    lr: float
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    best_dev_f1: float = -1.0
    validations_since_improvement: int = 0
    validations_since_lr_drop: int = 0


def adam_update(params, grads, state: TrainState, beta1=0.9, beta2=0.999, eps=1e-8):
    state.step += 1
    t = state.step
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m = state.m[name]
        v = state.v[name]
        m += (1.0 - beta1) * (g - m)
        v += (1.0 - beta2) * (g * g - v)
        mhat = m / (1.0 - beta1**t)
        vhat = v / (1.0 - beta2**t)
        params[name] -= state.lr * mhat / (np.sqrt(vhat) + eps)


def micro_f1_at_threshold(probs: np.ndarray, golds: np.ndarray, threshold: float = 0.5) -> float:
    pred = probs >= threshold
    gold = golds >= 0.5
    tp = int(np.sum(pred & gold))
    fp = int(np.sum(pred & ~gold))
    fn = int(np.sum(~pred & gold))
    if tp + fp == 0 or tp + fn == 0 or tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def evaluate_probs(items, params, config, batch_size: int = 64):
    """Forward pass with frozen parameters over prepared items; returns
    stacked (probs, golds) arrays over all targets in order."""
    probs_out, golds_out = [], []
    for start in range(0, len(items), batch_size):
        batch = items[start : start + batch_size]
        if not any(targets for _, targets in batch):
            continue
        batch = [(a, t) for a, t in batch if t]
        _, probs, _ = forward_backward(batch, params, config, compute_grads=False)
        probs_out.append(probs)
        golds_out.append(np.stack([y for _, targets in batch for (_, _, y) in targets]))
    if not probs_out:
        n = config.n_labels
        return np.zeros((0, n)), np.zeros((0, n))
    return np.concatenate(probs_out), np.concatenate(golds_out)


def train_probe(
    train_items,
    dev_items,
    config: ProbeConfig,
    seed: int,
    lr: float = 1e-4,
    batch_size: int = 32,
    eval_interval: int = 1000,
    lr_patience: int = 5,
    stop_patience: int = 20,
    clip_norm: float = 5.0,
    max_steps: int | None = None,
):
    """Adam training loop with validation-driven LR halving and early stop.

    Items are (acts, targets) sentence tuples as taken by forward_backward.
    Validates dev micro-F1 (threshold 0.5) every eval_interval steps; "no
    improvement" means not strictly greater than the best so far. Returns
    the parameters at the best validation score plus the training log.
    """
    if not train_items:
        raise ValueError("empty train split")
    train_items = [item for item in train_items if item[1]]
    params = init_params(config, seed)
    state = TrainState(lr=lr)
    rng = np.random.default_rng(seed)
    best_params = copy.deepcopy(params)
    log = []
    step = 0
    last_loss = float("nan")
    stop = False

    def validate():
        nonlocal best_params, stop
        probs, golds = evaluate_probs(dev_items, params, config)
        f1 = micro_f1_at_threshold(probs, golds)
        log.append({"step": step, "loss": last_loss, "dev_f1": f1, "lr": state.lr})
        if f1 > state.best_dev_f1:
            state.best_dev_f1 = f1
            best_params = copy.deepcopy(params)
            state.validations_since_improvement = 0
            state.validations_since_lr_drop = 0
        else:
            state.validations_since_improvement += 1
            state.validations_since_lr_drop += 1
            if state.validations_since_lr_drop >= lr_patience:
                state.lr /= 2.0
                state.validations_since_lr_drop = 0
            if state.validations_since_improvement >= stop_patience:
                stop = True

    while not stop:
        perm = rng.permutation(len(train_items))
        for start in range(0, len(train_items), batch_size):
            batch = [train_items[i] for i in perm[start : start + batch_size]]
            loss, _, grads = forward_backward(batch, params, config)
            last_loss = loss
            clip_gradients(grads, clip_norm)
            adam_update(params, grads, state)
            step += 1
            if step % eval_interval == 0:
                validate()
            if stop or (max_steps is not None and step >= max_steps):
                stop = True
                break

    if not log or log[-1]["step"] != step:
        validate()
    return best_params, log


def save_checkpoint(path, params: dict) -> None:
    """Named-tensor checkpoint: magic 'EPP1' then, per tensor in sorted
    name order: u32 name length, UTF-8 name, u32 rank, u32 dims, float32
    data. Little-endian."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        for name in sorted(params):
            tensor = np.ascontiguousarray(params[name], dtype="<f4")
            name_bytes = name.encode("utf-8")
            f.write(struct.pack("<I", len(name_bytes)))
            f.write(name_bytes)
            f.write(struct.pack("<I", tensor.ndim))
            for dim in tensor.shape:
                f.write(struct.pack("<I", dim))
            f.write(tensor.tobytes())


def load_checkpoint(path) -> dict:
    params = {}
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        while True:
            raw = f.read(4)
            if not raw:
                return params
            (name_len,) = struct.unpack("<I", raw)
            name = f.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{rank}I", f.read(4 * rank)) if rank else ()
            n_values = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(f.read(4 * n_values), dtype="<f4")
            params[name] = data.reshape(shape).copy()

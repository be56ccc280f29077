"""Per-token representation sources.

Ingests precomputed multi-layer activations from a binary file, or
computes baseline representations in-process: context-independent lookup,
fixed-window CNN, a fixed random-orthonormal bidirectional recurrent
encoder, scalar layer mixing, and layer-0/top concatenation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np


class ActivationFormatError(ValueError):
    pass


ACTIVATION_MAGIC = b"EPA1"


@dataclass
class ActivationSet:
    """Per-sentence dense activations, shape [n_layers, n_tokens, dim].

    Layer 0 is the context-independent (lexical) layer by convention.
    """

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ValueError("activations must be [layer][token][dim]")
        if not np.isfinite(self.data).all():
            raise ValueError("activations contain non-finite values")

    @property
    def n_layers(self) -> int:
        return self.data.shape[0]

    @property
    def n_tokens(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]


@dataclass
class EmbeddingTable:
    """Token -> row lookup with a single shared zero-initialized OOV row."""

    vocab: dict
    matrix: np.ndarray

    @property
    def oov_index(self) -> int:
        return len(self.vocab)

    @classmethod
    def random(cls, tokens, dim: int, seed: int, scale: float = 1.0) -> "EmbeddingTable":
        vocab = {tok: i for i, tok in enumerate(sorted(set(tokens)))}
        rng = np.random.default_rng(seed)
        matrix = rng.normal(0.0, scale, size=(len(vocab) + 1, dim)).astype(np.float32)
        matrix[len(vocab)] = 0.0  # OOV row
        return cls(vocab=vocab, matrix=matrix)

    def lookup(self, token: str) -> np.ndarray:
        return self.matrix[self.vocab.get(token, self.oov_index)]


@dataclass
class MixParameters:
    """Scalar mixing weights: output = gamma * sum softmax(s)_l * h_l."""

    gamma: float
    s: np.ndarray


def lexical_encode(tokens, table: EmbeddingTable) -> ActivationSet:
    rows = np.stack([table.lookup(t) for t in tokens]) if tokens else np.zeros(
        (0, table.matrix.shape[1]), dtype=np.float32
    )
    return ActivationSet(rows[np.newaxis, :, :])


@dataclass
class CnnParameters:
    """Affine map over a +-k token window followed by tanh."""

    k: int
    weight: np.ndarray  # (out_dim, (2k+1)*in_dim)
    bias: np.ndarray  # (out_dim,)

    @classmethod
    def init(cls, k: int, in_dim: int, out_dim: int, rng) -> "CnnParameters":
        fan_in = (2 * k + 1) * in_dim
        bound = 1.0 / np.sqrt(fan_in)
        weight = rng.uniform(-bound, bound, size=(out_dim, fan_in)).astype(np.float32)
        bias = np.zeros(out_dim, dtype=np.float32)
        return cls(k=k, weight=weight, bias=bias)


def cnn_windows(x: np.ndarray, k: int) -> np.ndarray:
    """Stack each position's +-k window (zero-padded) into one row."""
    n, d = x.shape
    padded = np.zeros((n + 2 * k, d), dtype=x.dtype)
    padded[k : k + n] = x
    return np.concatenate([padded[off : off + n] for off in range(2 * k + 1)], axis=1)


def cnn_encode(acts: ActivationSet, params: CnnParameters) -> ActivationSet:
    """Width-(2k+1) convolution over layer 0; out-of-range inputs are zero."""
    x = acts.data[0]
    win = cnn_windows(x, params.k)
    out = np.tanh(win @ params.weight.T + params.bias)
    return ActivationSet(out[np.newaxis].astype(np.float32))


def orthonormalize(mat: np.ndarray) -> np.ndarray:
    """Orthonormalize along the smaller dimension (rows or columns); square
    matrices become fully orthonormal. Sign-fixed for determinism."""
    rows, cols = mat.shape
    if rows <= cols:
        q, r = np.linalg.qr(mat.T)
        q = q * np.sign(np.diag(r))
        return q.T
    q, r = np.linalg.qr(mat)
    return q * np.sign(np.diag(r))


def _ortho_gates(rng, state_dim: int, in_dim: int):
    """Four gate matrices (input, forget, cell, output), each independently
    orthonormalized, for inputs and recurrent state."""
    wx = [orthonormalize(rng.normal(size=(state_dim, in_dim))) for _ in range(4)]
    wh = [orthonormalize(rng.normal(size=(state_dim, state_dim))) for _ in range(4)]
    return wx, wh


def lstm_direction_forward(xs: np.ndarray, wx, wh) -> np.ndarray:
    """Standard LSTM cell equations over a sequence; zero initial state."""
    n = xs.shape[0]
    state_dim = wx[0].shape[0]
    h = np.zeros(state_dim)
    c = np.zeros(state_dim)
    out = np.zeros((n, state_dim))
    for t in range(n):
        x = xs[t]
        i = _sigmoid(wx[0] @ x + wh[0] @ h)
        f = _sigmoid(wx[1] @ x + wh[1] @ h)
        g = np.tanh(wx[2] @ x + wh[2] @ h)
        o = _sigmoid(wx[3] @ x + wh[3] @ h)
        c = f * c + i * g
        h = o * np.tanh(c)
        out[t] = h
    return out


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def build_orthonormal_weights(seed: int, in_dim: int, state_dim: int, n_layers: int):
    """All fixed weights of the orthonormal recurrent encoder, seeded."""
    rng = np.random.default_rng(seed)
    proj = None
    if in_dim != 2 * state_dim:
        proj = orthonormalize(rng.normal(size=(2 * state_dim, in_dim)))
    layers = []
    layer_in = 2 * state_dim
    for _ in range(n_layers):
        fwd = _ortho_gates(rng, state_dim, layer_in)
        bwd = _ortho_gates(rng, state_dim, layer_in)
        layers.append((fwd, bwd))
        layer_in = 2 * state_dim
    return proj, layers


def orthonormal_recurrent_encode(
    acts: ActivationSet, seed: int, layers: int = 2, state_dim: int = 64
) -> ActivationSet:
    """Fixed (never trained) 2-layer bidirectional LSTM with every weight
    matrix drawn seeded-Gaussian then orthonormalized.

    Output layer 0 is the lexical input (orthonormally projected when its
    width differs from 2*state_dim so all layers share one width); each
    recurrent layer contributes concatenated forward/backward states.
    """
    if state_dim <= 0:
        raise ValueError("state_dim must be positive")
    x = acts.data[0].astype(np.float64)
    proj, layer_weights = build_orthonormal_weights(seed, x.shape[1], state_dim, layers)
    if proj is not None:
        x = x @ proj.T
    out_layers = [x]
    cur = x
    for fwd, bwd in layer_weights:
        fwd_out = lstm_direction_forward(cur, *fwd)
        bwd_out = lstm_direction_forward(cur[::-1], *bwd)[::-1]
        cur = np.concatenate([fwd_out, bwd_out], axis=1)
        out_layers.append(cur)
    return ActivationSet(np.stack(out_layers).astype(np.float32))


def softmax(x: np.ndarray) -> np.ndarray:
    z = x - np.max(x)
    e = np.exp(z)
    return e / e.sum()


def scalar_mix(acts: ActivationSet, mix: MixParameters) -> np.ndarray:
    """Per-token weighted sum of layers: gamma * sum softmax(s)_l * h_l."""
    if len(mix.s) != acts.n_layers:
        raise ValueError(
            f"mix has {len(mix.s)} scalars for {acts.n_layers} layers"
        )
    w = softmax(np.asarray(mix.s, dtype=np.float64))
    mixed = np.tensordot(w, acts.data.astype(np.float64), axes=(0, 0))
    return (mix.gamma * mixed).astype(np.float32)


def concat_encode(acts: ActivationSet) -> np.ndarray:
    """Concatenate layer-0 (lexical) with top-layer activations."""
    if acts.n_layers < 2:
        raise ValueError("concat_encode needs at least 2 layers")
    return np.concatenate([acts.data[0], acts.data[-1]], axis=1)


def write_activation_file(path, activation_sets, indices=None) -> None:
    """Binary activation file: magic 'EPA1', u32 n_layers, u32 dim, then per
    sentence u32 sentence_index, u32 n_tokens, float32 data in
    [layer][token][dim] order. Little-endian throughout."""
    acts = list(activation_sets)
    if indices is None:
        indices = range(len(acts))
    with open(path, "wb") as f:
        f.write(ACTIVATION_MAGIC)
        if acts:
            n_layers, dim = acts[0].n_layers, acts[0].dim
        else:
            n_layers, dim = 1, 1
        f.write(struct.pack("<II", n_layers, dim))
        for idx, a in zip(indices, acts):
            if a.n_layers != n_layers or a.dim != dim:
                raise ActivationFormatError(
                    "all sentences must share n_layers and dim"
                )
            f.write(struct.pack("<II", idx, a.n_tokens))
            f.write(np.ascontiguousarray(a.data, dtype="<f4").tobytes())


def read_activation_file(path):
    """Stream (sentence_index, ActivationSet) records from an EPA1 file."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != ACTIVATION_MAGIC:
            raise ActivationFormatError(f"bad magic {magic!r}")
        header = f.read(8)
        if len(header) != 8:
            raise ActivationFormatError("truncated header")
        n_layers, dim = struct.unpack("<II", header)
        if n_layers == 0 or dim == 0:
            raise ActivationFormatError("header n_layers/dim must be positive")
        while True:
            rec = f.read(8)
            if not rec:
                return
            if len(rec) != 8:
                raise ActivationFormatError("truncated record header")
            idx, n_tokens = struct.unpack("<II", rec)
            n_values = n_layers * n_tokens * dim
            raw = f.read(4 * n_values)
            if len(raw) != 4 * n_values:
                raise ActivationFormatError(f"truncated record for sentence {idx}")
            data = np.frombuffer(raw, dtype="<f4").reshape(n_layers, n_tokens, dim)
            if not np.isfinite(data).all():
                raise ActivationFormatError(f"non-finite values in sentence {idx}")
            yield idx, ActivationSet(data.copy())


def load_activations(path) -> dict:
    """Read a whole EPA1 file into {sentence_index: ActivationSet}."""
    return {idx: a for idx, a in read_activation_file(path)}

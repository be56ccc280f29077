"""Encoder backends.

Every backend exposes: `tokenize(text) -> list[str]`,
`encode(tokens) -> float32 array [n_layers, n_tokens, dim]` with layer 0
the context-independent embedding layer, plus `n_layers`, `dim`,
`max_length`, and `granularity` metadata. Weights are never updated.
"""

from __future__ import annotations

import zlib

import numpy as np


class ModelError(RuntimeError):
    pass


class DebugModel:
    """Deterministic pseudo-random contextual encoder for pipeline tests.

    Layer 0 embeds each token from a hash-seeded Gaussian, so identical
    tokens get identical vectors in any context. Each contextual layer
    applies a fixed seeded linear map to the token and its immediate
    neighbors, so upper layers are genuinely context dependent.
    """

    granularity = "word"

    def __init__(self, dim: int = 32, contextual_layers: int = 3,
                 max_length: int = 64, seed: int = 0):
        self.dim = dim
        self.n_layers = contextual_layers + 1
        self.max_length = max_length
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(3 * dim)
        self._mixers = [
            rng.normal(0.0, scale, size=(dim, 3 * dim)).astype(np.float32)
            for _ in range(contextual_layers)
        ]

    def tokenize(self, text: str) -> list:
        return text.lower().split()

    def _embed(self, token: str) -> np.ndarray:
        seed = zlib.crc32(token.encode("utf-8"))
        return np.random.default_rng(seed).normal(size=self.dim).astype(np.float32)

    def encode(self, tokens) -> np.ndarray:
        n = len(tokens)
        layers = [np.stack([self._embed(t) for t in tokens]) if n else
                  np.zeros((0, self.dim), dtype=np.float32)]
        cur = layers[0]
        for mixer in self._mixers:
            padded = np.zeros((n + 2, self.dim), dtype=np.float32)
            padded[1 : n + 1] = cur
            windows = np.concatenate(
                [padded[0:n], padded[1 : n + 1], padded[2 : n + 2]], axis=1
            )
            cur = np.tanh(windows @ mixer.T)
            layers.append(cur)
        return np.stack(layers)


class HuggingFaceModel:
    """Wraps a transformers checkpoint; inference only, hidden states from
    every layer including the embedding layer."""

    granularity = "subword"

    def __init__(self, name: str, max_length: int = 512):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as e:
            raise ModelError(f"transformers backend unavailable: {e}") from None
        self._torch = torch
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(name)
            self._model = AutoModel.from_pretrained(name, output_hidden_states=True)
        except Exception as e:
            raise ModelError(f"cannot load model {name!r}: {e}") from None
        self._model.eval()
        self.max_length = min(max_length, getattr(self._tokenizer, "model_max_length",
                                                  max_length))
        self.dim = int(self._model.config.hidden_size)
        self.n_layers = int(self._model.config.num_hidden_layers) + 1

    def tokenize(self, text: str) -> list:
        return self._tokenizer.tokenize(text)

    def encode(self, tokens) -> np.ndarray:
        ids = self._tokenizer.convert_tokens_to_ids(tokens)
        with self._torch.no_grad():
            out = self._model(self._torch.tensor([ids]))
        layers = [h[0].numpy().astype(np.float32) for h in out.hidden_states]
        return np.stack(layers)


def get_model(name: str, **kwargs):
    if name == "debug":
        return DebugModel(**kwargs)
    return HuggingFaceModel(name, **kwargs)

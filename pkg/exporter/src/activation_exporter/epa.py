"""Writer for the EPA1 binary activation format.

Layout: magic 'EPA1', u32 n_layers, u32 dim, then per sentence a u32
sentence index, u32 n_tokens, and float32 data in [layer][token][dim]
order. Little-endian throughout.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"EPA1"


class Epa1Writer:
    """Streams records to disk in strict sentence order."""

    def __init__(self, path, n_layers: int, dim: int):
        if n_layers <= 0 or dim <= 0:
            raise ValueError("n_layers and dim must be positive")
        self.n_layers = n_layers
        self.dim = dim
        self._f = open(path, "wb")
        self._f.write(MAGIC)
        self._f.write(struct.pack("<II", n_layers, dim))

    def write(self, sentence_index: int, data: np.ndarray) -> None:
        data = np.asarray(data, dtype="<f4")
        if data.shape[0] != self.n_layers or data.shape[2] != self.dim:
            raise ValueError(
                f"record shape {data.shape} does not match header "
                f"({self.n_layers} layers, dim {self.dim})"
            )
        if not np.isfinite(data).all():
            raise ValueError(f"non-finite activations for sentence {sentence_index}")
        self._f.write(struct.pack("<II", sentence_index, data.shape[1]))
        self._f.write(np.ascontiguousarray(data).tobytes())

    def close(self) -> None:
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

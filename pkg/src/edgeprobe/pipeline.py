"""Glue between datasets, activation sources, and the probe.

Builds per-token representations for each experiment encoder mode and
packs (activations, targets) items the training loop consumes.
"""

from __future__ import annotations

import numpy as np

from .core import LabelVocabulary, binarize
from .encoders import (
    ActivationSet,
    EmbeddingTable,
    concat_encode,
    lexical_encode,
    orthonormal_recurrent_encode,
)

ENCODER_MODES = ("lexical", "cnn1", "cnn2", "ortho", "mix", "cat", "direct")


def prepare_items(examples, acts_by_index, vocab: LabelVocabulary):
    """Per-sentence (acts, targets) items; gold labels absent from the
    vocabulary are excluded from the multi-hot vector (they are flagged
    and scored as always-wrong by the evaluator)."""
    items = []
    for i, ex in enumerate(examples):
        acts = acts_by_index[i]
        data = acts.data if isinstance(acts, ActivationSet) else np.asarray(acts)
        if data.shape[1] != len(ex.tokens):
            raise ValueError(
                f"sentence {i}: {data.shape[1]} activation rows for "
                f"{len(ex.tokens)} tokens"
            )
        targets = []
        for t in ex.targets:
            y = np.zeros(len(vocab), dtype=np.float32)
            for label in t.labels:
                if label in vocab:
                    y[vocab.index(label)] = 1.0
            targets.append((t.span1, t.span2, y))
        items.append((data, targets))
    return items


def unpredictable_label_counts(examples, vocab: LabelVocabulary) -> dict:
    """Occurrence counts of gold labels outside the train vocabulary."""
    out = {}
    for ex in examples:
        for t in ex.targets:
            for label in t.labels:
                if label not in vocab:
                    out[label] = out.get(label, 0) + 1
    return out


def build_mode_activations(
    examples,
    mode: str,
    acts_by_index=None,
    table: EmbeddingTable | None = None,
    ortho_seed: int = 0,
    ortho_state_dim: int = 64,
):
    """Transform raw activations (file-loaded or embedding-table lexical)
    into the per-sentence tensors a given encoder mode feeds the probe.

    Returns (acts_by_index, probe_mode, input_dim, n_layers) where
    probe_mode is the probe-internal mode (direct | mix | cnn).
    """
    if mode not in ENCODER_MODES:
        raise ValueError(f"unknown encoder mode {mode!r}")

    def base(i, ex) -> ActivationSet:
        if acts_by_index is not None:
            if i not in acts_by_index:
                raise ValueError(f"no activations for sentence {i}")
            return acts_by_index[i]
        return lexical_encode(ex.tokens, table)

    out = {}
    probe_mode, n_layers = "direct", 1
    input_dim = None
    for i, ex in enumerate(examples):
        acts = base(i, ex)
        if mode in ("lexical", "cnn1", "cnn2"):
            data = acts.data[:1]
        elif mode == "ortho":
            data = orthonormal_recurrent_encode(
                acts, seed=ortho_seed, state_dim=ortho_state_dim
            ).data
        elif mode == "mix":
            data = acts.data
        elif mode == "cat":
            data = concat_encode(acts)[np.newaxis]
        else:  # direct: top layer
            data = acts.data[-1:]
        out[i] = data
        input_dim = data.shape[2]
        n_layers = data.shape[0]
    if mode in ("ortho", "mix"):
        probe_mode = "mix"
    elif mode in ("cnn1", "cnn2"):
        probe_mode = "cnn"
    return out, probe_mode, input_dim, n_layers

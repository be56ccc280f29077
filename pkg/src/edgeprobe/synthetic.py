"""Synthetic desk-scale probing tasks with a known labeling rule.

Each token type carries a fixed random embedding. In the context-dependent
variant a position's label is the class of its left neighbor, so a
context-blind probe is at chance; in the context-independent variant the
label is the class of the token itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EdgeExample, LabelVocabulary, Span, Target
from .encoders import ActivationSet


@dataclass
class SyntheticTask:
    train: list
    dev: list
    train_acts: dict
    dev_acts: dict
    vocab: LabelVocabulary
    embeddings: np.ndarray


def make_synthetic_task(
    n_train: int = 300,
    n_dev: int = 100,
    vocab_size: int = 20,
    dim: int = 16,
    n_classes: int = 4,
    min_len: int = 6,
    max_len: int = 12,
    seed: int = 0,
    context_dependent: bool = True,
) -> SyntheticTask:
    rng = np.random.default_rng(seed)
    embeddings = rng.normal(size=(vocab_size, dim)).astype(np.float32)

    def token_class(token_id: int) -> int:
        return token_id % n_classes

    def generate(n_sentences):
        examples, acts = [], {}
        for i in range(n_sentences):
            length = int(rng.integers(min_len, max_len + 1))
            ids = rng.integers(0, vocab_size, size=length)
            tokens = [f"t{j}" for j in ids]
            targets = []
            if context_dependent:
                for pos in range(1, length):
                    label = f"c{token_class(int(ids[pos - 1]))}"
                    targets.append(Target(Span(pos, pos + 1), None, frozenset([label])))
            else:
                for pos in range(length):
                    label = f"c{token_class(int(ids[pos]))}"
                    targets.append(Target(Span(pos, pos + 1), None, frozenset([label])))
            examples.append(EdgeExample.make(" ".join(tokens), tokens, targets))
            acts[i] = ActivationSet(embeddings[ids][np.newaxis])
        return examples, acts

    train, train_acts = generate(n_train)
    dev, dev_acts = generate(n_dev)
    vocab = LabelVocabulary([f"c{c}" for c in range(n_classes)])
    return SyntheticTask(train, dev, train_acts, dev_acts, vocab, embeddings)

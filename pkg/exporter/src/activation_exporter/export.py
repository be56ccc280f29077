"""Export jobs: run a model over JSONL sentences, write EPA1 activations
and a parallel token file."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .epa import Epa1Writer


@dataclass
class ExportJob:
    model: object
    input_jsonl: str
    output_activations: str
    output_tokens: str
    layers: str = "all"  # all | top | range:<lo>:<hi>
    batch_size: int = 8

    def __post_init__(self):
        if not str(self.layers).strip():
            raise ValueError("layer selection must be nonempty")


def _read_sentences(path) -> list:
    """Sentence texts from edge-probing JSONL (space-joined tokens win over
    raw text so the model sees exactly the annotated tokens)."""
    texts = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "tokens" in obj:
                texts.append(" ".join(obj["tokens"]))
            else:
                texts.append(obj["text"])
    return texts


def _layer_indices(selection: str, n_layers: int) -> list:
    """Resolve a layer selection against a model's layer count. "top"
    keeps the embedding layer plus the top layer, matching the `cat`
    representation recipe."""
    if selection == "all":
        return list(range(n_layers))
    if selection == "top":
        if n_layers == 1:
            return [0]
        return [0, n_layers - 1]
    if selection.startswith("range:"):
        parts = selection.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad layer range {selection!r}")
        lo, hi = int(parts[1]), int(parts[2])
        if not (0 <= lo < hi <= n_layers):
            raise ValueError(f"layer range [{lo},{hi}) outside 0..{n_layers}")
        return list(range(lo, hi))
    raise ValueError(f"unknown layer selection {selection!r}")


def _run(job: ExportJob, layer_idx) -> dict:
    model = job.model
    texts = _read_sentences(job.input_jsonl)
    skipped = []
    with Epa1Writer(job.output_activations, n_layers=len(layer_idx),
                    dim=model.dim) as writer, \
            open(job.output_tokens, "w", encoding="utf-8") as tok_f:
        for idx, text in enumerate(texts):
            tokens = model.tokenize(text)
            if len(tokens) > model.max_length:
                skipped.append(idx)
                continue
            acts = model.encode(tokens)
            writer.write(idx, acts[layer_idx])
            tok_f.write(json.dumps(
                {"index": idx, "tokens": tokens,
                 "granularity": model.granularity}) + "\n")
    return {"sentences": len(texts), "exported": len(texts) - len(skipped),
            "skipped": skipped, "n_layers": len(layer_idx), "dim": model.dim}


def export(job: ExportJob) -> dict:
    """Write one activation record and one token line per input sentence;
    sentence_index equals the JSONL line number. Returns a summary report
    including any skipped over-length sentences."""
    layer_idx = _layer_indices(job.layers, job.model.n_layers)
    return _run(job, layer_idx)


def export_lexical(job: ExportJob) -> dict:
    """Layer-0 only: the model's context-independent embeddings."""
    return _run(job, [0])

"""Edge-probing toolkit: uniform span-pair datasets, tokenization-change
span projection, a fixed-architecture probing classifier with
from-scratch gradients, and stratified micro-F1 evaluation."""

from .core import (
    EdgeExample,
    LabelVocabulary,
    Span,
    Target,
    TaskDataset,
    binarize,
    read_jsonl,
    validate,
    write_jsonl,
)

__all__ = [
    "EdgeExample",
    "LabelVocabulary",
    "Span",
    "Target",
    "TaskDataset",
    "binarize",
    "read_jsonl",
    "validate",
    "write_jsonl",
]

__version__ = "0.1.0"

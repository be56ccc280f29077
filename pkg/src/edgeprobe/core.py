"""Canonical edge-probing data model and its JSONL serialization.

A sentence is a token list; each annotation is a span (or span pair)
carrying a set of labels. All other modules produce or consume these types.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

JSONL_VERSION = 1


class UnknownLabel(KeyError):
    """A label is missing from the vocabulary."""

    def __init__(self, label: str):
        super().__init__(label)
        self.label = label

    def __str__(self) -> str:
        return f"unknown label: {self.label!r}"


class JsonlError(ValueError):
    """Malformed JSONL input; carries the 1-based line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class Span:
    """End-exclusive token interval [start, end)."""

    start: int
    end: int

    def width(self) -> int:
        return self.end - self.start

    def contains(self, other: "Span") -> bool:
        return self.start <= other.start and other.end <= self.end

    def to_list(self) -> list:
        return [self.start, self.end]


@dataclass(frozen=True)
class Target:
    """One labeled edge: span1, optional span2, and a label set."""

    span1: Span
    span2: Span | None = None
    labels: frozenset = frozenset()

    @property
    def is_binary(self) -> bool:
        return self.span2 is not None


@dataclass(frozen=True)
class EdgeExample:
    """One sentence with its tokens and annotation targets."""

    text: str
    tokens: tuple
    targets: tuple
    info: dict = field(default_factory=dict)

    @staticmethod
    def make(text, tokens, targets, info=None) -> "EdgeExample":
        return EdgeExample(
            text=text,
            tokens=tuple(tokens),
            targets=tuple(targets),
            info=dict(info or {}),
        )


class LabelVocabulary:
    """Ordered label set with a label -> position index.

    Order is the lexicographic sort of the labels seen in the training
    split, so vocabulary construction is deterministic under any
    permutation of the training examples.
    """

    def __init__(self, labels):
        self.labels = sorted(set(labels))
        self._index = {label: i for i, label in enumerate(self.labels)}

    @classmethod
    def from_examples(cls, examples) -> "LabelVocabulary":
        labels = set()
        for ex in examples:
            for t in ex.targets:
                labels.update(t.labels)
        return cls(labels)

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise UnknownLabel(label) from None

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelVocabulary) and self.labels == other.labels


@dataclass
class TaskDataset:
    """Train/dev/test splits plus the vocabulary built from train."""

    name: str
    train: list
    dev: list = field(default_factory=list)
    test: list = field(default_factory=list)
    vocab: LabelVocabulary = None

    def __post_init__(self):
        if self.vocab is None:
            self.vocab = LabelVocabulary.from_examples(self.train)

    def split(self, name: str) -> list:
        return {"train": self.train, "dev": self.dev, "test": self.test}[name]

    def unseen_labels(self) -> dict:
        """Labels in dev/test absent from the train vocabulary.

        These are flagged (not dropped); the fixed-size classifier head can
        never predict them, so they are scored as always-wrong.
        """
        out = {}
        for split_name in ("dev", "test"):
            missing = set()
            for ex in self.split(split_name):
                for t in ex.targets:
                    missing.update(l for l in t.labels if l not in self.vocab)
            if missing:
                out[split_name] = sorted(missing)
        return out


def binarize(target: Target, vocab: LabelVocabulary) -> np.ndarray:
    """Multi-hot vector in {0,1}^|vocab| for the target's label set."""
    vec = np.zeros(len(vocab), dtype=np.float32)
    for label in target.labels:
        vec[vocab.index(label)] = 1.0
    return vec


def _target_to_dict(t: Target) -> dict:
    d = {"span1": t.span1.to_list()}
    if t.span2 is not None:
        d["span2"] = t.span2.to_list()
    d["labels"] = sorted(t.labels)
    return d


def example_to_dict(ex: EdgeExample) -> dict:
    d = {
        "version": JSONL_VERSION,
        "text": ex.text,
        "tokens": list(ex.tokens),
        "targets": [_target_to_dict(t) for t in ex.targets],
    }
    if ex.info:
        d["info"] = ex.info
    return d


def _parse_span(obj, what: str, line_number: int) -> Span:
    if (
        not isinstance(obj, list)
        or len(obj) != 2
        or not all(isinstance(v, int) for v in obj)
    ):
        raise JsonlError(f"{what} must be a 2-element integer array", line_number)
    return Span(obj[0], obj[1])


def example_from_dict(d: dict, line_number: int = 0) -> EdgeExample:
    if d.get("version", JSONL_VERSION) != JSONL_VERSION:
        raise JsonlError(f"unsupported version {d['version']}", line_number)
    tokens = d.get("tokens")
    if not isinstance(tokens, list):
        raise JsonlError("missing or non-list 'tokens'", line_number)
    targets = []
    for t in d.get("targets", []):
        span1 = _parse_span(t.get("span1"), "span1", line_number)
        span2 = _parse_span(t["span2"], "span2", line_number) if "span2" in t else None
        labels = t.get("labels", [])
        targets.append(Target(span1=span1, span2=span2, labels=frozenset(labels)))
    ex = EdgeExample.make(
        text=d.get("text", " ".join(tokens)),
        tokens=tokens,
        targets=targets,
        info=d.get("info"),
    )
    bad = example_violations(ex)
    if bad:
        raise JsonlError("; ".join(bad), line_number)
    return ex


def read_jsonl(path) -> list:
    """Read one split: one EdgeExample per line. Validates spans on read."""
    examples = []
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise JsonlError(f"malformed JSON ({e.msg})", i) from None
            examples.append(example_from_dict(obj, line_number=i))
    return examples


def write_jsonl(examples, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(
                json.dumps(example_to_dict(ex), ensure_ascii=False, sort_keys=False)
            )
            f.write("\n")


def _span_violations(span: Span, n_tokens: int, where: str) -> list:
    out = []
    if span.start < 0:
        out.append(f"{where}: start < 0")
    if span.start >= span.end:
        out.append(f"{where}: start < end required")
    if span.end > n_tokens:
        out.append(f"{where}: end {span.end} exceeds {n_tokens} tokens")
    return out


def example_violations(ex: EdgeExample, index=None) -> list:
    tag = f"example {index}" if index is not None else "example"
    out = []
    n = len(ex.tokens)
    for j, t in enumerate(ex.targets):
        where = f"{tag} target {j}"
        out.extend(_span_violations(t.span1, n, where + " span1"))
        if t.span2 is not None:
            out.extend(_span_violations(t.span2, n, where + " span2"))
        for label in t.labels:
            if not label:
                out.append(f"{where}: empty label string")
    return out


def validate(dataset) -> list:
    """Report (never raise) all invariant violations in a dataset or split."""
    if isinstance(dataset, TaskDataset):
        out = []
        for split_name in ("train", "dev", "test"):
            for i, ex in enumerate(dataset.split(split_name)):
                out.extend(example_violations(ex, index=f"{split_name}[{i}]"))
        return out
    return [v for i, ex in enumerate(dataset) for v in example_violations(ex, index=i)]

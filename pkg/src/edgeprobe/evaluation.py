"""Micro-averaged binary F1 with per-label and per-distance stratification
and normal-approximation confidence intervals."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Span, UnknownLabel

DEFAULT_THRESHOLD = 0.5

# Numbered arguments vs modifier roles; references/continuations (R-*, C-*)
# belong to neither subset.
CORE_SRL_ROLES = tuple(f"ARG{i}" for i in range(6))


@dataclass
class ConfusionCounts:
    """Per-label TP/FP/FN (TN implicit) plus the total target count."""

    labels: list
    tp: dict = field(default_factory=dict)
    fp: dict = field(default_factory=dict)
    fn: dict = field(default_factory=dict)
    n: int = 0

    def __post_init__(self):
        for label in self.labels:
            self.tp.setdefault(label, 0)
            self.fp.setdefault(label, 0)
            self.fn.setdefault(label, 0)

    def add_unpredictable_fn(self, label: str, count: int = 1) -> None:
        """Gold labels outside the vocabulary are always-wrong: pure FN."""
        self.tp.setdefault(label, 0)
        self.fp.setdefault(label, 0)
        self.fn[label] = self.fn.get(label, 0) + count

    def merge(self, other: "ConfusionCounts") -> None:
        for label in other.tp:
            self.tp[label] = self.tp.get(label, 0) + other.tp[label]
            self.fp[label] = self.fp.get(label, 0) + other.fp[label]
            self.fn[label] = self.fn.get(label, 0) + other.fn[label]
        self.n += other.n


def count(predictions, golds, labels, threshold: float = DEFAULT_THRESHOLD) -> ConfusionCounts:
    """Accumulate confusion counts over targets; a prediction is positive
    iff its probability is >= threshold."""
    predictions = np.atleast_2d(np.asarray(predictions))
    golds = np.atleast_2d(np.asarray(golds))
    if predictions.shape != golds.shape:
        raise ValueError(
            f"prediction shape {predictions.shape} != gold shape {golds.shape}"
        )
    if predictions.shape[1] != len(labels):
        raise ValueError("label list does not match vector width")
    pred = predictions >= threshold
    gold = golds >= 0.5
    counts = ConfusionCounts(labels=list(labels), n=predictions.shape[0])
    tp = (pred & gold).sum(axis=0)
    fp = (pred & ~gold).sum(axis=0)
    fn = (~pred & gold).sum(axis=0)
    for i, label in enumerate(labels):
        counts.tp[label] = int(tp[i])
        counts.fp[label] = int(fp[i])
        counts.fn[label] = int(fn[i])
    return counts


def micro_f1(counts: ConfusionCounts, label_subset=None) -> float:
    """F1 from confusion counts summed over the subset (or all) labels.
    Returns 0 when a denominator vanishes."""
    if label_subset is None:
        subset = list(counts.tp)
    else:
        subset = list(label_subset)
        for label in subset:
            if label not in counts.tp:
                raise UnknownLabel(label)
    tp = sum(counts.tp[l] for l in subset)
    fp = sum(counts.fp[l] for l in subset)
    fn = sum(counts.fn[l] for l in subset)
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def label_f1(counts: ConfusionCounts, label: str) -> float:
    return micro_f1(counts, [label])


def normal_ci(f1: float, n: int):
    """95% normal-approximation interval, clipped to [0, 1]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    half = 1.96 * math.sqrt(f1 * (1.0 - f1) / n)
    return max(0.0, f1 - half), min(1.0, f1 + half)


def span_distance(span1: Span, span2: Span) -> int:
    """Tokens separating two spans: later start minus earlier end, clamped
    at 0 for adjacent or overlapping spans."""
    earlier, later = sorted([span1, span2], key=lambda s: (s.start, s.end))
    return max(0, later.start - earlier.end)


@dataclass
class EvalReport:
    f1: float
    n: int
    ci: tuple
    threshold: float = DEFAULT_THRESHOLD
    per_label: dict = field(default_factory=dict)
    label_slices: dict = field(default_factory=dict)
    distance_buckets: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "f1": self.f1,
            "n": self.n,
            "ci": list(self.ci),
            "threshold": self.threshold,
            "per_label": self.per_label,
            "label_slices": self.label_slices,
            "distance_buckets": self.distance_buckets,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_text(self) -> str:
        lines = [
            f"{'slice':<24} {'F1':>8} {'n':>8} {'95% CI':>18}",
            f"{'overall':<24} {self.f1:>8.4f} {self.n:>8} "
            f"[{self.ci[0]:.4f}, {self.ci[1]:.4f}]",
        ]
        for name, s in self.label_slices.items():
            lines.append(
                f"{name:<24} {s['f1']:>8.4f} {s['n']:>8} "
                f"[{s['ci'][0]:.4f}, {s['ci'][1]:.4f}]"
            )
        for label in sorted(self.per_label):
            s = self.per_label[label]
            lines.append(
                f"{'label ' + label:<24} {s['f1']:>8.4f} {s['n']:>8}"
            )
        for b in self.distance_buckets:
            lines.append(
                f"{'distance ' + str(b['bucket']):<24} {b['f1']:>8.4f} {b['n']:>8} "
                f"[{b['ci'][0]:.4f}, {b['ci'][1]:.4f}]"
            )
        return "\n".join(lines)


def _slice_report(counts: ConfusionCounts, subset=None, n_override=None) -> dict:
    f1 = micro_f1(counts, subset)
    if n_override is not None:
        n = n_override
    else:
        # Slice size: gold occurrences of the subset's labels.
        subset_list = list(counts.tp) if subset is None else list(subset)
        n = sum(counts.tp[l] + counts.fn[l] for l in subset_list)
    n = max(n, 1)
    lo, hi = normal_ci(f1, n)
    return {"f1": f1, "n": n, "ci": [lo, hi]}


def stratify_by_distance(targets, predictions, golds, labels, max_bucket: int = 8,
                         threshold: float = DEFAULT_THRESHOLD):
    """Per-distance-bucket reports over binary-span targets.

    Bucket d holds targets whose spans are separated by exactly d tokens
    (0 = adjacent or overlapping); distances above max_bucket share one
    overflow bucket. Buckets partition the targets.
    """
    predictions = np.atleast_2d(np.asarray(predictions))
    golds = np.atleast_2d(np.asarray(golds))
    assignments = []
    for t in targets:
        if t.span2 is None:
            raise ValueError("distance stratification requires binary-span targets")
        d = span_distance(t.span1, t.span2)
        assignments.append(min(d, max_bucket + 1))
    assignments = np.array(assignments)
    buckets = []
    for b in range(max_bucket + 2):
        idx = np.flatnonzero(assignments == b)
        name = str(b) if b <= max_bucket else f"{max_bucket + 1}+"
        if len(idx) == 0:
            buckets.append({"bucket": name, "f1": 0.0, "n": 0, "ci": [0.0, 0.0]})
            continue
        c = count(predictions[idx], golds[idx], labels, threshold)
        f1 = micro_f1(c)
        lo, hi = normal_ci(f1, len(idx))
        buckets.append({"bucket": name, "f1": f1, "n": int(len(idx)), "ci": [lo, hi]})
    return buckets


def distance_buckets_csv(buckets, path) -> None:
    """One row per bucket (no header): bucket, f1, n, ci_lo, ci_hi."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for b in buckets:
            writer.writerow([b["bucket"], f"{b['f1']:.6f}", b["n"],
                             f"{b['ci'][0]:.6f}", f"{b['ci'][1]:.6f}"])


def build_report(
    predictions,
    golds,
    labels,
    targets=None,
    label_slices=None,
    max_bucket: int = 8,
    threshold: float = DEFAULT_THRESHOLD,
    extra_fn=None,
) -> EvalReport:
    """Full evaluation: overall micro-F1, per-label F1, optional named
    label subsets, and optional distance stratification.

    `extra_fn` maps out-of-vocabulary gold labels to their occurrence
    counts; these score as always-wrong.
    """
    counts = count(predictions, golds, labels, threshold)
    if extra_fn:
        for label, c in extra_fn.items():
            counts.add_unpredictable_fn(label, c)
    overall = _slice_report(counts, n_override=counts.n)
    report = EvalReport(
        f1=overall["f1"],
        n=counts.n,
        ci=tuple(overall["ci"]),
        threshold=threshold,
    )
    for label in counts.tp:
        n_label = counts.tp[label] + counts.fn[label]
        report.per_label[label] = {"f1": label_f1(counts, label), "n": n_label}
    for name, subset in (label_slices or {}).items():
        subset = [l for l in subset if l in counts.tp]
        report.label_slices[name] = _slice_report(counts, subset)
    if targets is not None and all(t.span2 is not None for t in targets):
        report.distance_buckets = stratify_by_distance(
            targets, predictions, golds, labels, max_bucket, threshold
        )
    return report


def multi_run_average(f1_values) -> dict:
    """Mean and min/max spread over runs with distinct seeds."""
    values = [float(v) for v in f1_values]
    if not values:
        raise ValueError("no runs to average")
    return {
        "mean": sum(values) / len(values),
        "min": min(values),
        "max": max(values),
        "spread": max(values) - min(values),
        "k": len(values),
    }

"""Cast source annotation formats into edge-probing datasets.

Supported inputs: CoNLL-U dependency treebanks, bracketed constituency
trees (yielding POS and constituent datasets), coreference mention
clusters (with all-pairs negative generation), generic span TSV, and
relation TSV with inline entity markers.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

from .core import EdgeExample, Span, Target


class ConversionError(ValueError):
    pass


@dataclass
class MentionCluster:
    """Mentions of one sentence/window grouped into coreference clusters.
    Singletons are clusters of size one."""

    doc_id: str
    clusters: list = field(default_factory=list)


def from_conllu(path, keep_root: bool = False) -> list:
    """Dependency labeling: one target per non-root token, span1 the token,
    span2 its head, label the dependency relation.

    Root-headed tokens are dropped unless keep_root, in which case they get
    span2 = span1 with label "root". Multiword ranges and empty nodes are
    skipped, as standard for CoNLL-U.
    """
    examples = []
    with open(path, encoding="utf-8") as f:
        sentences = _conllu_sentences(f)
    for sent_no, (comments, rows) in enumerate(sentences, start=1):
        tokens = []
        heads = []
        deprels = []
        for cols in rows:
            if len(cols) != 10:
                raise ConversionError(
                    f"sentence {sent_no}: expected 10 columns, got {len(cols)}"
                )
            tok_id = cols[0]
            if "-" in tok_id or "." in tok_id:
                continue  # multiword token range / empty node
            tokens.append(cols[1])
            try:
                heads.append(int(cols[6]))
            except ValueError:
                raise ConversionError(
                    f"sentence {sent_no}: non-integer head {cols[6]!r}"
                ) from None
            deprels.append(cols[7])
        n = len(tokens)
        for h in heads:
            if h < 0 or h > n:
                raise ConversionError(f"sentence {sent_no}: head {h} out of range")
        _check_acyclic(heads, sent_no)
        targets = []
        for i, (head, rel) in enumerate(zip(heads, deprels)):
            if head == 0:
                if keep_root:
                    targets.append(
                        Target(Span(i, i + 1), Span(i, i + 1), frozenset(["root"]))
                    )
                continue
            targets.append(
                Target(Span(i, i + 1), Span(head - 1, head), frozenset([rel]))
            )
        text = None
        for c in comments:
            if c.startswith("# text ="):
                text = c.split("=", 1)[1].strip()
        examples.append(
            EdgeExample.make(text or " ".join(tokens), tokens, targets,
                             {"source": "conllu", "sentence": sent_no})
        )
    return examples


def _conllu_sentences(lines):
    sentences = []
    comments, rows = [], []
    for line in lines:
        line = line.rstrip("\n")
        if not line.strip():
            if rows:
                sentences.append((comments, rows))
            comments, rows = [], []
            continue
        if line.startswith("#"):
            comments.append(line)
        else:
            rows.append(line.split("\t"))
    if rows:
        sentences.append((comments, rows))
    return sentences


def _check_acyclic(heads, sent_no):
    for start in range(len(heads)):
        seen = set()
        node = start + 1
        while node != 0:
            if node in seen:
                raise ConversionError(f"sentence {sent_no}: cyclic heads at token {start}")
            seen.add(node)
            node = heads[node - 1]


def _strip_label(label: str) -> str:
    """Drop function-tag suffixes and trace indices (NP-SBJ-1 -> NP), but
    keep labels that are themselves dashed tokens like -LRB-."""
    if label.startswith("-"):
        return label
    return label.split("=")[0].split("-")[0]


def _parse_sexpr(text: str):
    """Parse one bracketed tree into (label, children-or-token) tuples."""
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    pos = 0

    def parse():
        nonlocal pos
        if tokens[pos] != "(":
            raise ConversionError(f"expected '(' at item {pos}")
        pos += 1
        label = tokens[pos]
        pos += 1
        children = []
        terminal = None
        while pos < len(tokens) and tokens[pos] != ")":
            if tokens[pos] == "(":
                children.append(parse())
            else:
                terminal = tokens[pos]
                pos += 1
        if pos >= len(tokens):
            raise ConversionError("unbalanced brackets")
        pos += 1  # consume ')'
        return (label, children if children else terminal)

    tree = parse()
    if pos != len(tokens):
        raise ConversionError("trailing content after tree")
    return tree


def _tree_targets(tree, offset: int, tokens, pos_targets, constit_targets):
    """Walk the tree collecting tokens, preterminal POS targets, and
    nonterminal constituent targets. Returns the end token offset."""
    label, body = tree
    if isinstance(body, str):  # preterminal
        tokens.append(body)
        pos_targets.append(Target(Span(offset, offset + 1), None,
                                  frozenset([_strip_label(label)])))
        return offset + 1
    end = offset
    for child in body:
        end = _tree_targets(child, end, tokens, pos_targets, constit_targets)
    constit_targets.append(Target(Span(offset, end), None,
                                  frozenset([_strip_label(label)])))
    return end


def from_bracketed(path):
    """Constituency trees, one per line. Returns (pos_examples,
    constituent_examples) over the same sentences."""
    pos_examples, constit_examples = [], []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                tree = _parse_sexpr(line)
            except ConversionError as e:
                raise ConversionError(f"line {line_no}: {e}") from None
            tokens, pos_targets, constit_targets = [], [], []
            _tree_targets(tree, 0, tokens, pos_targets, constit_targets)
            text = " ".join(tokens)
            info = {"source": "bracketed", "line": line_no}
            pos_examples.append(EdgeExample.make(text, tokens, pos_targets, info))
            constit_examples.append(
                EdgeExample.make(text, tokens, constit_targets, info)
            )
    return pos_examples, constit_examples


def coref_pairs(clusters: MentionCluster) -> list:
    """All unordered mention pairs: within-cluster pairs labeled "1",
    cross-cluster (and vs-singleton) pairs labeled "0". Pairs are ordered
    canonically by (start, end); duplicate mentions are deduplicated."""
    mention_cluster = {}
    for c_idx, cluster in enumerate(clusters.clusters):
        for span in cluster:
            mention_cluster.setdefault((span.start, span.end), c_idx)
    mentions = sorted(mention_cluster)
    targets = []
    for (m1, m2) in itertools.combinations(mentions, 2):
        label = "1" if mention_cluster[m1] == mention_cluster[m2] else "0"
        targets.append(
            Target(Span(*m1), Span(*m2), frozenset([label]))
        )
    return targets


def from_cluster_jsonl(path, window: int | None = None) -> list:
    """Coreference casting from JSONL, one object per sentence/window with
    "tokens" and "clusters" (lists of [start, end] mention spans).

    `window` is accepted for symmetry with document-scoped corpora: records
    are expected to already be windowed; pair generation is within-record.
    """
    examples = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            tokens = obj["tokens"]
            clusters = MentionCluster(
                doc_id=str(obj.get("doc", line_no)),
                clusters=[
                    [Span(s, e) for s, e in cluster] for cluster in obj["clusters"]
                ],
            )
            targets = coref_pairs(clusters)
            examples.append(
                EdgeExample.make(obj.get("text", " ".join(tokens)), tokens, targets,
                                 {"source": "cluster-jsonl", "line": line_no})
            )
    return examples


def _read_sentences(path) -> list:
    """One space-tokenized sentence per line; sentence id = line index."""
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n").split() for line in f if line.strip()]


def from_span_tsv(path, sentences_path, two_span: bool) -> list:
    """Generic span targets (entities, SRL, SPR, Winograd) from TSV rows:
    sentence id, span1 start/end, [span2 start/end,] pipe-separated labels.
    An empty label field yields an explicit empty-label-set target."""
    sentences = _read_sentences(sentences_path)
    per_sentence = {i: [] for i in range(len(sentences))}
    expected = 6 if two_span else 4
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != expected:
                raise ConversionError(
                    f"line {line_no}: expected {expected} columns, got {len(cols)}"
                )
            sent_id = int(cols[0])
            if sent_id not in per_sentence:
                raise ConversionError(f"line {line_no}: unknown sentence id {sent_id}")
            span1 = Span(int(cols[1]), int(cols[2]))
            span2 = Span(int(cols[3]), int(cols[4])) if two_span else None
            label_field = cols[-1].strip()
            labels = frozenset(l for l in label_field.split("|") if l)
            per_sentence[sent_id].append(Target(span1, span2, labels))
    return [
        EdgeExample.make(" ".join(toks), toks, per_sentence[i],
                         {"source": "span-tsv", "sentence": i})
        for i, toks in enumerate(sentences)
    ]


def from_relation_tsv(path) -> list:
    """Relation classification from TSV rows: a space-tokenized sentence
    with inline <e1>..</e1> and <e2>..</e2> entity markers, then the
    directional relation label (passed through verbatim)."""
    examples = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise ConversionError(f"line {line_no}: expected 2 columns")
            raw_tokens, label = cols[0].split(), cols[1].strip()
            tokens = []
            spans = {}
            open_mark = None
            for tok in raw_tokens:
                changed = True
                while changed:
                    changed = False
                    for mark in ("e1", "e2"):
                        if tok.startswith(f"<{mark}>"):
                            open_mark = mark
                            spans[mark] = [len(tokens), None]
                            tok = tok[len(mark) + 2 :]
                            changed = True
                        if tok.endswith(f"</{mark}>"):
                            tok = tok[: -(len(mark) + 3)]
                            spans[mark][1] = len(tokens) + 1
                            open_mark = None
                            changed = True
                if tok:
                    tokens.append(tok)
            if "e1" not in spans or "e2" not in spans or None in spans["e1"] + spans["e2"]:
                raise ConversionError(f"line {line_no}: missing entity markers")
            target = Target(
                Span(*spans["e1"]), Span(*spans["e2"]), frozenset([label])
            )
            examples.append(
                EdgeExample.make(" ".join(tokens), tokens, [target],
                                 {"source": "relation-tsv", "line": line_no})
            )
    return examples


def dataset_stats(examples) -> dict:
    """Exact example/token/target counts and label inventory size."""
    labels = set()
    tokens = 0
    targets = 0
    for ex in examples:
        tokens += len(ex.tokens)
        targets += len(ex.targets)
        for t in ex.targets:
            labels.update(t.labels)
    return {
        "examples": len(examples),
        "tokens": tokens,
        "targets": targets,
        "labels": len(labels),
    }

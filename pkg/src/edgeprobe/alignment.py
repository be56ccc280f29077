"""Span projection across retokenizations via byte-level edit alignment.

Spans annotated against a source tokenization are mapped onto a target
tokenization by composing three boolean adjacency matrices: target tokens
to target bytes, target bytes to source bytes (minimal-edit alignment on
UTF-8 bytes, equal blocks only), and source tokens to source bytes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EdgeExample, Span, Target


class UnalignedSpan(ValueError):
    """The span's content was deleted by retokenization."""


@dataclass(frozen=True)
class AlignmentMatrix:
    """Sparse boolean matrix: a set of true (row, col) cells."""

    rows: int
    cols: int
    cells: frozenset

    def __post_init__(self):
        for r, c in self.cells:
            if not (0 <= r < self.rows and 0 <= c < self.cols):
                raise ValueError(f"cell ({r},{c}) outside {self.rows}x{self.cols}")

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.rows, self.cols), dtype=bool)
        for r, c in self.cells:
            dense[r, c] = True
        return dense

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "AlignmentMatrix":
        rows, cols = dense.shape
        cells = frozenset((int(r), int(c)) for r, c in zip(*np.nonzero(dense)))
        return cls(rows, cols, cells)


# Edit ops for the canonical traceback, in preference order on cost ties.
_MATCH, _SUB, _DEL, _INS = 0, 1, 2, 3


def byte_alignment(source_str: str, target_str: str) -> AlignmentMatrix:
    """Align target bytes (rows) to source bytes (cols).

    Cell (b_t, b_s) is true iff the two bytes lie in a common "equal" block
    of the canonical minimal-edit alignment. Substituted bytes never align.
    Tie-breaking during traceback prefers match > substitute > delete >
    insert, making the result deterministic.
    """
    src = source_str.encode("utf-8")
    tgt = target_str.encode("utf-8")
    n, m = len(src), len(tgt)
    # Suffix distances: D[i, j] = edit distance between src[i:] and tgt[j:],
    # so the canonical script can be walked left-to-right from (0, 0).
    dist = np.zeros((n + 1, m + 1), dtype=np.int32)
    dist[n, :] = np.arange(m, -1, -1)
    dist[:, m] = np.arange(n, -1, -1)
    tgt_arr = np.frombuffer(tgt, dtype=np.uint8)
    src_arr = np.frombuffer(src, dtype=np.uint8)
    js = np.arange(m)
    for i in range(n - 1, -1, -1):
        sub = dist[i + 1, 1:] + (src_arr[i] != tgt_arr)
        best = np.minimum(sub, dist[i + 1, :m] + 1)  # substitute/match, delete
        # Insertions propagate right-to-left: D[i,j] = min_k>=j best[k] + (k-j).
        dist[i, :m] = np.minimum.accumulate((best + js)[::-1])[::-1] - js
        dist[i, m] = n - i
    cells = set()
    i, j = 0, 0
    while i < n or j < m:
        d = dist[i, j]
        if i < n and j < m and src[i] == tgt[j] and d == dist[i + 1, j + 1]:
            cells.add((j, i))
            i, j = i + 1, j + 1
        elif i < n and j < m and d == dist[i + 1, j + 1] + 1:
            i, j = i + 1, j + 1
        elif i < n and d == dist[i + 1, j] + 1:
            i += 1
        else:
            j += 1
    return AlignmentMatrix(rows=m, cols=n, cells=frozenset(cells))


def token_byte_alignment(tokens, joined_str: str) -> AlignmentMatrix:
    """Map each token (row) to its UTF-8 byte range (cols) in the joined
    string. Separator spaces belong to no token."""
    if " ".join(tokens) != joined_str:
        raise ValueError("joined_str must equal tokens joined by single spaces")
    cells = set()
    offset = 0
    for t_idx, tok in enumerate(tokens):
        n_bytes = len(tok.encode("utf-8"))
        for b in range(offset, offset + n_bytes):
            cells.add((t_idx, b))
        offset += n_bytes + 1  # separator space
    total = len(joined_str.encode("utf-8"))
    return AlignmentMatrix(rows=len(tokens), cols=total, cells=frozenset(cells))


def compose(u: AlignmentMatrix, a_bytes: AlignmentMatrix, v: AlignmentMatrix) -> AlignmentMatrix:
    """Boolean product U @ A @ V^T: target tokens x source tokens."""
    if u.cols != a_bytes.rows or v.cols != a_bytes.cols:
        raise ValueError(
            f"dimension mismatch: U is {u.rows}x{u.cols}, A is "
            f"{a_bytes.rows}x{a_bytes.cols}, V is {v.rows}x{v.cols}"
        )
    ud = u.to_dense().astype(np.uint8)
    ad = a_bytes.to_dense().astype(np.uint8)
    vd = v.to_dense().astype(np.uint8)
    product = (ud @ ad @ vd.T) > 0
    return AlignmentMatrix.from_dense(product)


def project_span(span: Span, a: AlignmentMatrix) -> Span:
    """Project a source-side span through a token-to-token alignment.

    Multiplies the span's indicator vector through the matrix and returns
    the [min, max+1) envelope of the nonzero target indices.
    """
    if not (0 <= span.start < span.end <= a.cols):
        raise ValueError(f"span [{span.start},{span.end}) invalid for {a.cols} source tokens")
    hit = a.to_dense()[:, span.start : span.end].any(axis=1)
    nz = np.flatnonzero(hit)
    if len(nz) == 0:
        raise UnalignedSpan(f"span [{span.start},{span.end}) has no aligned target tokens")
    return Span(int(nz[0]), int(nz[-1]) + 1)


def align_tokens(source_tokens, target_tokens) -> AlignmentMatrix:
    """Token-to-token alignment (target rows x source cols) via byte
    alignment of the space-joined strings."""
    s_joined = " ".join(source_tokens)
    t_joined = " ".join(target_tokens)
    a_bytes = byte_alignment(s_joined, t_joined)
    u = token_byte_alignment(target_tokens, t_joined)
    v = token_byte_alignment(source_tokens, s_joined)
    return compose(u, a_bytes, v)


@dataclass(frozen=True)
class TokenizerAdapter:
    """A named black-box string -> token list function."""

    name: str
    fn: object

    def __call__(self, text: str):
        return list(self.fn(text))


_PUNCT = set(".,!?;:\"()[]{}<>…“”‘’«»")


def _moses_split_word(word: str) -> list:
    lead, trail = [], []
    while word and word[0] in _PUNCT:
        lead.append(word[0])
        word = word[1:]
    while word and word[-1] in _PUNCT:
        trail.insert(0, word[-1])
        word = word[:-1]
    core = []
    if word:
        if word.lower().endswith("n't") and len(word) > 3:
            core = [word[:-3], "n", "&apos;t"]
        elif "'" in word:
            idx = word.index("'")
            pre, post = word[:idx], word[idx + 1 :]
            core = [p for p in (pre,) if p]
            core.append("&apos;" + post if post else "&apos;")
        else:
            core = [word]
    return lead + core + trail


def moses_like_tokenize(text: str) -> list:
    """Rule-based splitting of punctuation and apostrophe clitics, with
    Moses-style &apos; escaping. Not a bit-exact Moses reimplementation."""
    out = []
    for word in text.split():
        out.extend(_moses_split_word(word))
    return out


def make_wordpiece_tokenizer(vocab_path, lowercase: bool = False, unk_token: str = "[UNK]"):
    """Greedy longest-match subword tokenizer from a vocabulary file (one
    piece per line; continuation pieces prefixed '##')."""
    with open(vocab_path, encoding="utf-8") as f:
        vocab = {line.rstrip("\n") for line in f if line.strip()}

    def tokenize(text: str) -> list:
        out = []
        for word in text.split():
            if lowercase:
                word = word.lower()
            pieces = []
            pos = 0
            while pos < len(word):
                prefix = "##" if pos > 0 else ""
                end = len(word)
                piece = None
                while end > pos:
                    cand = prefix + word[pos:end]
                    if cand in vocab:
                        piece = cand
                        break
                    end -= 1
                if piece is None:
                    pieces = [unk_token]
                    break
                pieces.append(piece)
                pos = end
            out.extend(pieces)
        return out

    return tokenize


def get_adapter(name: str, **kwargs) -> TokenizerAdapter:
    if name == "whitespace":
        return TokenizerAdapter("whitespace", str.split)
    if name == "moses-like":
        return TokenizerAdapter("moses-like", moses_like_tokenize)
    if name == "wordpiece-file":
        fn = make_wordpiece_tokenizer(
            kwargs["vocab_path"],
            lowercase=kwargs.get("lowercase", False),
        )
        return TokenizerAdapter("wordpiece-file", fn)
    raise KeyError(f"unknown tokenizer adapter: {name!r}")


def retokenize_example(ex: EdgeExample, target_tokens) -> tuple:
    """Retokenize one example given target tokens. Returns the new example
    and the number of targets dropped because their span did not survive."""
    a = align_tokens(ex.tokens, target_tokens)
    new_targets = []
    dropped = 0
    for t in ex.targets:
        try:
            span1 = project_span(t.span1, a)
            span2 = project_span(t.span2, a) if t.span2 is not None else None
        except UnalignedSpan:
            dropped += 1
            continue
        new_targets.append(Target(span1=span1, span2=span2, labels=t.labels))
    new_ex = EdgeExample.make(ex.text, target_tokens, new_targets, ex.info)
    return new_ex, dropped


def retokenize_dataset(examples, adapter: TokenizerAdapter, target_token_lists=None):
    """Retokenize every example, projecting all target spans.

    Targets whose span is deleted by the retokenization are dropped and
    counted; `target_token_lists`, when given, overrides the adapter with
    pre-tokenized parallel output (one token list per example).

    Returns (new_examples, report) where report counts dropped targets.
    """
    new_examples = []
    dropped_targets = 0
    examples_affected = 0
    for i, ex in enumerate(examples):
        if target_token_lists is not None:
            tokens = list(target_token_lists[i])
        else:
            tokens = adapter(" ".join(ex.tokens))
        new_ex, dropped = retokenize_example(ex, tokens)
        if dropped:
            dropped_targets += dropped
            examples_affected += 1
        new_examples.append(new_ex)
    report = {
        "dropped_targets": dropped_targets,
        "examples_affected": examples_affected,
        "examples": len(new_examples),
    }
    return new_examples, report

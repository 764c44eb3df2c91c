"""Pretrained word vectors with character n-gram composition for
out-of-vocabulary tokens, and fixed-size document encoding.

The text format is one `token v1 ... vd` line per vector, optionally
preceded by a `count dim` header. Tokens that start with `<` or end with
`>` are boundary-marked character n-grams and go to the n-gram table;
everything else is a word. An OOV word is the sum of the stored vectors of
its boundary-wrapped character n-grams, or the zero vector when none match.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


class EmbeddingFormatError(Exception):
    """Malformed vector file; message names the offending line."""


@dataclass
class EmbeddingTable:
    dim: int
    word_vectors: dict[str, np.ndarray]
    ngram_vectors: dict[str, np.ndarray] = field(default_factory=dict)
    ngram_min: int = 3
    ngram_max: int = 6
    oov_misses: int = 0
    truncated_docs: int = 0

    def __post_init__(self):
        if self.ngram_min > self.ngram_max:
            raise ValueError("ngram_min must be <= ngram_max")

    def fingerprint(self) -> str:
        """Stable identity of the vocabulary: dim, token sets, n-gram range."""
        h = hashlib.sha256()
        h.update(f"d={self.dim};n=[{self.ngram_min},{self.ngram_max}]".encode())
        for token in sorted(self.word_vectors):
            h.update(b"w")
            h.update(token.encode("utf-8"))
        for token in sorted(self.ngram_vectors):
            h.update(b"g")
            h.update(token.encode("utf-8"))
        return h.hexdigest()

    def stats_json(self) -> dict:
        return {
            "dim": self.dim,
            "words": len(self.word_vectors),
            "ngrams": len(self.ngram_vectors),
            "oov_misses": self.oov_misses,
            "truncated_docs": self.truncated_docs,
        }


@dataclass
class DocumentMatrix:
    matrix: np.ndarray  # L x d, rows beyond true_length are zero
    true_length: int


def character_ngrams(token: str, nmin: int, nmax: int) -> list[str]:
    """All substrings of `<token>` with lengths in [nmin, nmax], in order."""
    wrapped = f"<{token}>"
    out = []
    for length in range(nmin, nmax + 1):
        for start in range(0, len(wrapped) - length + 1):
            out.append(wrapped[start : start + length])
    return out


def load_text_vectors(
    path: str, ngram_min: int = 3, ngram_max: int = 6
) -> EmbeddingTable:
    words: dict[str, np.ndarray] = {}
    ngrams: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            raise EmbeddingFormatError(f"{path}: empty file")
        parts = first.rstrip("\n").split(" ")
        start_line = 2
        pending: list[tuple[int, list[str]]] = []
        header = None
        if len(parts) == 2:
            try:
                header = (int(parts[0]), int(parts[1]))
            except ValueError:
                header = None  # a dim-1 vector line, not a header
        if header is not None:
            dim = header[1]
            if dim < 1:
                raise EmbeddingFormatError(f"{path}:1: dimension must be >= 1")
        else:
            pending.append((1, parts))

        def store(line_no: int, parts: list[str]) -> None:
            nonlocal dim
            token, comps = parts[0], parts[1:]
            if not token:
                raise EmbeddingFormatError(f"{path}:{line_no}: empty token")
            if dim is None:
                dim = len(comps)
                if dim < 1:
                    raise EmbeddingFormatError(f"{path}:{line_no}: no components")
            if len(comps) != dim:
                raise EmbeddingFormatError(
                    f"{path}:{line_no}: expected {dim} components, got {len(comps)}"
                )
            try:
                vec = np.array([float(c) for c in comps], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingFormatError(
                    f"{path}:{line_no}: non-numeric component"
                ) from exc
            if token.startswith("<") or token.endswith(">"):
                ngrams[token] = vec
            else:
                words[token] = vec

        for line_no, parts in pending:
            store(line_no, parts)
        for line_no, line in enumerate(fh, start=start_line):
            line = line.rstrip("\n")
            if not line:
                continue
            store(line_no, line.split(" "))
    if dim is None or (not words and not ngrams):
        raise EmbeddingFormatError(f"{path}: no vectors found")
    return EmbeddingTable(
        dim=dim, word_vectors=words, ngram_vectors=ngrams,
        ngram_min=ngram_min, ngram_max=ngram_max,
    )


def save_text_vectors(table: EmbeddingTable, path: str) -> None:
    entries = list(table.word_vectors.items()) + list(table.ngram_vectors.items())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(entries)} {table.dim}\n")
        for token, vec in entries:
            comps = " ".join(repr(float(v)) for v in vec)
            fh.write(f"{token} {comps}\n")


def lookup(table: EmbeddingTable, token: str) -> np.ndarray:
    """Vector for a token; OOV tokens are composed from character n-grams."""
    if not token:
        raise ValueError("token must be nonempty")
    hit = table.word_vectors.get(token)
    if hit is not None:
        return hit
    total = np.zeros(table.dim, dtype=np.float64)
    found = False
    for gram in character_ngrams(token, table.ngram_min, table.ngram_max):
        vec = table.ngram_vectors.get(gram)
        if vec is not None:
            total += vec
            found = True
    if not found:
        table.oov_misses += 1
    return total


def encode(table: EmbeddingTable, tokens: list[str], length: int) -> DocumentMatrix:
    """Stack token vectors into a zero-padded length x dim matrix.

    Tokens beyond `length` are dropped (counted as a truncated doc).
    """
    if length < 1:
        raise ValueError("padded length must be >= 1")
    matrix = np.zeros((length, table.dim), dtype=np.float64)
    n = min(len(tokens), length)
    if len(tokens) > length:
        table.truncated_docs += 1
    for i in range(n):
        matrix[i] = lookup(table, tokens[i])
    return DocumentMatrix(matrix=matrix, true_length=n)


def padded_length_for(corpus_lengths: list[int], percentile: float = 99.0) -> int:
    """Default padded length: the given percentile of corpus token counts."""
    if not corpus_lengths:
        raise ValueError("empty corpus")
    return max(1, int(np.percentile(np.array(corpus_lengths), percentile)))

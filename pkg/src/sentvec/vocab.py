"""Word vocabulary and hashed n-gram bucket ids.

Unigram ids are dense in [0, V), assigned by descending count with
lexicographic tie-breaking.  Word n-grams are mapped to bucket ids in
[V, V+B) via a chained 64-bit FNV-1a hash over the little-endian 4-byte
encodings of the token ids (see docs/model-format.md for the byte-level
definition and published test vectors).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def ngram_hash(token_ids: Sequence[int]) -> int:
    """Chained FNV-1a/64 over little-endian uint32 token ids."""
    h = FNV64_OFFSET
    for tid in token_ids:
        t = int(tid)
        for shift in (0, 8, 16, 24):
            h ^= (t >> shift) & 0xFF
            h = (h * FNV64_PRIME) & _U64
    return h


@dataclass(frozen=True)
class NgramHasher:
    """Maps contiguous word n-grams to bucket ids in [V, V+B)."""

    ngram_order: int = 2
    bucket_count: int = 2_000_000
    vocab_size: int = 0

    def bucket(self, token_ids: Sequence[int]) -> int:
        return self.vocab_size + ngram_hash(token_ids) % self.bucket_count


def ngram_ids(token_ids: Sequence[int], hasher: NgramHasher) -> list[int]:
    """Bucket ids for every contiguous n-gram of length 2..ngram_order.

    Unigrams are not re-emitted.  For order 2 the result has exactly
    max(0, len(token_ids) - 1) entries.
    """
    out = []
    n = len(token_ids)
    for g in range(2, hasher.ngram_order + 1):
        for i in range(n - g + 1):
            out.append(hasher.bucket(token_ids[i : i + g]))
    return out


def discard_probability(count: int, total_tokens: int, t: float) -> float:
    """Subsampling discard probability max(0, 1 - sqrt(t / f)), f = count/total."""
    f = count / total_tokens
    return max(0.0, 1.0 - math.sqrt(t / f))


@dataclass
class Vocabulary:
    """Frequency-sorted word table with subsampling probabilities."""

    words: list[str]
    counts: np.ndarray  # int64, per retained word
    total_tokens: int  # occurrences of retained words in the corpus
    min_count: int
    subsample_t: float
    discard_prob: np.ndarray = field(init=False)  # float64 in [0, 1]
    word_ids: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.word_ids = {w: i for i, w in enumerate(self.words)}
        if self.subsample_t > 0:
            self.discard_prob = np.array(
                [discard_probability(int(c), self.total_tokens, self.subsample_t) for c in self.counts],
                dtype=np.float64,
            )
        else:
            self.discard_prob = np.zeros(len(self.words), dtype=np.float64)

    def __len__(self) -> int:
        return len(self.words)

    def id_of(self, word: str) -> int | None:
        return self.word_ids.get(word)

    def to_ids(self, tokens: Iterable[str]) -> list[int]:
        """Map tokens to ids, skipping out-of-vocabulary tokens."""
        ids = []
        for tok in tokens:
            i = self.word_ids.get(tok)
            if i is not None:
                ids.append(i)
        return ids


def build_vocab(
    corpus: Iterable[Sequence[str]],
    min_count: int = 5,
    subsample_t: float = 1e-4,
) -> Vocabulary:
    """Count tokens over a stream of token lists and build the vocabulary.

    Words seen fewer than `min_count` times are dropped.  Ids are assigned
    by descending count, ties broken lexicographically.  Raises
    ValueError("empty vocabulary") when nothing survives.
    """
    counter: Counter[str] = Counter()
    for tokens in corpus:
        counter.update(tokens)
    retained = [(w, c) for w, c in counter.items() if c >= min_count]
    if not retained:
        raise ValueError("empty vocabulary")
    retained.sort(key=lambda wc: (-wc[1], wc[0]))
    words = [w for w, _ in retained]
    counts = np.array([c for _, c in retained], dtype=np.int64)
    return Vocabulary(
        words=words,
        counts=counts,
        total_tokens=int(counts.sum()),
        min_count=min_count,
        subsample_t=subsample_t,
    )

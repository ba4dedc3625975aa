"""Sentence-pair similarity evaluation.

Datasets are TSV files `s1 <TAB> s2 <TAB> score` with scores in [0, 5]
and an optional header row.  Unsupervised evaluation scores each pair by
the cosine of the two sentence vectors and reports the Pearson
correlation against the gold scores.  The stratified fold planner is
shared with the supervised regression head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import EmbeddingModel, similarity
from .prep import PrepConfig, prep_sentence


@dataclass(frozen=True)
class SentencePair:
    s1: str
    s2: str
    score: float


@dataclass
class PairDataset:
    pairs: list[SentencePair]
    name: str = ""

    def __len__(self) -> int:
        return len(self.pairs)

    def gold(self) -> np.ndarray:
        return np.array([p.score for p in self.pairs], dtype=np.float64)

    def subset(self, indices) -> "PairDataset":
        return PairDataset(pairs=[self.pairs[i] for i in indices], name=self.name)


@dataclass
class FoldPlan:
    folds: list[list[int]]
    seed: int


def load_pairs(path: str, name: str = "") -> PairDataset:
    """Parse a sentence-pair TSV; malformed lines report their line number."""
    pairs: list[SentencePair] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                if lineno == 1:
                    continue  # tolerate a malformed header row only
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated columns, got {len(cols)}")
            try:
                score = float(cols[2])
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise ValueError(f"{path}:{lineno}: unparsable score {cols[2]!r}") from None
            if not (0.0 <= score <= 5.0) or math.isnan(score):
                raise ValueError(f"{path}:{lineno}: score {score} outside [0, 5]")
            pairs.append(SentencePair(s1=cols[0], s2=cols[1], score=score))
    return PairDataset(pairs=pairs, name=name or path)


def cosine_predict(model: EmbeddingModel, dataset: PairDataset, prep_config: PrepConfig | None = None) -> list[float]:
    """Cosine of the two sentence vectors for every pair, in dataset order."""
    cfg = prep_config if prep_config is not None else PrepConfig()
    preds = []
    for pair in dataset.pairs:
        u = model.sentence_vector(prep_sentence(pair.s1, cfg))
        v = model.sentence_vector(prep_sentence(pair.s2, cfg))
        preds.append(similarity(u, v))
    return preds


def pearson(pred, gold) -> float:
    """Sample Pearson correlation; raises on constant input ("zero variance")."""
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(gold, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("pearson needs two equal-length vectors of at least 2 values")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.dot(dx, dx))
    sy = float(np.dot(dy, dy))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("zero variance")
    return float(np.dot(dx, dy) / math.sqrt(sx * sy))


def stratified_folds(dataset: PairDataset, k: int = 10, seed: int = 0) -> FoldPlan:
    """Bin pairs by floor(score) into strata 0..5, then deal each stratum
    round-robin over the folds after a seeded shuffle.

    The round-robin pointer continues across strata, so fold sizes differ
    by at most one overall as well as within each stratum.
    """
    n = len(dataset)
    if k < 1 or k > n:
        raise ValueError(f"cannot split {n} pairs into {k} folds")
    strata: list[list[int]] = [[] for _ in range(6)]
    for i, pair in enumerate(dataset.pairs):
        strata[min(int(math.floor(pair.score)), 5)].append(i)
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    cursor = 0
    for stratum in strata:
        stratum = [stratum[j] for j in rng.permutation(len(stratum))]
        for idx in stratum:
            folds[cursor % k].append(idx)
            cursor += 1
    return FoldPlan(folds=folds, seed=seed)


def evaluate_unsupervised(
    model: EmbeddingModel, dataset: PairDataset, prep_config: PrepConfig | None = None
) -> dict:
    preds = cosine_predict(model, dataset, prep_config)
    return {"pearson": pearson(preds, dataset.gold()), "n": len(dataset)}

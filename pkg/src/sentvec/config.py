"""Training hyperparameters."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 700
    ngram_order: int = 2
    negatives: int = 10
    window: int = 30
    epochs: int = 5
    lr0: float = 0.2
    min_count: int = 5
    subsample_t: float = 1e-4  # <= 0 disables subsampling
    bucket_count: int = 2_000_000
    workers: int = 1
    seed: int = 1
    ngram_dropout_k: int = 0
    exact_math: bool = False  # bypass the sigmoid lookup table

    def __post_init__(self):
        if self.dim < 1 or self.ngram_order < 1 or self.negatives < 1:
            raise ValueError("dim, ngram_order and negatives must be positive")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.epochs < 1 or self.bucket_count < 1 or self.workers < 1:
            raise ValueError("epochs, bucket_count and workers must be positive")
        if self.lr0 <= 0 or self.min_count < 1 or self.ngram_dropout_k < 0:
            raise ValueError("invalid lr0, min_count or ngram_dropout_k")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f: d[f] for f in cls.__dataclass_fields__ if f in d}
        return cls(**known)

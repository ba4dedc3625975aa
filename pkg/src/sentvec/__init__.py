"""sentvec: sentence embeddings with hashed n-grams, trained at the
sentence level with negative sampling, plus similarity and multi-label
classification evaluation heads."""

__version__ = "0.1.0"

from .config import TrainConfig
from .model import EmbeddingModel, load, save, sentence_vector, similarity
from .prep import PrepConfig, preprocess, prep_sentence, split_sentences, tokenize
from .vocab import NgramHasher, Vocabulary, build_vocab


def __getattr__(name):
    # defers the numba-backed trainer so inference-only use stays light
    if name == "train":
        from .trainer import train

        return train
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")

__all__ = [
    "EmbeddingModel",
    "NgramHasher",
    "PrepConfig",
    "TrainConfig",
    "Vocabulary",
    "build_vocab",
    "load",
    "prep_sentence",
    "preprocess",
    "save",
    "sentence_vector",
    "similarity",
    "split_sentences",
    "tokenize",
    "train",
    "__version__",
]

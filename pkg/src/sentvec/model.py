"""Embedding parameter store, sentence composition and the .bsvm format.

A model holds two matrices: `input_matrix` with one row per vocabulary
word followed by one row per n-gram bucket, and `output_matrix` with one
row per word (the negative-sampling outputs).  A sentence vector is the
arithmetic mean of the input rows of all in-vocabulary unigrams plus the
n-gram buckets of the in-vocabulary id sequence.

The on-disk format is fixed byte-for-byte (see docs/model-format.md):
little-endian integers, float32 matrices, trailing CRC-32.  Saving the
same model twice produces identical files.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .vocab import NgramHasher, Vocabulary, ngram_ids

MAGIC = b"BSVM"
FORMAT_VERSION = 1


class ModelFormatError(Exception):
    """Base error for unreadable model files."""


class NotAModelFileError(ModelFormatError):
    pass


class UnsupportedVersionError(ModelFormatError):
    pass


class TruncatedFileError(ModelFormatError):
    pass


class ChecksumError(ModelFormatError):
    pass


@dataclass
class ModelHeader:
    format_version: int
    dim: int
    vocab_size: int
    bucket_count: int
    ngram_order: int
    train_config: TrainConfig


@dataclass
class EmbeddingModel:
    dim: int
    input_matrix: np.ndarray  # float32, (V + B, dim)
    output_matrix: np.ndarray  # float32, (V, dim)
    vocab: Vocabulary
    hasher: NgramHasher
    header: ModelHeader

    def sentence_features(self, tokens) -> list[int]:
        """Unigram ids plus n-gram bucket ids; OOV tokens are skipped."""
        ids = self.vocab.to_ids(tokens)
        return ids + ngram_ids(ids, self.hasher)

    def sentence_vector(self, tokens) -> np.ndarray:
        feats = self.sentence_features(tokens)
        if not feats:
            return np.zeros(self.dim, dtype=np.float32)
        return self.input_matrix[feats].mean(axis=0)


def sentence_vector(model: EmbeddingModel, tokens) -> np.ndarray:
    return model.sentence_vector(tokens)


def similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; 0.0 when either vector has zero norm."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return min(1.0, max(-1.0, float(np.dot(u, v) / (nu * nv))))


def _config_bytes(config: TrainConfig) -> bytes:
    return json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")


def save(model: EmbeddingModel, path: str) -> None:
    """Write the model to `path` (atomically, via a temp file)."""
    v = len(model.vocab)
    b = model.hasher.bucket_count
    if model.input_matrix.shape != (v + b, model.dim):
        raise ValueError("input_matrix shape does not match vocab/bucket sizes")
    if model.output_matrix.shape != (v, model.dim):
        raise ValueError("output_matrix shape does not match vocabulary size")
    if not np.isfinite(model.input_matrix).all() or not np.isfinite(model.output_matrix).all():
        raise ValueError("model contains non-finite values")

    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, model.dim)]
    parts.append(struct.pack("<QQI", v, b, model.hasher.ngram_order))
    cfg = _config_bytes(model.header.train_config)
    parts.append(struct.pack("<I", len(cfg)))
    parts.append(cfg)
    for word, count in zip(model.vocab.words, model.vocab.counts):
        wb = word.encode("utf-8")
        parts.append(struct.pack("<I", len(wb)))
        parts.append(wb)
        parts.append(struct.pack("<Q", int(count)))
    parts.append(struct.pack("<QdI", model.vocab.total_tokens, model.vocab.subsample_t, model.vocab.min_count))
    inp = np.ascontiguousarray(model.input_matrix, dtype="<f4")
    out = np.ascontiguousarray(model.output_matrix, dtype="<f4")
    parts.append(inp.tobytes())
    parts.append(out.tobytes())
    payload = b"".join(parts)
    crc = zlib.crc32(payload) & 0xFFFFFFFF

    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(payload)
        f.write(struct.pack("<I", crc))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError("truncated file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _crc_ok(data: bytes) -> bool:
    if len(data) < 8:
        return False
    (stored,) = struct.unpack("<I", data[-4:])
    return zlib.crc32(data[:-4]) & 0xFFFFFFFF == stored


def load(path: str) -> EmbeddingModel:
    """Read a .bsvm file, verifying magic, version, structure and CRC-32."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4 or data[:4] != MAGIC:
        raise NotAModelFileError("not a model file")
    r = _Reader(data)
    r.take(4)
    (version, dim) = r.unpack("<II")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}")
    try:
        (v, b, order) = r.unpack("<QQI")
        (cfg_len,) = r.unpack("<I")
        cfg = TrainConfig.from_dict(json.loads(r.take(cfg_len).decode("utf-8")))
        words = []
        counts = np.empty(v, dtype=np.int64)
        for i in range(v):
            (wlen,) = r.unpack("<I")
            words.append(r.take(wlen).decode("utf-8"))
            (counts[i],) = r.unpack("<Q")
        (total_tokens, subsample_t, min_count) = r.unpack("<QdI")
        inp = np.frombuffer(r.take((v + b) * dim * 4), dtype="<f4").reshape(v + b, dim).copy()
        out = np.frombuffer(r.take(v * dim * 4), dtype="<f4").reshape(v, dim).copy()
        (crc_stored,) = r.unpack("<I")
    except TruncatedFileError:
        raise
    except (UnicodeDecodeError, json.JSONDecodeError, ValueError, KeyError, TypeError):
        # Structured content is unreadable: a failed checksum means payload
        # corruption; a valid one means the writer produced garbage.
        if not _crc_ok(data):
            raise ChecksumError("checksum mismatch") from None
        raise ModelFormatError("malformed model file") from None
    if r.pos != len(data) or zlib.crc32(data[: len(data) - 4]) & 0xFFFFFFFF != crc_stored:
        raise ChecksumError("checksum mismatch")

    vocab = Vocabulary(
        words=words, counts=counts, total_tokens=int(total_tokens), min_count=int(min_count), subsample_t=float(subsample_t)
    )
    hasher = NgramHasher(ngram_order=int(order), bucket_count=int(b), vocab_size=int(v))
    header = ModelHeader(
        format_version=version,
        dim=int(dim),
        vocab_size=int(v),
        bucket_count=int(b),
        ngram_order=int(order),
        train_config=cfg,
    )
    return EmbeddingModel(
        dim=int(dim), input_matrix=inp, output_matrix=out, vocab=vocab, hasher=hasher, header=header
    )

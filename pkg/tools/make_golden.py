"""Regenerate the golden model files under golden/.

These files are committed; regeneration should only happen when the
on-disk format itself changes (bump FORMAT_VERSION in that case).
"""

import pathlib
import sys
import tempfile

import numpy as np

from sentvec.config import TrainConfig
from sentvec.model import EmbeddingModel, ModelHeader, FORMAT_VERSION, save
from sentvec.trainer import init_model, train
from sentvec.vocab import NgramHasher, Vocabulary

ROOT = pathlib.Path(__file__).resolve().parent.parent
OUT = ROOT / "golden"

CORPUS = """\
craf kinase drives lung tumor growth
kras mutations drive lung cancer onset
craf loss blocks kras driven tumor formation
kinase signaling controls tumor cell growth
lung cancer cells need kras signaling
craf and kras interact in tumor cells
drug treatment blocks kinase signaling
tumor growth slows after drug treatment
cancer cells resist drug treatment pressure
kras driven cancer needs craf kinase
"""


def trained(path: str, dim: int, order: int, seed: int) -> None:
    with tempfile.NamedTemporaryFile("w", suffix=".txt", delete=False) as f:
        f.write(CORPUS * 10)
        corpus = f.name
    cfg = TrainConfig(
        dim=dim,
        ngram_order=order,
        negatives=5,
        window=30,
        epochs=3,
        lr0=0.2,
        min_count=2,
        subsample_t=0.0,
        bucket_count=64,
        workers=1,
        seed=seed,
    )
    model = train(corpus, cfg, progress_every=10**9)
    save(model, path)


def hand_built(path: str) -> None:
    words = ["alpha", "beta", "gamma", "delta"]
    vocab = Vocabulary(
        words=words,
        counts=np.array([40, 30, 20, 10], dtype=np.int64),
        total_tokens=100,
        min_count=1,
        subsample_t=1e-4,
    )
    cfg = TrainConfig(dim=4, ngram_order=3, bucket_count=16, min_count=1, seed=3)
    hasher = NgramHasher(ngram_order=3, bucket_count=16, vocab_size=4)
    model = init_model(vocab, hasher, cfg, seed=3)
    model.output_matrix[:] = np.linspace(-0.5, 0.5, model.output_matrix.size).reshape(model.output_matrix.shape)
    save(model, path)


def main():
    OUT.mkdir(exist_ok=True)
    trained(str(OUT / "bigram-d16.bsvm"), dim=16, order=2, seed=41)
    trained(str(OUT / "unigram-d8.bsvm"), dim=8, order=1, seed=42)
    hand_built(str(OUT / "trigram-d4.bsvm"))
    for p in sorted(OUT.glob("*.bsvm")):
        print(p.name, p.stat().st_size, "bytes")


if __name__ == "__main__":
    sys.exit(main())

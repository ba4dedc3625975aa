"""Sentence-level CBOW training with negative sampling.

For every (subsampled) target position the context is every remaining
token within `window` positions on each side, plus the hashed n-gram
buckets of that context sequence (n-grams may span the removed target).
The hidden vector is the mean of the context rows of the input matrix;
the loss is standard negative-sampling logistic loss.

The inner loop is a numba kernel compiled with ``nogil=True`` so that
multiple worker threads can update the shared parameter matrices
lock-free (lost updates are tolerated by design).  ``workers=1`` with a
fixed seed is bit-for-bit reproducible.

Randomness comes from two explicit splitmix64 chains: one for
subsampling and n-gram dropout, one for negative sampling.  The sigmoid
is a 512-entry lookup table clamped to [-8, 8] by default;
``exact_math=True`` switches to ``1/(1+exp(-x))`` (required by the
finite-difference gradient checks).
"""

from __future__ import annotations

import math
import sys
import threading
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .config import TrainConfig
from .model import EmbeddingModel, ModelHeader, FORMAT_VERSION
from .vocab import NgramHasher, Vocabulary, build_vocab

SIGMOID_TABLE_SIZE = 512
MAX_SIGMOID = 8.0


def _sigmoid_table() -> np.ndarray:
    x = np.arange(SIGMOID_TABLE_SIZE) * (2.0 * MAX_SIGMOID / SIGMOID_TABLE_SIZE) - MAX_SIGMOID
    return 1.0 / (1.0 + np.exp(-x))


_SIG_TABLE = _sigmoid_table()

# 64-bit constants composed from 32-bit halves: numba cannot lower
# uint64 literals above 2^63.
@njit(cache=True, nogil=True, inline="always")
def _mix(state):
    """splitmix64: returns (next_state, output)."""
    state = state + ((np.uint64(0x9E3779B9) << np.uint64(32)) | np.uint64(0x7F4A7C15))
    z = state
    z = (z ^ (z >> np.uint64(30))) * ((np.uint64(0xBF58476D) << np.uint64(32)) | np.uint64(0x1CE4E5B9))
    z = (z ^ (z >> np.uint64(27))) * ((np.uint64(0x94D049BB) << np.uint64(32)) | np.uint64(0x133111EB))
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True, nogil=True, inline="always")
def _uniform01(z):
    return float(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, nogil=True, inline="always")
def _fnv_ids(buf, lo, hi):
    """Chained FNV-1a/64 over little-endian uint32 ids in buf[lo:hi]."""
    h = (np.uint64(0xCBF29CE4) << np.uint64(32)) | np.uint64(0x84222325)
    for k in range(lo, hi):
        t = np.uint64(buf[k])
        for s in range(4):
            h = (h ^ ((t >> np.uint64(8 * s)) & np.uint64(0xFF))) * np.uint64(0x100000001B3)
    return h


@njit(cache=True, nogil=True)
def _draw_negative(cum, state, exclude):
    """Sample a word id from the count^0.75 table, redrawing on `exclude`."""
    total = cum[len(cum) - 1]
    while True:
        state, z = _mix(state)
        r = _uniform01(z) * total
        w = np.searchsorted(cum, r, side="right")
        if w != exclude:
            return w, state


@njit(cache=True, nogil=True, inline="always")
def _sigmoid(x, use_table, table):
    if use_table:
        if x <= -MAX_SIGMOID:
            return table[0]
        if x >= MAX_SIGMOID:
            return table[SIGMOID_TABLE_SIZE - 1]
        i = int((x + MAX_SIGMOID) * (SIGMOID_TABLE_SIZE / (2.0 * MAX_SIGMOID)))
        if i >= SIGMOID_TABLE_SIZE:
            i = SIGMOID_TABLE_SIZE - 1
        return table[i]
    return 1.0 / (1.0 + math.exp(-x))


@njit(cache=True, nogil=True)
def _run_sentences(
    w_in,
    w_out,
    g_in,
    g_out,
    accumulate,
    tokens,
    offsets,
    order_arr,
    lo,
    hi,
    discard,
    cum,
    window,
    negatives,
    ngram_order,
    bucket,
    vocab_size,
    dropout_k,
    lr0,
    tokens_done0,
    total_tokens,
    sub_state,
    neg_state,
    use_table,
    table,
):
    """Train (or, with accumulate=True, differentiate) a block of sentences.

    Per sentence, rng consumption order is: one subsampling draw per
    token with nonzero discard probability, then per target `dropout_k`
    draws (when configured) from the subsampling chain and `negatives`
    or more draws from the negative chain.

    Returns (loss_sum, n_targets, n_tokens, sub_state, neg_state).
    """
    dim = w_in.shape[1]
    loss_sum = 0.0
    n_targets = 0
    n_tokens = 0
    hbuf = np.empty(dim, np.float64)
    gh = np.empty(dim, np.float64)
    ub = np.uint64(bucket)

    for s in range(lo, hi):
        sid = order_arr[s]
        s_lo = offsets[sid]
        s_hi = offsets[sid + 1]
        n = s_hi - s_lo
        if total_tokens > 0:
            done = tokens_done0 + n_tokens
            lr = lr0 * (1.0 - done / total_tokens)
            if lr < 0.0:
                lr = 0.0
        else:
            lr = lr0
        n_tokens += n
        if n < 2:
            continue

        kept = np.empty(n, np.int32)
        nk = 0
        for k in range(s_lo, s_hi):
            wid = tokens[k]
            p = discard[wid]
            if p > 0.0:
                sub_state, z = _mix(sub_state)
                if _uniform01(z) < p:
                    continue
            kept[nk] = wid
            nk += 1
        if nk < 2:
            continue

        seqbuf = np.empty(nk, np.int32)
        featbuf = np.empty(nk * ngram_order + 1, np.int64)

        for p in range(nk):
            a = p - window
            if a < 0:
                a = 0
            b = p + window + 1
            if b > nk:
                b = nk
            m = 0
            for q in range(a, b):
                if q != p:
                    seqbuf[m] = kept[q]
                    m += 1
            nf = 0
            for q in range(m):
                featbuf[nf] = seqbuf[q]
                nf += 1
            nf_uni = nf
            for g in range(2, ngram_order + 1):
                for i0 in range(m - g + 1):
                    h = _fnv_ids(seqbuf, i0, i0 + g)
                    featbuf[nf] = vocab_size + np.int64(h % ub)
                    nf += 1
            if dropout_k > 0:
                for _ in range(dropout_k):
                    if nf <= nf_uni:
                        break
                    sub_state, z = _mix(sub_state)
                    idx = nf_uni + np.int64(z % np.uint64(nf - nf_uni))
                    featbuf[idx] = featbuf[nf - 1]
                    nf -= 1

            for c in range(dim):
                hbuf[c] = 0.0
            for q in range(nf):
                r = featbuf[q]
                for c in range(dim):
                    hbuf[c] += w_in[r, c]
            inv_nf = 1.0 / nf
            for c in range(dim):
                hbuf[c] *= inv_nf
                gh[c] = 0.0

            tgt = kept[p]
            score = 0.0
            for c in range(dim):
                score += hbuf[c] * w_out[tgt, c]
            sig = _sigmoid(score, use_table, table)
            loss_sum += -math.log(sig)
            coef = sig - 1.0
            for c in range(dim):
                gh[c] += coef * w_out[tgt, c]
            if accumulate:
                for c in range(dim):
                    g_out[tgt, c] += coef * hbuf[c]
            else:
                for c in range(dim):
                    w_out[tgt, c] -= lr * coef * hbuf[c]

            for _ in range(negatives):
                wneg, neg_state = _draw_negative(cum, neg_state, tgt)
                score = 0.0
                for c in range(dim):
                    score += hbuf[c] * w_out[wneg, c]
                loss_sum += -math.log(_sigmoid(-score, use_table, table))
                coef = _sigmoid(score, use_table, table)
                for c in range(dim):
                    gh[c] += coef * w_out[wneg, c]
                if accumulate:
                    for c in range(dim):
                        g_out[wneg, c] += coef * hbuf[c]
                else:
                    for c in range(dim):
                        w_out[wneg, c] -= lr * coef * hbuf[c]

            if accumulate:
                for q in range(nf):
                    r = featbuf[q]
                    for c in range(dim):
                        g_in[r, c] += gh[c] * inv_nf
            else:
                for q in range(nf):
                    r = featbuf[q]
                    for c in range(dim):
                        w_in[r, c] -= lr * gh[c] * inv_nf
            n_targets += 1

    return loss_sum, n_targets, n_tokens, sub_state, neg_state


def seed_stream(seed: int, stream: int) -> int:
    """Derive an independent 64-bit rng state from (seed, stream)."""
    state = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    for _ in range(stream + 1):
        state, _z = _mix(state)
        state = np.uint64(state)
    _state, z = _mix(state)
    return int(z)


@dataclass
class SplitMix64:
    """Tiny explicit-state rng handle shared with the training kernels."""

    state: int

    def uniform(self) -> float:
        s, z = _mix(np.uint64(self.state))
        self.state = int(s)
        return float(_uniform01(np.uint64(z)))


@dataclass
class NegativeSampler:
    """Cumulative count^0.75 table plus the rng state used to sample it."""

    cum: np.ndarray
    state: int

    @classmethod
    def from_counts(cls, counts: np.ndarray, seed: int) -> "NegativeSampler":
        cum = np.cumsum(np.asarray(counts, dtype=np.float64) ** 0.75)
        return cls(cum=cum, state=seed_stream(seed, 1))


def negative_sample(sampler: NegativeSampler, exclude: int) -> int:
    """One draw from the sampler's distribution, never equal to `exclude`."""
    if len(sampler.cum) < 2:
        raise ValueError("negative sampling needs a vocabulary of at least 2 words")
    w, state = _draw_negative(sampler.cum, np.uint64(sampler.state), exclude)
    sampler.state = int(state)
    return int(w)


def init_model(vocab: Vocabulary, hasher: NgramHasher, config: TrainConfig, seed: int) -> EmbeddingModel:
    """Fresh model: input rows ~ Uniform(-1/dim, 1/dim), output rows zero."""
    v = len(vocab)
    rng = np.random.default_rng(seed)
    inp = rng.uniform(-1.0 / config.dim, 1.0 / config.dim, size=(v + hasher.bucket_count, config.dim)).astype(
        np.float32
    )
    out = np.zeros((v, config.dim), dtype=np.float32)
    header = ModelHeader(
        format_version=FORMAT_VERSION,
        dim=config.dim,
        vocab_size=v,
        bucket_count=hasher.bucket_count,
        ngram_order=hasher.ngram_order,
        train_config=config,
    )
    return EmbeddingModel(
        dim=config.dim, input_matrix=inp, output_matrix=out, vocab=vocab, hasher=hasher, header=header
    )


def _kernel_args(model: EmbeddingModel, config: TrainConfig):
    return dict(
        window=config.window,
        negatives=config.negatives,
        ngram_order=config.ngram_order,
        bucket=model.hasher.bucket_count,
        vocab_size=len(model.vocab),
        dropout_k=config.ngram_dropout_k,
        use_table=not config.exact_math,
        table=_SIG_TABLE,
    )


def train_step(
    model: EmbeddingModel,
    sentence_ids,
    lr: float,
    sampler: NegativeSampler,
    rng: SplitMix64,
    config: TrainConfig | None = None,
) -> float:
    """Run one SGD pass over a single sentence of token ids; returns its loss.

    Sentences with fewer than 2 tokens surviving subsampling contribute
    nothing and return 0.
    """
    if config is None:
        config = model.header.train_config
    ids = np.asarray(sentence_ids, dtype=np.int32)
    offsets = np.array([0, len(ids)], dtype=np.int64)
    order = np.zeros(1, dtype=np.int64)
    loss, _nt, _ntok, sub_state, neg_state = _run_sentences(
        model.input_matrix,
        model.output_matrix,
        _DUMMY64,
        _DUMMY64,
        False,
        ids,
        offsets,
        order,
        0,
        1,
        model.vocab.discard_prob,
        sampler.cum,
        lr0=float(lr),
        tokens_done0=0,
        total_tokens=0,
        sub_state=np.uint64(rng.state),
        neg_state=np.uint64(sampler.state),
        **_kernel_args(model, config),
    )
    rng.state = int(sub_state)
    sampler.state = int(neg_state)
    return float(loss)


def sentence_loss_and_grads(
    model: EmbeddingModel,
    sentence_ids,
    sampler: NegativeSampler,
    rng: SplitMix64,
    config: TrainConfig | None = None,
):
    """Loss plus dL/d(input), dL/d(output) at the current parameters.

    Leaves the model and the rng states untouched, so repeated calls see
    the same subsampling and negative draws; this is the hook the
    finite-difference checks probe.
    """
    if config is None:
        config = model.header.train_config
    ids = np.asarray(sentence_ids, dtype=np.int32)
    offsets = np.array([0, len(ids)], dtype=np.int64)
    order = np.zeros(1, dtype=np.int64)
    g_in = np.zeros_like(model.input_matrix, dtype=np.float64)
    g_out = np.zeros_like(model.output_matrix, dtype=np.float64)
    loss, _nt, _ntok, _s, _n = _run_sentences(
        model.input_matrix,
        model.output_matrix,
        g_in,
        g_out,
        True,
        ids,
        offsets,
        order,
        0,
        1,
        model.vocab.discard_prob,
        sampler.cum,
        lr0=0.0,
        tokens_done0=0,
        total_tokens=0,
        sub_state=np.uint64(rng.state),
        neg_state=np.uint64(sampler.state),
        **_kernel_args(model, config),
    )
    return float(loss), g_in, g_out


@dataclass
class TrainReport:
    """Optional run diagnostics filled in by `train`."""

    epoch_mean_loss: list = field(default_factory=list)
    progress: list = field(default_factory=list)  # (tokens, lr, mean loss)


def _pack_corpus(path: str, vocab: Vocabulary):
    """Second pass over the corpus: flat in-vocabulary id array + offsets."""
    flat: list[np.ndarray] = []
    lengths = [0]
    with open(path, encoding="utf-8") as f:
        for line in f:
            ids = vocab.to_ids(line.split())
            flat.append(np.asarray(ids, dtype=np.int32))
            lengths.append(len(ids))
    tokens = np.concatenate(flat) if flat else np.empty(0, dtype=np.int32)
    offsets = np.cumsum(np.asarray(lengths, dtype=np.int64))
    return tokens, offsets


def _iter_token_lines(path: str):
    with open(path, encoding="utf-8") as f:
        for line in f:
            toks = line.split()
            if toks:
                yield toks


def train(
    corpus_path: str,
    config: TrainConfig,
    report: TrainReport | None = None,
    progress_every: int = 1_000_000,
    progress_out=None,
) -> EmbeddingModel:
    """Train a model over a preprocessed sentence-per-line corpus file.

    The learning rate decays linearly from `config.lr0` to 0 over
    epochs * corpus-token total.  Workers process disjoint shards of a
    seed-shuffled sentence order and update the shared matrices without
    locks; `workers=1` is deterministic.
    """
    if progress_out is None:
        progress_out = sys.stderr
    vocab = build_vocab(_iter_token_lines(corpus_path), config.min_count, config.subsample_t)
    if len(vocab) < 2:
        raise ValueError("vocabulary too small for negative sampling (need >= 2 words)")
    hasher = NgramHasher(ngram_order=config.ngram_order, bucket_count=config.bucket_count, vocab_size=len(vocab))
    model = init_model(vocab, hasher, config, config.seed)
    sampler = NegativeSampler.from_counts(vocab.counts, config.seed)

    tokens, offsets = _pack_corpus(corpus_path, vocab)
    n_sentences = len(offsets) - 1
    corpus_tokens = int(tokens.shape[0])
    total_tokens = config.epochs * corpus_tokens
    order_arr = np.random.default_rng(seed_stream(config.seed, 0)).permutation(n_sentences).astype(np.int64)

    workers = min(config.workers, max(1, n_sentences))
    bounds = np.linspace(0, n_sentences, workers + 1).astype(np.int64)
    kargs = _kernel_args(model, config)
    chunk = 2000

    lock = threading.Lock()
    shared = {"done": 0, "next_report": progress_every}
    epoch_loss = [0.0]
    epoch_targets = [0]
    t0 = time.time()

    def run_block(lo, hi, states):
        sub_state, neg_state = states
        done0 = shared["done"]
        lr_now = config.lr0 * max(0.0, 1.0 - done0 / total_tokens) if total_tokens else config.lr0
        loss, nt, ntok, sub_state, neg_state = _run_sentences(
            model.input_matrix,
            model.output_matrix,
            _DUMMY64,
            _DUMMY64,
            False,
            tokens,
            offsets,
            order_arr,
            lo,
            hi,
            vocab.discard_prob,
            sampler.cum,
            lr0=config.lr0,
            tokens_done0=done0,
            total_tokens=total_tokens,
            sub_state=np.uint64(sub_state),
            neg_state=np.uint64(neg_state),
            **kargs,
        )
        with lock:
            shared["done"] += int(ntok)
            epoch_loss[0] += float(loss)
            epoch_targets[0] += int(nt)
            if shared["done"] >= shared["next_report"]:
                shared["next_report"] += progress_every
                mean = epoch_loss[0] / max(epoch_targets[0], 1)
                line = f"tokens={shared['done']} lr={lr_now:.6g} loss={mean:.6g}"
                print(line, file=progress_out)
                if report is not None:
                    report.progress.append((shared["done"], lr_now, mean))
        return int(sub_state), int(neg_state)

    def worker_loop(widx, lo, hi):
        states = worker_states[widx]
        for start in range(lo, hi, chunk):
            states = run_block(start, min(start + chunk, hi), states)
        worker_states[widx] = states

    worker_states = [
        (seed_stream(config.seed, 100 + 2 * w), seed_stream(config.seed, 101 + 2 * w)) for w in range(workers)
    ]

    for _epoch in range(config.epochs):
        epoch_loss[0] = 0.0
        epoch_targets[0] = 0
        if workers == 1:
            worker_loop(0, 0, n_sentences)
        else:
            threads = [
                threading.Thread(target=worker_loop, args=(w, int(bounds[w]), int(bounds[w + 1])))
                for w in range(workers)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        if report is not None:
            report.epoch_mean_loss.append(epoch_loss[0] / max(epoch_targets[0], 1))

    elapsed = max(time.time() - t0, 1e-9)
    mean = epoch_loss[0] / max(epoch_targets[0], 1)
    lr_final = config.lr0 * max(0.0, 1.0 - shared["done"] / total_tokens) if total_tokens else 0.0
    print(f"tokens={shared['done']} lr={lr_final:.6g} loss={mean:.6g}", file=progress_out)
    print(f"trained {shared['done']} tokens in {elapsed:.1f}s ({shared['done'] / elapsed:.0f} tokens/s)", file=progress_out)
    return model


_DUMMY64 = np.zeros((1, 1), dtype=np.float64)

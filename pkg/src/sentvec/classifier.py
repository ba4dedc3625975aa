"""Multi-label sentence classifier over a fixed 10-label space.

Per token the input channel is a trainable word embedding, optionally
concatenated with one-hot encodings of two categorical tag channels
(e.g. part-of-speech and chunk) when the dataset provides them.  A
width-3 convolution with ReLU and global max pooling yields a per-filter
feature vector, which is concatenated with the (frozen) sentence
embedding and passed through dense layers 256 -> 128 -> 10 with sigmoid
outputs.  Training minimizes mean binary cross-entropy with Adam and
stops early when dev loss fails to improve for `patience` epochs.

Forward/backward passes are hand-written numpy in float64.  Only the
argmax position of each filter receives gradient through the max pool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import EmbeddingModel
from .prep import PrepConfig, preprocess
from .sidecar import read_sidecar, write_sidecar

CLF_MAGIC = b"BSVC"
N_LABELS = 10
CONV_WINDOW = 3


@dataclass
class LabeledSentence:
    tokens: list[str]
    labels: set[int]
    pos_tags: list[str] | None = None
    chunk_tags: list[str] | None = None


@dataclass(frozen=True)
class ClfHyper:
    lr: float = 7e-4
    batch: int = 64
    patience: int = 10
    max_epochs: int = 200
    threshold: float = 0.5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0 or self.batch < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ValueError("lr, batch, patience and max_epochs must be positive")


@dataclass
class ConvNet:
    word_index: dict  # token -> row (0 reserved for unknown words)
    emb: np.ndarray  # (n_words + 1, d_w)
    conv_w: np.ndarray  # (filters, 3 * channel_dim)
    conv_b: np.ndarray
    dense_w: list  # [(feat, 256), (256, 128), (128, 10)]
    dense_b: list
    pos_index: dict | None = None
    chunk_index: dict | None = None
    use_sentvec: bool = True
    sent_dim: int = 0

    @property
    def d_w(self) -> int:
        return self.emb.shape[1]

    @property
    def n_filters(self) -> int:
        return self.conv_w.shape[0]

    @property
    def channel_dim(self) -> int:
        return self.conv_w.shape[1] // CONV_WINDOW

    def params(self) -> dict:
        out = {"emb": self.emb, "conv_w": self.conv_w, "conv_b": self.conv_b}
        for i, (w, b) in enumerate(zip(self.dense_w, self.dense_b)):
            out[f"dense_w{i}"] = w
            out[f"dense_b{i}"] = b
        return out

    def clone(self) -> "ConvNet":
        return ConvNet(
            word_index=self.word_index,
            emb=self.emb.copy(),
            conv_w=self.conv_w.copy(),
            conv_b=self.conv_b.copy(),
            dense_w=[w.copy() for w in self.dense_w],
            dense_b=[b.copy() for b in self.dense_b],
            pos_index=self.pos_index,
            chunk_index=self.chunk_index,
            use_sentvec=self.use_sentvec,
            sent_dim=self.sent_dim,
        )


def load_labeled(path: str) -> list[LabeledSentence]:
    """TSV: `sentence TAB comma-separated-label-ids [TAB pos-tags TAB chunk-tags]`.

    Sentences are whitespace-tokenized as-is so that optional tag columns
    stay aligned with the tokens.
    """
    out: list[LabeledSentence] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) not in (2, 4):
                raise ValueError(f"{path}:{lineno}: expected 2 or 4 columns, got {len(cols)}")
            tokens = cols[0].split()
            if not tokens:
                raise ValueError(f"{path}:{lineno}: empty sentence")
            try:
                labels = {int(x) for x in cols[1].split(",")}
            except ValueError:
                raise ValueError(f"{path}:{lineno}: unparsable label list {cols[1]!r}") from None
            if not labels or not labels.issubset(range(N_LABELS)):
                raise ValueError(f"{path}:{lineno}: labels must be a non-empty subset of 0..{N_LABELS - 1}")
            pos = chunk = None
            if len(cols) == 4:
                pos = cols[2].split()
                chunk = cols[3].split()
                if len(pos) != len(tokens) or len(chunk) != len(tokens):
                    raise ValueError(f"{path}:{lineno}: tag count does not match token count")
            out.append(LabeledSentence(tokens=tokens, labels=labels, pos_tags=pos, chunk_tags=chunk))
    return out


def split_dataset(dataset: list, seed: int, ratios=(0.6, 0.2, 0.2)) -> tuple[list, list, list]:
    """Seeded shuffle, then contiguous cut at the 60% and 80% boundaries."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    n = len(dataset)
    perm = np.random.default_rng(seed).permutation(n)
    a = int(ratios[0] * n)
    b = int((ratios[0] + ratios[1]) * n)
    pick = lambda idx: [dataset[i] for i in idx]
    return pick(perm[:a]), pick(perm[a:b]), pick(perm[b:])


def load_word_vectors(path: str) -> dict[str, np.ndarray]:
    """Plain-text word vectors: optional `N dim` header, then `word v1..vd`."""
    vecs: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.rstrip().split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2:
                continue
            vecs[parts[0]] = np.asarray([float(x) for x in parts[1:]], dtype=np.float64)
    return vecs


def init_clf(
    train: list[LabeledSentence],
    sent_dim: int,
    seed: int,
    d_w: int = 200,
    n_filters: int = 100,
    dense=(256, 128),
    use_sentvec: bool = True,
    word_vectors: dict | None = None,
) -> ConvNet:
    """Build the net from the training split: word index (row 0 = unknown),
    tag one-hot channels when every training sentence carries tags."""
    words = sorted({t.lower() for s in train for t in s.tokens})
    word_index = {w: i + 1 for i, w in enumerate(words)}
    use_tags = all(s.pos_tags is not None and s.chunk_tags is not None for s in train) and len(train) > 0
    pos_index = chunk_index = None
    if use_tags:
        pos_index = {t: i for i, t in enumerate(sorted({t for s in train for t in s.pos_tags}))}
        chunk_index = {t: i for i, t in enumerate(sorted({t for s in train for t in s.chunk_tags}))}
    channel = d_w + (len(pos_index) + len(chunk_index) if use_tags else 0)

    rng = np.random.default_rng(seed)
    emb = rng.normal(0.0, 0.1, size=(len(words) + 1, d_w))
    if word_vectors:
        for w, i in word_index.items():
            vec = word_vectors.get(w)
            if vec is not None and len(vec) == d_w:
                emb[i] = vec

    def xavier(fan_in, fan_out):
        return rng.normal(0.0, math.sqrt(2.0 / (fan_in + fan_out)), size=(fan_in, fan_out))

    conv_w = xavier(CONV_WINDOW * channel, n_filters).T.copy()
    conv_b = np.zeros(n_filters)
    feat = n_filters + (sent_dim if use_sentvec else 0)
    sizes = [feat, *dense, N_LABELS]
    dense_w = [xavier(a, b) for a, b in zip(sizes[:-1], sizes[1:])]
    dense_b = [np.zeros(b) for b in sizes[1:]]
    return ConvNet(
        word_index=word_index,
        emb=emb,
        conv_w=conv_w,
        conv_b=conv_b,
        dense_w=dense_w,
        dense_b=dense_b,
        pos_index=pos_index,
        chunk_index=chunk_index,
        use_sentvec=use_sentvec,
        sent_dim=sent_dim if use_sentvec else 0,
    )


@dataclass
class EncodedSentence:
    token_ids: np.ndarray  # int64, -1 = padding
    tag_hots: np.ndarray | None  # (len, n_pos + n_chunk) one-hot block or None
    sent_vec: np.ndarray  # float64 (sent_dim,), zeros when unused
    y: np.ndarray  # float64 (10,)


def encode_sentence(net: ConvNet, sentence: LabeledSentence, sent_vec: np.ndarray | None) -> EncodedSentence:
    ids = np.array([net.word_index.get(t.lower(), 0) for t in sentence.tokens], dtype=np.int64)
    n_tag = net.channel_dim - net.d_w
    hots = None
    if n_tag > 0:
        hots = np.zeros((len(ids), n_tag))
        n_pos = len(net.pos_index)
        if sentence.pos_tags is not None:
            for t, tag in enumerate(sentence.pos_tags):
                j = net.pos_index.get(tag)
                if j is not None:
                    hots[t, j] = 1.0
            for t, tag in enumerate(sentence.chunk_tags):
                j = net.chunk_index.get(tag)
                if j is not None:
                    hots[t, n_pos + j] = 1.0
    if net.use_sentvec:
        if sent_vec is None:
            raise ValueError("net expects a sentence vector")
        sv = np.asarray(sent_vec, dtype=np.float64)
    else:
        sv = np.zeros(0)
    y = np.zeros(N_LABELS)
    for lab in sentence.labels:
        y[lab] = 1.0
    return EncodedSentence(token_ids=ids, tag_hots=hots, sent_vec=sv, y=y)


def encode_dataset(
    net: ConvNet,
    sentences: list[LabeledSentence],
    model: EmbeddingModel | None,
    prep_config: PrepConfig | None = None,
) -> list[EncodedSentence]:
    cfg = prep_config if prep_config is not None else PrepConfig()
    out = []
    for s in sentences:
        sv = None
        if net.use_sentvec:
            if model is None:
                raise ValueError("sentence vectors requested but no embedding model given")
            sv = model.sentence_vector(preprocess(s.tokens, cfg)).astype(np.float64)
        out.append(encode_sentence(net, s, sv))
    return out


def _channels(net: ConvNet, enc: EncodedSentence) -> np.ndarray:
    """(padded_len, channel_dim) input matrix; short sentences get zero rows."""
    n = max(len(enc.token_ids), CONV_WINDOW)
    x = np.zeros((n, net.channel_dim))
    for t, tid in enumerate(enc.token_ids):
        if tid >= 0:
            x[t, : net.d_w] = net.emb[tid]
    if enc.tag_hots is not None:
        x[: len(enc.token_ids), net.d_w :] = enc.tag_hots
    return x


def _forward(net: ConvNet, enc: EncodedSentence):
    x = _channels(net, enc)
    n_win = x.shape[0] - CONV_WINDOW + 1
    windows = np.stack([x[j : j + CONV_WINDOW].ravel() for j in range(n_win)])
    zc = windows @ net.conv_w.T + net.conv_b
    ac = np.maximum(zc, 0.0)
    pooled = ac.max(axis=0)
    amax = ac.argmax(axis=0)
    feat = np.concatenate([pooled, enc.sent_vec]) if net.use_sentvec else pooled
    zs, acts = [], [feat]
    a = feat
    for w, b in zip(net.dense_w[:-1], net.dense_b[:-1]):
        z = a @ w + b
        a = np.maximum(z, 0.0)
        zs.append(z)
        acts.append(a)
    logits = a @ net.dense_w[-1] + net.dense_b[-1]
    probs = 1.0 / (1.0 + np.exp(-logits))
    cache = (x, windows, zc, amax, zs, acts, logits)
    return probs, cache


def clf_forward(
    net: ConvNet,
    sentence: LabeledSentence,
    sentence_vec: np.ndarray | None = None,
    train_mode: bool = False,
    rng=None,
) -> np.ndarray:
    """Probabilities for the 10 labels.  No dropout in this head, so
    train and eval mode coincide."""
    enc = encode_sentence(net, sentence, sentence_vec)
    probs, _ = _forward(net, enc)
    return probs


def _bce_from_logits(logits: np.ndarray, y: np.ndarray) -> float:
    # mean over labels; stable for large |logit|
    return float(np.mean(np.maximum(logits, 0.0) - logits * y + np.log1p(np.exp(-np.abs(logits)))))


def batch_loss_and_grads(net: ConvNet, batch: list[EncodedSentence]):
    """Mean BCE over the batch plus gradients for every parameter."""
    grads = {k: np.zeros_like(v) for k, v in net.params().items()}
    total = 0.0
    inv_n = 1.0 / len(batch)
    n_dense = len(net.dense_w)
    for enc in batch:
        probs, (x, windows, zc, amax, zs, acts, logits) = _forward(net, enc)
        total += _bce_from_logits(logits, enc.y)
        dlogits = (probs - enc.y) / N_LABELS * inv_n
        grads[f"dense_w{n_dense - 1}"] += np.outer(acts[-1], dlogits)
        grads[f"dense_b{n_dense - 1}"] += dlogits
        da = net.dense_w[-1] @ dlogits
        for layer in range(n_dense - 2, -1, -1):
            dz = da * (zs[layer] > 0.0)
            grads[f"dense_w{layer}"] += np.outer(acts[layer], dz)
            grads[f"dense_b{layer}"] += dz
            da = net.dense_w[layer] @ dz
        dpooled = da[: net.n_filters]
        dzc = np.zeros_like(zc)
        for f in range(net.n_filters):
            j = amax[f]
            if zc[j, f] > 0.0:
                dzc[j, f] = dpooled[f]
        grads["conv_w"] += dzc.T @ windows
        grads["conv_b"] += dzc.sum(axis=0)
        dwin = dzc @ net.conv_w
        dx = np.zeros_like(x)
        for j in range(dwin.shape[0]):
            dx[j : j + CONV_WINDOW] += dwin[j].reshape(CONV_WINDOW, net.channel_dim)
        for t, tid in enumerate(enc.token_ids):
            if tid >= 0:
                grads["emb"][tid] += dx[t, : net.d_w]
    return total * inv_n, grads


def dev_loss(net: ConvNet, encs: list[EncodedSentence]) -> float:
    total = 0.0
    for enc in encs:
        _, cache = _forward(net, enc)
        total += _bce_from_logits(cache[-1], enc.y)
    return total / len(encs)


class AdamState:
    def __init__(self, params: dict):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def update(self, params: dict, grads: dict, hyper: ClfHyper):
        self.t += 1
        b1, b2 = hyper.beta1, hyper.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            p -= hyper.lr * (self.m[k] / corr1) / (np.sqrt(self.v[k] / corr2) + hyper.eps)


@dataclass
class ClfHistory:
    train_loss: list = field(default_factory=list)
    dev_loss: list = field(default_factory=list)
    stopped_epoch: int = 0


def train_classifier(
    train: list[LabeledSentence],
    dev: list[LabeledSentence],
    model: EmbeddingModel | None,
    hyper: ClfHyper,
    prep_config: PrepConfig | None = None,
    net: ConvNet | None = None,
    d_w: int = 200,
    n_filters: int = 100,
    dense=(256, 128),
    use_sentvec: bool = True,
    word_vectors: dict | None = None,
    history: ClfHistory | None = None,
) -> ConvNet:
    """Adam on mean BCE with early stopping on dev loss; returns the
    best-dev snapshot."""
    if not train or not dev:
        raise ValueError("training and dev sets must be non-empty")
    if net is None:
        sent_dim = model.dim if (use_sentvec and model is not None) else 0
        net = init_clf(
            train,
            sent_dim=sent_dim,
            seed=hyper.seed,
            d_w=d_w,
            n_filters=n_filters,
            dense=dense,
            use_sentvec=use_sentvec,
            word_vectors=word_vectors,
        )
    train_enc = encode_dataset(net, train, model, prep_config)
    dev_enc = encode_dataset(net, dev, model, prep_config)

    rng = np.random.default_rng(hyper.seed)
    params = net.params()
    adam = AdamState(params)
    best_loss = np.inf
    best = net.clone()
    bad_epochs = 0
    for epoch in range(hyper.max_epochs):
        perm = rng.permutation(len(train_enc))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(perm), hyper.batch):
            batch = [train_enc[i] for i in perm[start : start + hyper.batch]]
            loss, grads = batch_loss_and_grads(net, batch)
            adam.update(params, grads, hyper)
            epoch_loss += loss
            n_batches += 1
        dl = dev_loss(net, dev_enc)
        if history is not None:
            history.train_loss.append(epoch_loss / max(n_batches, 1))
            history.dev_loss.append(dl)
            history.stopped_epoch = epoch + 1
        if dl < best_loss:
            best_loss = dl
            best = net.clone()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= hyper.patience:
                break
    return best


def predict_labels(
    net: ConvNet,
    sentence: LabeledSentence,
    sentence_vec: np.ndarray | None = None,
    threshold: float = 0.5,
) -> set[int]:
    """{i : p_i >= threshold}, falling back to the argmax label when empty."""
    probs = clf_forward(net, sentence, sentence_vec)
    chosen = {i for i in range(N_LABELS) if probs[i] >= threshold}
    if not chosen:
        chosen = {int(np.argmax(probs))}
    return chosen


def example_metrics(predictions: list[set], gold: list[set]) -> dict:
    """Example-based precision/recall/F1 averaged over examples.

    Uses exactly-rounded summation, so the result is bit-identical under
    permutation of the examples.
    """
    if len(predictions) != len(gold):
        raise ValueError("predictions and gold must have equal length")
    ps, rs, fs = [], [], []
    for pred, g in zip(predictions, gold):
        if not g:
            raise ValueError("gold label sets must be non-empty")
        inter = len(pred & g)
        ps.append(inter / len(pred) if pred else 0.0)
        rs.append(inter / len(g))
        fs.append(2.0 * inter / (len(g) + len(pred)))
    n = len(gold)
    return {"precision": math.fsum(ps) / n, "recall": math.fsum(rs) / n, "f1": math.fsum(fs) / n}


def evaluate_classifier(
    net: ConvNet,
    sentences: list[LabeledSentence],
    model: EmbeddingModel | None,
    hyper: ClfHyper,
    prep_config: PrepConfig | None = None,
) -> dict:
    encs = encode_dataset(net, sentences, model, prep_config)
    preds = []
    for enc, s in zip(encs, sentences):
        probs, _ = _forward(net, enc)
        chosen = {i for i in range(N_LABELS) if probs[i] >= hyper.threshold}
        if not chosen:
            chosen = {int(np.argmax(probs))}
        preds.append(chosen)
    return example_metrics(preds, [s.labels for s in sentences])


def save_clf(net: ConvNet, path: str) -> None:
    meta = {
        "words": sorted(net.word_index, key=net.word_index.get),
        "pos_tags": sorted(net.pos_index, key=net.pos_index.get) if net.pos_index is not None else None,
        "chunk_tags": sorted(net.chunk_index, key=net.chunk_index.get) if net.chunk_index is not None else None,
        "use_sentvec": net.use_sentvec,
        "sent_dim": net.sent_dim,
        "n_dense": len(net.dense_w),
    }
    arrays = {"emb": net.emb, "conv_w": net.conv_w, "conv_b": net.conv_b}
    for i, (w, b) in enumerate(zip(net.dense_w, net.dense_b)):
        arrays[f"dense_w{i}"] = w
        arrays[f"dense_b{i}"] = b
    write_sidecar(path, CLF_MAGIC, meta, arrays)


def load_clf(path: str) -> ConvNet:
    meta, arrays = read_sidecar(path, CLF_MAGIC)
    n_dense = meta["n_dense"]
    return ConvNet(
        word_index={w: i + 1 for i, w in enumerate(meta["words"])},
        emb=arrays["emb"],
        conv_w=arrays["conv_w"],
        conv_b=arrays["conv_b"],
        dense_w=[arrays[f"dense_w{i}"] for i in range(n_dense)],
        dense_b=[arrays[f"dense_b{i}"] for i in range(n_dense)],
        pos_index={t: i for i, t in enumerate(meta["pos_tags"])} if meta["pos_tags"] is not None else None,
        chunk_index={t: i for i, t in enumerate(meta["chunk_tags"])} if meta["chunk_tags"] is not None else None,
        use_sentvec=meta["use_sentvec"],
        sent_dim=meta["sent_dim"],
    )

"""Supervised similarity head: pair features + a small MLP regressor.

Features for a sentence pair (u, v) are the length-(4d+1) vector
[u; v; |u-v|; u*v; u.v].  The net is (4d+1) -> 256 -> 128 -> 64 -> 1
with ReLU hidden layers, inverted dropout (rate 0.5) on hidden
activations during training, and an unbounded linear output.  Training
is plain minibatch SGD on MSE plus an L2 penalty on the weights; the
snapshot with the lowest validation MSE is returned.

Backpropagation is written out by hand in numpy; everything runs in
float64 so the finite-difference checks are meaningful.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .model import EmbeddingModel
from .prep import PrepConfig, prep_sentence
from .sidecar import read_sidecar, write_sidecar
from .simeval import PairDataset, pearson, stratified_folds

REG_MAGIC = b"BSVR"
HIDDEN_SIZES = (256, 128, 64)


@dataclass(frozen=True)
class RegHyper:
    lr: float = 0.001
    batch: int = 8
    epochs: int = 1500
    l2_lambda: float = 1e-4
    seed: int = 0
    dropout: bool = True

    def __post_init__(self):
        if self.lr <= 0 or self.batch < 1 or self.epochs < 1 or self.l2_lambda < 0:
            raise ValueError("lr, batch and epochs must be positive; l2_lambda non-negative")


@dataclass
class RegressionNet:
    weights: list  # per layer, shape (fan_in, fan_out)
    biases: list  # per layer, shape (fan_out,)
    dropout_rate: float = 0.5
    l2_lambda: float = 1e-4

    @property
    def feature_dim(self) -> int:
        return self.weights[0].shape[0]

    def clone(self) -> "RegressionNet":
        return RegressionNet(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            dropout_rate=self.dropout_rate,
            l2_lambda=self.l2_lambda,
        )


def pair_features(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """[u; v; |u-v|; u*v; u.v], a vector of length 4*dim + 1."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("pair_features requires equal dimensions")
    return np.concatenate([u, v, np.abs(u - v), u * v, [np.dot(u, v)]])


def init_net(
    d: int,
    seed: int,
    hidden=HIDDEN_SIZES,
    dropout_rate: float = 0.5,
    l2_lambda: float = 1e-4,
) -> RegressionNet:
    """Xavier-normal weights (variance 2/(fan_in+fan_out)), biases 0.01."""
    sizes = [4 * d + 1, *hidden, 1]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        std = np.sqrt(2.0 / (fan_in + fan_out))
        weights.append(rng.normal(0.0, std, size=(fan_in, fan_out)))
        biases.append(np.full(fan_out, 0.01))
    return RegressionNet(weights=weights, biases=biases, dropout_rate=dropout_rate, l2_lambda=l2_lambda)


def _forward_batch(net: RegressionNet, x: np.ndarray, train_mode: bool, rng=None):
    """Returns (predictions, cache) for a (n, features) batch."""
    n_hidden = len(net.weights) - 1
    a = x
    zs, acts, masks = [], [x], []
    for layer in range(n_hidden):
        z = a @ net.weights[layer] + net.biases[layer]
        a = np.maximum(z, 0.0)
        if train_mode and net.dropout_rate > 0.0:
            keep = 1.0 - net.dropout_rate
            mask = (rng.random(a.shape) < keep) / keep
            a = a * mask
        else:
            mask = None
        zs.append(z)
        acts.append(a)
        masks.append(mask)
    out = a @ net.weights[-1] + net.biases[-1]
    return out[:, 0], (zs, acts, masks)


def forward(net: RegressionNet, features: np.ndarray, train_mode: bool = False, rng=None) -> float:
    """Predict for a single feature vector."""
    x = np.asarray(features, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != net.feature_dim:
        raise ValueError(f"expected {net.feature_dim} features, got {x.shape[1]}")
    pred, _ = _forward_batch(net, x, train_mode, rng)
    return float(pred[0])


def _backward_batch(net: RegressionNet, x: np.ndarray, cache, dpred: np.ndarray):
    """Gradients of the data loss wrt every weight and bias."""
    zs, acts, masks = cache
    n_hidden = len(net.weights) - 1
    g_w = [None] * len(net.weights)
    g_b = [None] * len(net.weights)
    delta = dpred[:, None]  # (n, 1)
    g_w[-1] = acts[-1].T @ delta
    g_b[-1] = delta.sum(axis=0)
    da = delta @ net.weights[-1].T
    for layer in range(n_hidden - 1, -1, -1):
        if masks[layer] is not None:
            da = da * masks[layer]
        dz = da * (zs[layer] > 0.0)
        g_w[layer] = acts[layer].T @ dz
        g_b[layer] = dz.sum(axis=0)
        if layer > 0:
            da = dz @ net.weights[layer].T
    return g_w, g_b


def batch_loss_and_grads(net: RegressionNet, x: np.ndarray, y: np.ndarray, train_mode: bool = False, rng=None):
    """MSE + l2*sum(W^2) over a batch, with analytic parameter gradients."""
    preds, cache = _forward_batch(net, x, train_mode, rng)
    err = preds - y
    n = len(y)
    loss = float(np.mean(err**2))
    g_w, g_b = _backward_batch(net, x, cache, 2.0 * err / n)
    if net.l2_lambda > 0.0:
        for layer, w in enumerate(net.weights):
            loss += net.l2_lambda * float(np.sum(w * w))
            g_w[layer] = g_w[layer] + 2.0 * net.l2_lambda * w
    return loss, g_w, g_b


def _mse(net: RegressionNet, x: np.ndarray, y: np.ndarray) -> float:
    preds, _ = _forward_batch(net, x, train_mode=False)
    return float(np.mean((preds - y) ** 2))


@dataclass
class FitHistory:
    val_mse: list = field(default_factory=list)


def fit(
    net: RegressionNet,
    x: np.ndarray,
    y: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    hyper: RegHyper,
    history: FitHistory | None = None,
) -> RegressionNet:
    """Minibatch SGD; mutates `net` in place and returns the best-validation
    snapshot (which may differ from the final state of `net`)."""
    if len(y) == 0 or len(y_val) == 0:
        raise ValueError("training and validation sets must be non-empty")
    rng = np.random.default_rng(hyper.seed)
    net.l2_lambda = hyper.l2_lambda
    best_mse = np.inf
    best = net.clone()
    for _epoch in range(hyper.epochs):
        perm = rng.permutation(len(y))
        for start in range(0, len(y), hyper.batch):
            idx = perm[start : start + hyper.batch]
            _loss, g_w, g_b = batch_loss_and_grads(net, x[idx], y[idx], train_mode=hyper.dropout, rng=rng)
            for layer in range(len(net.weights)):
                net.weights[layer] -= hyper.lr * g_w[layer]
                net.biases[layer] -= hyper.lr * g_b[layer]
        val_mse = _mse(net, x_val, y_val)
        if history is not None:
            history.val_mse.append(val_mse)
        if val_mse < best_mse:
            best_mse = val_mse
            best = net.clone()
    return best


def featurize(model: EmbeddingModel, dataset: PairDataset, prep_config: PrepConfig | None = None):
    """(n, 4d+1) feature matrix and gold vector for a pair dataset."""
    cfg = prep_config if prep_config is not None else PrepConfig()
    rows = []
    for pair in dataset.pairs:
        u = model.sentence_vector(prep_sentence(pair.s1, cfg))
        v = model.sentence_vector(prep_sentence(pair.s2, cfg))
        rows.append(pair_features(u, v))
    return np.asarray(rows, dtype=np.float64), dataset.gold()


def _val_split(indices: np.ndarray, fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    indices = np.asarray(indices)
    perm = rng.permutation(len(indices))
    n_val = max(1, int(round(fraction * len(indices))))
    return indices[perm[n_val:]], indices[perm[:n_val]]


def train_regressor(
    train: PairDataset,
    val: PairDataset,
    model: EmbeddingModel,
    hyper: RegHyper,
    prep_config: PrepConfig | None = None,
    history: FitHistory | None = None,
) -> RegressionNet:
    if len(train) == 0 or len(val) == 0:
        raise ValueError("training and validation sets must be non-empty")
    x, y = featurize(model, train, prep_config)
    x_val, y_val = featurize(model, val, prep_config)
    net = init_net(model.dim, hyper.seed, dropout_rate=0.5 if hyper.dropout else 0.0, l2_lambda=hyper.l2_lambda)
    return fit(net, x, y, x_val, y_val, hyper, history)


def evaluate_supervised(
    dataset: PairDataset,
    model: EmbeddingModel,
    hyper: RegHyper,
    protocol: str,
    test_dataset: PairDataset | None = None,
    prep_config: PrepConfig | None = None,
    k: int = 10,
    val_fraction: float = 0.2,
) -> dict:
    """Either k-fold stratified cross-validation ("cv") or a fixed
    train/test split ("fixed", `test_dataset` required).  20% of each
    training portion is held out for snapshot selection."""
    if protocol == "cv":
        x, y = featurize(model, dataset, prep_config)
        plan = stratified_folds(dataset, k=k, seed=hyper.seed)
        rng = np.random.default_rng(hyper.seed)
        rs = []
        for fold in plan.folds:
            test_idx = np.asarray(fold)
            mask = np.ones(len(dataset), dtype=bool)
            mask[test_idx] = False
            train_idx = np.nonzero(mask)[0]
            tr, va = _val_split(train_idx, val_fraction, rng)
            net = init_net(model.dim, hyper.seed, dropout_rate=0.5 if hyper.dropout else 0.0, l2_lambda=hyper.l2_lambda)
            net = fit(net, x[tr], y[tr], x[va], y[va], hyper)
            preds, _ = _forward_batch(net, x[test_idx], train_mode=False)
            rs.append(pearson(preds, y[test_idx]))
        return {"protocol": "cv", "folds": rs, "mean": float(np.mean(rs)), "n": len(dataset)}
    if protocol == "fixed":
        if test_dataset is None:
            raise ValueError("fixed protocol requires a test dataset")
        x, y = featurize(model, dataset, prep_config)
        x_test, y_test = featurize(model, test_dataset, prep_config)
        rng = np.random.default_rng(hyper.seed)
        tr, va = _val_split(np.arange(len(dataset)), val_fraction, rng)
        net = init_net(model.dim, hyper.seed, dropout_rate=0.5 if hyper.dropout else 0.0, l2_lambda=hyper.l2_lambda)
        net = fit(net, x[tr], y[tr], x[va], y[va], hyper)
        preds, _ = _forward_batch(net, x_test, train_mode=False)
        r = pearson(preds, y_test)
        return {"protocol": "fixed", "folds": [r], "mean": r, "n_train": len(dataset), "n_test": len(test_dataset)}
    raise ValueError(f"unknown protocol {protocol!r} (expected 'cv' or 'fixed')")


def save_net(net: RegressionNet, path: str) -> None:
    meta = {
        "dropout_rate": net.dropout_rate,
        "l2_lambda": net.l2_lambda,
        "sizes": [int(w.shape[0]) for w in net.weights] + [1],
    }
    arrays = {}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    write_sidecar(path, REG_MAGIC, meta, arrays)


def load_net(path: str) -> RegressionNet:
    meta, arrays = read_sidecar(path, REG_MAGIC)
    n_layers = len(arrays) // 2
    return RegressionNet(
        weights=[arrays[f"w{i}"] for i in range(n_layers)],
        biases=[arrays[f"b{i}"] for i in range(n_layers)],
        dropout_rate=meta["dropout_rate"],
        l2_lambda=meta["l2_lambda"],
    )

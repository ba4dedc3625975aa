import numpy as np
import pytest

import sentvec.classifier as clf
from sentvec.classifier import (
    ClfHistory,
    ClfHyper,
    ConvNet,
    LabeledSentence,
    batch_loss_and_grads,
    clf_forward,
    encode_dataset,
    encode_sentence,
    evaluate_classifier,
    example_metrics,
    init_clf,
    load_clf,
    load_labeled,
    predict_labels,
    save_clf,
    split_dataset,
    train_classifier,
    _forward,
)

from test_model import tiny_model


def sentences_from(tokens_list, labels_list):
    return [LabeledSentence(tokens=t, labels=set(l)) for t, l in zip(tokens_list, labels_list)]


class TestSplitDataset:
    def test_ten_items(self):
        data = list(range(10))
        tr, dev, te = split_dataset(data, seed=0)
        assert (len(tr), len(dev), len(te)) == (6, 2, 2)

    def test_partition(self):
        data = list(range(37))
        tr, dev, te = split_dataset(data, seed=3)
        assert sorted(tr + dev + te) == data
        assert not (set(tr) & set(dev)) and not (set(tr) & set(te)) and not (set(dev) & set(te))

    def test_seed_determinism(self):
        data = list(range(50))
        assert split_dataset(data, seed=9) == split_dataset(data, seed=9)
        assert split_dataset(data, seed=9) != split_dataset(data, seed=10)

    def test_hallmarks_scale_sizes(self):
        data = list(range(14_919))
        tr, dev, te = split_dataset(data, seed=1)
        assert (len(tr), len(dev), len(te)) == (8951, 2984, 2984)


class TestLoadLabeled:
    def test_basic(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("craf is essential\t0,3\nkras driven tumors\t7\n", encoding="utf-8")
        data = load_labeled(str(p))
        assert data[0].labels == {0, 3}
        assert data[1].tokens == ["kras", "driven", "tumors"]

    def test_with_tags(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("craf is\t1\tNN VBZ\tB-NP B-VP\n", encoding="utf-8")
        data = load_labeled(str(p))
        assert data[0].pos_tags == ["NN", "VBZ"]
        assert data[0].chunk_tags == ["B-NP", "B-VP"]

    def test_bad_label_names_line(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("fine\t1\nbad\t12\n", encoding="utf-8")
        with pytest.raises(ValueError, match=":2"):
            load_labeled(str(p))

    def test_tag_count_mismatch(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("two tokens\t1\tNN\tB-NP\n", encoding="utf-8")
        with pytest.raises(ValueError, match="tag count"):
            load_labeled(str(p))

    def test_wrong_columns(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("a\t1\tonly-three\n", encoding="utf-8")
        with pytest.raises(ValueError, match=":1"):
            load_labeled(str(p))


def stub_net(logits, d_w=4, n_filters=2):
    """Zero net whose outputs are exactly sigmoid(logits)."""
    train = sentences_from([["tok"]], [{0}])
    net = init_clf(train, sent_dim=0, seed=0, d_w=d_w, n_filters=n_filters, dense=(4,), use_sentvec=False)
    net.emb[:] = 0.0
    net.conv_w[:] = 0.0
    net.conv_b[:] = 0.0
    for w in net.dense_w:
        w[:] = 0.0
    for b in net.dense_b:
        b[:] = 0.0
    net.dense_b[-1][:] = np.asarray(logits, dtype=np.float64)
    return net


class TestForward:
    def test_zero_net_gives_half(self):
        net = stub_net(np.zeros(10))
        probs = clf_forward(net, LabeledSentence(["tok", "tok"], {0}))
        np.testing.assert_array_equal(probs, np.full(10, 0.5))

    def test_output_shape_and_range(self):
        train = sentences_from([["a", "b", "c"], ["d", "e"]], [{1}, {2}])
        net = init_clf(train, sent_dim=0, seed=1, d_w=6, n_filters=4, dense=(8,), use_sentvec=False)
        probs = clf_forward(net, LabeledSentence(["a", "d", "b"], {1}))
        assert probs.shape == (10,)
        assert np.all((probs > 0) & (probs < 1))

    def test_short_sentence_padded(self):
        train = sentences_from([["a"]], [{0}])
        net = init_clf(train, sent_dim=0, seed=2, d_w=4, n_filters=3, dense=(4,), use_sentvec=False)
        probs = clf_forward(net, LabeledSentence(["a"], {0}))
        assert probs.shape == (10,)

    def test_pooled_invariant_to_trigram_position(self):
        # one distinctive trigram among identical fillers: shifting it inside
        # the sentence permutes the window values but not their max
        vocab = [["f", "m1", "m2", "m3"]]
        net = init_clf(sentences_from(vocab, [{0}]), sent_dim=0, seed=3, d_w=5, n_filters=6, dense=(4,), use_sentvec=False)
        # the trigram needs >= 2 fillers on each side so every partial-overlap
        # window exists at both positions
        a = LabeledSentence(["f", "f", "m1", "m2", "m3", "f", "f", "f", "f", "f"], {0})
        b = LabeledSentence(["f", "f", "f", "f", "f", "m1", "m2", "m3", "f", "f"], {0})
        _, cache_a = _forward(net, encode_sentence(net, a, None))
        _, cache_b = _forward(net, encode_sentence(net, b, None))
        pooled_a = cache_a[2].max(axis=0)
        pooled_b = cache_b[2].max(axis=0)
        np.testing.assert_array_equal(np.maximum(pooled_a, 0), np.maximum(pooled_b, 0))

    def test_train_mode_equals_eval_mode(self):
        train = sentences_from([["a", "b", "c"]], [{0}])
        net = init_clf(train, sent_dim=0, seed=4, d_w=4, n_filters=3, dense=(4,), use_sentvec=False)
        s = LabeledSentence(["a", "c", "b"], {0})
        np.testing.assert_array_equal(
            clf_forward(net, s, train_mode=True, rng=np.random.default_rng(0)),
            clf_forward(net, s, train_mode=False),
        )

    def test_sentvec_channel_changes_output(self):
        model = tiny_model(words=("a", "b", "c"), bucket=8, dim=4)
        train = sentences_from([["a", "b", "c"]], [{0}])
        net = init_clf(train, sent_dim=4, seed=5, d_w=4, n_filters=3, dense=(4,), use_sentvec=True)
        s = LabeledSentence(["a", "b"], {0})
        p1 = clf_forward(net, s, sentence_vec=np.zeros(4))
        p2 = clf_forward(net, s, sentence_vec=np.ones(4))
        assert not np.array_equal(p1, p2)


class TestGradients:
    def make_batch(self, with_sentvec=True, seed=11):
        rng = np.random.default_rng(seed)
        words = [f"w{i}" for i in range(12)]
        train = sentences_from(
            [[words[i] for i in rng.integers(0, 12, size=rng.integers(3, 8))] for _ in range(4)],
            [set(rng.integers(0, 10, size=rng.integers(1, 3))) for _ in range(4)],
        )
        sent_dim = 5 if with_sentvec else 0
        net = init_clf(train, sent_dim=sent_dim, seed=seed, d_w=6, n_filters=4, dense=(8,), use_sentvec=with_sentvec)
        encs = []
        for s in train:
            sv = rng.normal(size=sent_dim) if with_sentvec else None
            encs.append(encode_sentence(net, s, sv))
        return net, encs

    def test_finite_differences(self):
        net, encs = self.make_batch()
        loss0, grads = batch_loss_and_grads(net, encs)
        params = net.params()
        rng = np.random.default_rng(0)

        def loss_at():
            l, _ = batch_loss_and_grads(net, encs)
            return l

        eps = 1e-6
        worst = 0.0
        for name, arr in params.items():
            g = grads[name].reshape(-1)
            flat = arr.reshape(-1)
            nz = np.nonzero(g)[0]
            if len(nz) == 0:
                continue
            for k in rng.permutation(nz)[:12]:
                old = flat[k]
                flat[k] = old + eps
                lp = loss_at()
                flat[k] = old - eps
                lm = loss_at()
                flat[k] = old
                fd = (lp - lm) / (2 * eps)
                rel = abs(fd - g[k]) / max(abs(fd), abs(g[k]), 1e-12)
                worst = max(worst, rel)
        assert worst <= 1e-3

    def test_maxpool_routes_gradient_to_argmax_only(self):
        words = [f"t{i}" for i in range(10)]
        train = sentences_from([words], [{0}])
        net = init_clf(train, sent_dim=0, seed=7, d_w=5, n_filters=1, dense=(4,), use_sentvec=False)
        sent = LabeledSentence(words, {0})
        enc = encode_sentence(net, sent, None)
        _, cache = _forward(net, enc)
        amax = cache[3]
        _, grads = batch_loss_and_grads(net, [enc])
        covered = set()
        for f in range(net.n_filters):
            covered.update(range(amax[f], amax[f] + 3))
        for t, tid in enumerate(enc.token_ids):
            row_grad = grads["emb"][tid]
            if t in covered:
                assert np.any(row_grad != 0)
            else:
                assert not np.any(row_grad != 0)


def marker_dataset(n=64, seed=5):
    """Sentences whose labels are keyed to embedded marker trigrams."""
    rng = np.random.default_rng(seed)
    fillers = [f"fill{i}" for i in range(20)]
    markers = {lab: [f"mark{lab}a", f"mark{lab}b", f"mark{lab}c"] for lab in range(8)}
    sents = []
    for i in range(n):
        labs = {int(x) for x in rng.choice(8, size=rng.integers(1, 3), replace=False)}
        toks = [fillers[j] for j in rng.integers(0, 20, size=6)]
        for lab in labs:
            pos = rng.integers(0, len(toks) + 1)
            toks[pos:pos] = markers[lab]
        sents.append(LabeledSentence(tokens=toks, labels=labs))
    return sents


class TestTrainClassifier:
    def test_overfits_marker_trigrams(self):
        sents = marker_dataset(64)
        hyper = ClfHyper(lr=0.01, batch=64, patience=200, max_epochs=200, seed=0)
        net = train_classifier(sents, sents, None, hyper, d_w=16, n_filters=16, dense=(32, 16), use_sentvec=False)
        metrics = evaluate_classifier(net, sents, None, hyper)
        assert metrics["f1"] >= 0.95

    def test_early_stop_after_patience(self, monkeypatch):
        sents = marker_dataset(16, seed=2)
        monkeypatch.setattr(clf, "dev_loss", lambda net, encs: 1.0)
        hist = ClfHistory()
        hyper = ClfHyper(lr=1e-3, batch=16, patience=4, max_epochs=100, seed=1)
        train_classifier(sents, sents, None, hyper, d_w=4, n_filters=2, dense=(4,), use_sentvec=False, history=hist)
        assert hist.stopped_epoch == hyper.patience + 1

    def test_returns_best_dev_snapshot(self):
        sents = marker_dataset(32, seed=3)
        dev = marker_dataset(16, seed=4)
        hist = ClfHistory()
        hyper = ClfHyper(lr=0.01, batch=32, patience=5, max_epochs=30, seed=2)
        net = train_classifier(sents, dev, None, hyper, d_w=8, n_filters=8, dense=(8,), use_sentvec=False, history=hist)
        dev_encs = encode_dataset(net, dev, None)
        assert clf.dev_loss(net, dev_encs) == pytest.approx(min(hist.dev_loss), rel=1e-9)

    def test_empty_split_raises(self):
        with pytest.raises(ValueError):
            train_classifier([], marker_dataset(4), None, ClfHyper(), use_sentvec=False)


class TestPredictLabels:
    def test_above_threshold(self):
        logits = np.full(10, np.log(0.1 / 0.9))
        logits[0] = np.log(0.9 / 0.1)
        net = stub_net(logits)
        assert predict_labels(net, LabeledSentence(["tok"], {0})) == {0}

    def test_argmax_fallback(self):
        logits = np.linspace(-3.0, -1.0, 10)
        net = stub_net(logits)
        assert predict_labels(net, LabeledSentence(["tok"], {0})) == {9}

    def test_tie_at_threshold_included(self):
        logits = np.full(10, -2.0)
        logits[4] = 0.0  # sigmoid(0) == 0.5 exactly
        net = stub_net(logits)
        assert predict_labels(net, LabeledSentence(["tok"], {0}), threshold=0.5) == {4}


class TestExampleMetrics:
    def test_hand_case(self):
        m = example_metrics([{1}], [{1, 3}])
        assert m["precision"] == pytest.approx(1.0)
        assert m["recall"] == pytest.approx(0.5)
        assert m["f1"] == pytest.approx(2.0 / 3.0)

    def test_perfect(self):
        gold = [{1, 2}, {0}, {5, 9}]
        m = example_metrics(gold, gold)
        assert m == {"precision": 1.0, "recall": 1.0, "f1": 1.0}

    def test_disjoint(self):
        m = example_metrics([{0}, {1}], [{5}, {6}])
        assert m == {"precision": 0.0, "recall": 0.0, "f1": 0.0}

    def test_brute_force_random_sets(self):
        rng = np.random.default_rng(13)
        preds, gold = [], []
        for _ in range(100):
            gold.append(set(rng.choice(10, size=rng.integers(1, 5), replace=False).tolist()))
            preds.append(set(rng.choice(10, size=rng.integers(0, 5), replace=False).tolist()))
        m = example_metrics(preds, gold)
        # independent brute-force recomputation
        ps, rs, fs = [], [], []
        for p, g in zip(preds, gold):
            inter = sum(1 for x in p if x in g)
            ps.append(inter / len(p) if p else 0.0)
            rs.append(inter / len(g))
            fs.append(2 * inter / (len(p) + len(g)))
        assert m["precision"] == pytest.approx(sum(ps) / 100, abs=1e-15)
        assert m["recall"] == pytest.approx(sum(rs) / 100, abs=1e-15)
        assert m["f1"] == pytest.approx(sum(fs) / 100, abs=1e-15)

    def test_permutation_invariant_and_bounded(self):
        rng = np.random.default_rng(14)
        gold = [set(rng.choice(10, size=rng.integers(1, 4), replace=False).tolist()) for _ in range(30)]
        preds = [set(rng.choice(10, size=rng.integers(1, 4), replace=False).tolist()) for _ in range(30)]
        m1 = example_metrics(preds, gold)
        order = rng.permutation(30)
        m2 = example_metrics([preds[i] for i in order], [gold[i] for i in order])
        assert m1 == m2
        assert all(0.0 <= v <= 1.0 for v in m1.values())

    def test_errors(self):
        with pytest.raises(ValueError, match="equal length"):
            example_metrics([{1}], [{1}, {2}])
        with pytest.raises(ValueError, match="non-empty"):
            example_metrics([{1}], [set()])


def test_hyper_validation():
    with pytest.raises(ValueError):
        ClfHyper(patience=0)
    with pytest.raises(ValueError):
        ClfHyper(lr=-1.0)


class TestTagChannels:
    def make_tagged(self, n=8, seed=6):
        rng = np.random.default_rng(seed)
        sents = []
        for _ in range(n):
            k = int(rng.integers(3, 6))
            toks = [f"w{rng.integers(0, 10)}" for _ in range(k)]
            pos = [rng.choice(["NN", "VB", "JJ"]) for _ in range(k)]
            chunk = [rng.choice(["B-NP", "I-NP", "O"]) for _ in range(k)]
            sents.append(LabeledSentence(toks, {int(rng.integers(0, 10))}, pos, chunk))
        return sents

    def test_channels_extend_input(self):
        sents = self.make_tagged()
        net = init_clf(sents, sent_dim=0, seed=0, d_w=6, n_filters=3, dense=(4,), use_sentvec=False)
        assert net.channel_dim == 6 + 3 + 3
        probs = clf_forward(net, sents[0])
        assert probs.shape == (10,)

    def test_save_load_round_trip(self, tmp_path):
        sents = self.make_tagged()
        hyper = ClfHyper(lr=0.01, batch=8, patience=3, max_epochs=3, seed=0)
        net = train_classifier(sents, sents, None, hyper, d_w=6, n_filters=3, dense=(4,), use_sentvec=False)
        p = str(tmp_path / "clf.bsvc")
        save_clf(net, p)
        net2 = load_clf(p)
        s = sents[0]
        np.testing.assert_array_equal(clf_forward(net, s), clf_forward(net2, s))
        assert net2.pos_index == net.pos_index

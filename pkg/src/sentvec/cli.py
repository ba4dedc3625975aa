"""Command-line entry point.

One executable with subcommands wiring the whole pipeline:

    prep       raw text -> cleaned sentence-per-line file
    vocab      corpus statistics / vocabulary summary
    train      train an embedding model (.bsvm)
    embed      sentence(s) -> vector(s)
    sim        cosine similarity of two sentences
    eval-sim   unsupervised sentence-pair evaluation (Pearson)
    train-reg  train the supervised similarity regressor (.bsvr)
    eval-reg   supervised evaluation (10-fold CV or fixed split)
    train-clf  train the multi-label classifier (.bsvc)
    eval-clf   classifier metrics on a dataset split
    info       print model header fields

Exit codes: 0 success, 1 usage error, 2 data/input error, 3 internal
error.  Flags may also be supplied via a TOML config file (one table per
subcommand); explicit flags override the file, which overrides built-in
defaults.  Every artifact gets a `<name>.manifest.json` with resolved
config, input digests, seed and tool version.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import __version__
from .config import TrainConfig
from .manifest import write_manifest
from .model import ModelFormatError, load, save, similarity
from .prep import PrepConfig, corpus_stats, default_stopwords, iter_preprocessed, load_stopwords, prep_sentence
from .vocab import build_vocab


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


DEFAULTS: dict[str, dict] = {
    "prep": {
        "granularity": "doc",
        "lowercase": True,
        "stopword_removal": True,
        "strip_punctuation": True,
        "stopwords": None,
        "max_tokens": 256,
    },
    "vocab": {"min_count": 5, "t": 1e-4, "output": None},
    "train": {
        "dim": 700,
        "ngrams": 2,
        "neg": 10,
        "window": 30,
        "epochs": 5,
        "lr": 0.2,
        "min_count": 5,
        "t": 1e-4,
        "bucket": 2_000_000,
        "workers": 1,
        "seed": 1,
        "ngram_dropout_k": 0,
        "exact_math": False,
        "progress_every": 1_000_000,
    },
    "embed": {"sentence": None},
    "sim": {},
    "eval-sim": {"folds": None, "seed": 0, "pretty": False},
    "train-reg": {
        "epochs": 1500,
        "batch": 8,
        "lr": 0.001,
        "l2": 1e-4,
        "dropout": True,
        "seed": 0,
        "val_fraction": 0.2,
    },
    "eval-reg": {
        "protocol": "cv",
        "test_pairs": None,
        "net": None,
        "folds": 10,
        "epochs": 1500,
        "batch": 8,
        "lr": 0.001,
        "l2": 1e-4,
        "dropout": True,
        "seed": 0,
    },
    "train-clf": {
        "lr": 7e-4,
        "batch": 64,
        "patience": 10,
        "max_epochs": 200,
        "threshold": 0.5,
        "seed": 0,
        "split_seed": 0,
        "sentvec": True,
        "word_vectors": None,
        "dw": 200,
        "filters": 100,
    },
    "eval-clf": {"split": "test", "split_seed": 0, "threshold": 0.5},
    "info": {},
}


def _build_parser() -> _Parser:
    sup = argparse.SUPPRESS
    p = _Parser(prog="sentvec", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"sentvec {__version__}")
    sub = p.add_subparsers(dest="cmd")

    def add(name, **kwargs):
        sp = sub.add_parser(name, **kwargs)
        sp.add_argument("--config", default=None, help="TOML config file (table per subcommand)")
        return sp

    sp = add("prep", help="clean raw text into a sentence-per-line corpus")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--granularity", choices=["doc", "sentence"], default=sup)
    sp.add_argument("--no-lowercase", dest="lowercase", action="store_false", default=sup)
    sp.add_argument("--no-stopword-removal", dest="stopword_removal", action="store_false", default=sup)
    sp.add_argument("--keep-punctuation", dest="strip_punctuation", action="store_false", default=sup)
    sp.add_argument("--stopwords", default=sup, help="stopword list file (one entry per line)")
    sp.add_argument("--max-tokens", dest="max_tokens", type=int, default=sup)

    sp = add("vocab", help="vocabulary summary for a preprocessed corpus")
    sp.add_argument("--input", required=True)
    sp.add_argument("--min-count", dest="min_count", type=int, default=sup)
    sp.add_argument("--t", type=float, default=sup)
    sp.add_argument("--output", default=sup, help="write word<TAB>count table here")

    sp = add("train", help="train an embedding model")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--dim", type=int, default=sup)
    sp.add_argument("--ngrams", type=int, default=sup)
    sp.add_argument("--neg", type=int, default=sup)
    sp.add_argument("--window", type=int, default=sup)
    sp.add_argument("--epochs", type=int, default=sup)
    sp.add_argument("--lr", type=float, default=sup)
    sp.add_argument("--min-count", dest="min_count", type=int, default=sup)
    sp.add_argument("--t", type=float, default=sup)
    sp.add_argument("--bucket", type=int, default=sup)
    sp.add_argument("--workers", type=int, default=sup)
    sp.add_argument("--seed", type=int, default=sup)
    sp.add_argument("--ngram-dropout-k", dest="ngram_dropout_k", type=int, default=sup)
    sp.add_argument("--exact-math", dest="exact_math", action="store_true", default=sup)
    sp.add_argument("--progress-every", dest="progress_every", type=int, default=sup)

    sp = add("embed", help="print sentence vectors (one line per sentence)")
    sp.add_argument("--model", required=True)
    sp.add_argument("--sentence", default=sup, help="embed this sentence; otherwise read lines from stdin")

    sp = add("sim", help="cosine similarity of two sentences")
    sp.add_argument("--model", required=True)
    sp.add_argument("--s1", required=True)
    sp.add_argument("--s2", required=True)

    sp = add("eval-sim", help="unsupervised pair-similarity evaluation")
    sp.add_argument("--model", required=True)
    sp.add_argument("--pairs", required=True)
    sp.add_argument("--folds", type=int, default=sup)
    sp.add_argument("--seed", type=int, default=sup)
    sp.add_argument("--pretty", action="store_true", default=sup)

    def reg_flags(sp):
        sp.add_argument("--epochs", type=int, default=sup)
        sp.add_argument("--batch", type=int, default=sup)
        sp.add_argument("--lr", type=float, default=sup)
        sp.add_argument("--l2", type=float, default=sup)
        sp.add_argument("--no-dropout", dest="dropout", action="store_false", default=sup)
        sp.add_argument("--seed", type=int, default=sup)

    sp = add("train-reg", help="train the supervised similarity regressor")
    sp.add_argument("--model", required=True)
    sp.add_argument("--pairs", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--val-fraction", dest="val_fraction", type=float, default=sup)
    reg_flags(sp)

    sp = add("eval-reg", help="supervised pair-similarity evaluation")
    sp.add_argument("--model", required=True)
    sp.add_argument("--pairs", required=True)
    sp.add_argument("--protocol", choices=["cv", "fixed"], default=sup)
    sp.add_argument("--test-pairs", dest="test_pairs", default=sup)
    sp.add_argument("--net", default=sup, help="evaluate a saved .bsvr net instead of training")
    sp.add_argument("--folds", type=int, default=sup)
    reg_flags(sp)

    sp = add("train-clf", help="train the multi-label sentence classifier")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--lr", type=float, default=sup)
    sp.add_argument("--batch", type=int, default=sup)
    sp.add_argument("--patience", type=int, default=sup)
    sp.add_argument("--max-epochs", dest="max_epochs", type=int, default=sup)
    sp.add_argument("--threshold", type=float, default=sup)
    sp.add_argument("--seed", type=int, default=sup)
    sp.add_argument("--split-seed", dest="split_seed", type=int, default=sup)
    sp.add_argument("--no-sentvec", dest="sentvec", action="store_false", default=sup)
    sp.add_argument("--word-vectors", dest="word_vectors", default=sup)
    sp.add_argument("--dw", type=int, default=sup)
    sp.add_argument("--filters", type=int, default=sup)

    sp = add("eval-clf", help="classifier metrics on a dataset split")
    sp.add_argument("--model", required=True)
    sp.add_argument("--net", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--split", choices=["train", "dev", "test", "all"], default=sup)
    sp.add_argument("--split-seed", dest="split_seed", type=int, default=sup)
    sp.add_argument("--threshold", type=float, default=sup)

    sp = add("info", help="print model header fields")
    sp.add_argument("model")

    return p


def _resolve(cmd: str, args: argparse.Namespace) -> dict:
    """defaults <- TOML config section <- explicit flags."""
    cfg = dict(DEFAULTS[cmd])
    provided = {k: v for k, v in vars(args).items() if k not in ("cmd", "config")}
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, "rb") as f:
            data = tomllib.load(f)
        section = data.get(cmd, {})
        unknown = set(section) - set(cfg) - set(provided)
        if unknown:
            raise UsageError(f"unknown config keys for {cmd}: {sorted(unknown)}")
        cfg.update(section)
    cfg.update(provided)
    return cfg


def _prep_config(cfg: dict) -> PrepConfig:
    if not cfg.get("stopword_removal", True):
        stop = frozenset()
    elif cfg.get("stopwords"):
        stop = load_stopwords(cfg["stopwords"])
    else:
        stop = default_stopwords()
    return PrepConfig(
        lowercase=cfg.get("lowercase", True),
        stopword_list=stop,
        strip_punctuation=cfg.get("strip_punctuation", True),
        max_sentence_tokens=cfg.get("max_tokens", 256),
    )


def _fmt_vec(vec) -> str:
    # 9 significant digits round-trip float32 exactly
    return " ".join(f"{float(x):.9g}" for x in vec)


def _cmd_prep(cfg):
    t0 = time.time()
    pc = _prep_config(cfg)
    with open(cfg["input"], encoding="utf-8") as f:
        docs = [line.rstrip("\n") for line in f]
    stats = corpus_stats(docs) if cfg["granularity"] == "doc" else None
    with open(cfg["output"], "w", encoding="utf-8", newline="\n") as out:
        for toks in iter_preprocessed(docs, pc, split=cfg["granularity"] == "doc"):
            out.write(" ".join(toks) + "\n")
    if stats is not None:
        print(json.dumps({"documents": stats.documents, "sentences": stats.sentences, "tokens": stats.tokens}))
    write_manifest(cfg["output"], "prep", cfg, [cfg["input"]], None, time.time() - t0)
    return 0


def _cmd_vocab(cfg):
    t0 = time.time()

    def lines():
        with open(cfg["input"], encoding="utf-8") as f:
            for line in f:
                toks = line.split()
                if toks:
                    yield toks

    vocab = build_vocab(lines(), cfg["min_count"], cfg["t"])
    if cfg.get("output"):
        with open(cfg["output"], "w", encoding="utf-8") as out:
            for w, c in zip(vocab.words, vocab.counts):
                out.write(f"{w}\t{int(c)}\n")
        write_manifest(cfg["output"], "vocab", cfg, [cfg["input"]], None, time.time() - t0)
    print(json.dumps({"words": len(vocab), "total_tokens": vocab.total_tokens, "min_count": vocab.min_count}))
    return 0


def _cmd_train(cfg):
    from .trainer import train  # deferred: keeps the numba import off non-training commands

    t0 = time.time()
    tc = TrainConfig(
        dim=cfg["dim"],
        ngram_order=cfg["ngrams"],
        negatives=cfg["neg"],
        window=cfg["window"],
        epochs=cfg["epochs"],
        lr0=cfg["lr"],
        min_count=cfg["min_count"],
        subsample_t=cfg["t"],
        bucket_count=cfg["bucket"],
        workers=cfg["workers"],
        seed=cfg["seed"],
        ngram_dropout_k=cfg["ngram_dropout_k"],
        exact_math=cfg["exact_math"],
    )
    model = train(cfg["input"], tc, progress_every=cfg["progress_every"])
    save(model, cfg["output"])
    write_manifest(cfg["output"], "train", cfg, [cfg["input"]], cfg["seed"], time.time() - t0)
    return 0


def _cmd_embed(cfg):
    model = load(cfg["model"])
    pc = PrepConfig()
    if cfg.get("sentence") is not None:
        print(_fmt_vec(model.sentence_vector(prep_sentence(cfg["sentence"], pc))))
        return 0
    for line in sys.stdin:
        print(_fmt_vec(model.sentence_vector(prep_sentence(line.rstrip("\n"), pc))))
    return 0


def _cmd_sim(cfg):
    model = load(cfg["model"])
    pc = PrepConfig()
    u = model.sentence_vector(prep_sentence(cfg["s1"], pc))
    v = model.sentence_vector(prep_sentence(cfg["s2"], pc))
    print(f"{similarity(u, v):.6f}")
    return 0


def _cmd_eval_sim(cfg):
    from .simeval import evaluate_unsupervised, load_pairs, stratified_folds

    model = load(cfg["model"])
    ds = load_pairs(cfg["pairs"])
    report = evaluate_unsupervised(model, ds)
    if cfg.get("folds"):
        plan = stratified_folds(ds, k=cfg["folds"], seed=cfg["seed"])
        report["folds"] = len(plan.folds)
    if cfg.get("pretty"):
        import os.path

        name = os.path.basename(ds.name)[:20]
        print(f"{'dataset':>20}  {'n':>5}  {'pearson':>8}")
        print(f"{name:>20}  {report['n']:>5}  {report['pearson']:>8.4f}")
    else:
        print(json.dumps(report))
    return 0


def _reg_hyper(cfg):
    from .regressor import RegHyper

    return RegHyper(
        lr=cfg["lr"],
        batch=cfg["batch"],
        epochs=cfg["epochs"],
        l2_lambda=cfg["l2"],
        seed=cfg["seed"],
        dropout=cfg["dropout"],
    )


def _cmd_train_reg(cfg):
    from .regressor import FitHistory, featurize, fit, init_net, save_net

    t0 = time.time()
    model = load(cfg["model"])
    from .simeval import load_pairs

    ds = load_pairs(cfg["pairs"])
    hyper = _reg_hyper(cfg)
    x, y = featurize(model, ds)
    rng = np.random.default_rng(hyper.seed)
    perm = rng.permutation(len(y))
    n_val = max(1, int(round(cfg["val_fraction"] * len(y))))
    tr, va = perm[n_val:], perm[:n_val]
    net = init_net(model.dim, hyper.seed, dropout_rate=0.5 if hyper.dropout else 0.0, l2_lambda=hyper.l2_lambda)
    hist = FitHistory()
    best = fit(net, x[tr], y[tr], x[va], y[va], hyper, history=hist)
    save_net(best, cfg["output"])
    write_manifest(cfg["output"], "train-reg", cfg, [cfg["model"], cfg["pairs"]], cfg["seed"], time.time() - t0)
    print(json.dumps({"best_val_mse": min(hist.val_mse), "epochs": len(hist.val_mse)}))
    return 0


def _cmd_eval_reg(cfg):
    from .regressor import _forward_batch, evaluate_supervised, featurize, load_net
    from .simeval import load_pairs, pearson

    model = load(cfg["model"])
    ds = load_pairs(cfg["pairs"])
    if cfg.get("net"):
        net = load_net(cfg["net"])
        x, y = featurize(model, ds)
        preds, _ = _forward_batch(net, x, train_mode=False)
        print(json.dumps({"protocol": "net", "pearson": pearson(preds, y), "n": len(ds)}))
        return 0
    hyper = _reg_hyper(cfg)
    if cfg["protocol"] == "fixed":
        if not cfg.get("test_pairs"):
            raise UsageError("--protocol fixed requires --test-pairs")
        test_ds = load_pairs(cfg["test_pairs"])
        report = evaluate_supervised(ds, model, hyper, "fixed", test_dataset=test_ds)
    else:
        report = evaluate_supervised(ds, model, hyper, "cv", k=cfg["folds"])
    print(json.dumps(report))
    return 0


def _clf_hyper(cfg):
    from .classifier import ClfHyper

    return ClfHyper(
        lr=cfg["lr"],
        batch=cfg["batch"],
        patience=cfg["patience"],
        max_epochs=cfg["max_epochs"],
        threshold=cfg["threshold"],
        seed=cfg["seed"],
    )


def _cmd_train_clf(cfg):
    from .classifier import evaluate_classifier, load_labeled, load_word_vectors, save_clf, split_dataset, train_classifier

    t0 = time.time()
    model = load(cfg["model"])
    data = load_labeled(cfg["data"])
    train_set, dev_set, _test_set = split_dataset(data, seed=cfg["split_seed"])
    hyper = _clf_hyper(cfg)
    wv = load_word_vectors(cfg["word_vectors"]) if cfg.get("word_vectors") else None
    net = train_classifier(
        train_set,
        dev_set,
        model,
        hyper,
        d_w=cfg["dw"],
        n_filters=cfg["filters"],
        use_sentvec=cfg["sentvec"],
        word_vectors=wv,
    )
    save_clf(net, cfg["output"])
    write_manifest(cfg["output"], "train-clf", cfg, [cfg["model"], cfg["data"]], cfg["seed"], time.time() - t0)
    print(json.dumps(evaluate_classifier(net, dev_set, model, hyper)))
    return 0


def _cmd_eval_clf(cfg):
    from .classifier import ClfHyper, evaluate_classifier, load_clf, load_labeled, split_dataset

    model = load(cfg["model"])
    net = load_clf(cfg["net"])
    data = load_labeled(cfg["data"])
    if cfg["split"] != "all":
        train_set, dev_set, test_set = split_dataset(data, seed=cfg["split_seed"])
        data = {"train": train_set, "dev": dev_set, "test": test_set}[cfg["split"]]
    hyper = ClfHyper(threshold=cfg["threshold"])
    print(json.dumps(evaluate_classifier(net, data, model, hyper)))
    return 0


def _cmd_info(cfg):
    model = load(cfg["model"])
    h = model.header
    print(
        json.dumps(
            {
                "format_version": h.format_version,
                "dim": h.dim,
                "vocab_size": h.vocab_size,
                "bucket_count": h.bucket_count,
                "ngram_order": h.ngram_order,
                "train_config": h.train_config.to_dict(),
            }
        )
    )
    return 0


_HANDLERS = {
    "prep": _cmd_prep,
    "vocab": _cmd_vocab,
    "train": _cmd_train,
    "embed": _cmd_embed,
    "sim": _cmd_sim,
    "eval-sim": _cmd_eval_sim,
    "train-reg": _cmd_train_reg,
    "eval-reg": _cmd_eval_reg,
    "train-clf": _cmd_train_clf,
    "eval-clf": _cmd_eval_clf,
    "info": _cmd_info,
}


def run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.cmd:
            raise UsageError("a subcommand is required")
        cfg = _resolve(args.cmd, args)
        return _HANDLERS[args.cmd](cfg)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (ModelFormatError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 3
    except Exception as e:  # noqa: BLE001 - last-resort mapping to exit code 3
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()

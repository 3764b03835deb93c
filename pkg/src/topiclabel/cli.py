"""Command-line interface: the pipeline as subcommands.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import dataset as ds
from .corpus import compute_rare_terms, load_stopwords, read_corpus
from .errors import DataError, NumericError
from .evaluation import (
    baseline_label,
    load_embeddings,
    paired_bootstrap,
    score_model,
    score_topic,
)
from .model import (
    HParamSpace,
    ModelConfig,
    hyperparameter_search,
    load_checkpoint,
    make_trial_train_fn,
    parse_config_text,
    save_checkpoint,
    train,
)
from .testdata import extend_topic, filter_gold_labels, load_topics, save_topics
from .tfidf import build_df_index

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="topiclabel", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("build-dataset", help="construct distant-supervision pairs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=("tfidf", "sent"), default="tfidf")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stopwords")
    p.add_argument("--rare-min-count", type=int, default=5)
    p.add_argument("--label-max-len", type=int, default=10)
    p.add_argument("--n-terms", type=int, default=30)
    p.add_argument("--vocab-min-count", type=int, default=1)
    p.add_argument("--splits", help="absolute counts: n_train,n_valid,n_test")

    p = sub.add_parser("train", help="train the labelling model")
    p.add_argument("--data", required=True, help="directory from build-dataset")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", default="model.ckpt")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)

    p = sub.add_parser("label", help="generate labels for topics")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="directory holding vocab files")
    p.add_argument("--topics", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="score predictions against gold labels")
    p.add_argument("--pred", required=True)
    p.add_argument("--topics", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--baseline", type=int, action="append", default=[])
    p.add_argument("--min-avg-rating", type=float, default=2.0)
    p.add_argument("--bootstrap-samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("extend-topics", help="add pooled-TFIDF terms to topics")
    p.add_argument("--topics", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stopwords")
    p.add_argument("--rare-min-count", type=int, default=5)
    p.add_argument("--n-docs", type=int, default=5)
    p.add_argument("--k", type=int, default=20)

    p = sub.add_parser("hparam-search", help="random hyperparameter search")
    p.add_argument("--data", required=True)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trial-epochs", type=int, default=1)
    p.add_argument("--out", default="hparam_log.json")

    return parser


def _load_data_dir(data_dir: str):
    data = Path(data_dir)
    train_pairs = ds.read_pairs(data / "train.tsv")
    valid_pairs = ds.read_pairs(data / "valid.tsv")
    term_vocab = ds.read_vocab(data / "vocab.terms.txt")
    label_vocab = ds.read_vocab(data / "vocab.labels.txt")
    return train_pairs, valid_pairs, term_vocab, label_vocab


def _cmd_build_dataset(args) -> int:
    stop = load_stopwords(args.stopwords) if args.stopwords else set()
    articles = list(read_corpus(args.corpus))
    rare = compute_rare_terms(articles, args.rare_min_count)
    if args.mode == "tfidf":
        index = build_df_index(articles, stop, rare)
        pairs = list(
            ds.build_pairs_tfidf(
                articles, index, stop, rare, args.n_terms, args.label_max_len
            )
        )
    else:
        pairs = list(
            ds.build_pairs_sent(articles, stop, rare, args.n_terms, args.label_max_len)
        )
    if not pairs:
        raise DataError("no usable pairs could be built from the corpus")

    if args.splits:
        try:
            sizes = tuple(int(v) for v in args.splits.split(","))
        except ValueError as exc:
            raise UsageError(f"--splits must be three integers: {exc}") from exc
        if len(sizes) != 3:
            raise UsageError("--splits must be n_train,n_valid,n_test")
    else:
        n = len(pairs)
        sizes = (n - 2 * (n // 10), n // 10, n // 10)
    train_split, valid_split, test_split = ds.split_pairs(pairs, sizes, args.seed)

    term_vocab, label_vocab = ds.build_vocab(train_split, args.vocab_min_count)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds.write_pairs(out / "train.tsv", train_split)
    ds.write_pairs(out / "valid.tsv", valid_split)
    ds.write_pairs(out / "test.tsv", test_split)
    ds.write_vocab(out / "vocab.terms.txt", term_vocab)
    ds.write_vocab(out / "vocab.labels.txt", label_vocab)
    logger.info(
        "built %d pairs (mode=%s, seed=%d, splits=%s); term vocab %d, label vocab %d",
        len(pairs), args.mode, args.seed, sizes, len(term_vocab), len(label_vocab),
    )
    return 0


def _cmd_train(args) -> int:
    train_pairs, valid_pairs, term_vocab, label_vocab = _load_data_dir(args.data)
    overrides = {}
    if args.config:
        overrides.update(parse_config_text(Path(args.config).read_text()))
        overrides.pop("step", None)
        overrides.pop("term_vocab_size", None)
        overrides.pop("label_vocab_size", None)
    for key in ("epochs", "seed", "lr", "batch_size"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    config = ModelConfig(
        term_vocab_size=len(term_vocab),
        label_vocab_size=len(label_vocab),
        **overrides,
    )
    logger.info("resolved config: %s", dataclasses.asdict(config))
    train_encoded = ds.encode_pairs(
        train_pairs, term_vocab, label_vocab, config.t_x, config.max_label_len,
        drop_oov_labels=True,
    )
    valid_encoded = ds.encode_pairs(
        valid_pairs, term_vocab, label_vocab, config.t_x, config.max_label_len
    )
    model, history = train(train_encoded, valid_encoded, config)
    save_checkpoint(args.out, model)
    for entry in history:
        logger.info(
            "epoch %d: train %.4f valid %.4f",
            entry["epoch"], entry["train_loss"], entry["valid_loss"],
        )
    return 0


def _cmd_label(args) -> int:
    model = load_checkpoint(args.checkpoint)
    term_vocab = ds.read_vocab(Path(args.data) / "vocab.terms.txt")
    label_vocab = ds.read_vocab(Path(args.data) / "vocab.labels.txt")
    topics = load_topics(args.topics)
    t_x = model.config.t_x
    with open(args.out, "w", encoding="utf-8") as fh:
        for topic in topics:
            ids = [term_vocab.encode(tok) for tok in topic.terms[:t_x]]
            ids += [ds.PAD_ID] * (t_x - len(ids))
            decoded = model.greedy_decode(ids)
            label = " ".join(label_vocab.decode(i) for i in decoded)
            fh.write(f"{topic.topic_id}\t{label}\n")
    logger.info("labelled %d topics", len(topics))
    return 0


def _read_predictions(path: str) -> dict[str, list[str]]:
    preds = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 2:
                raise DataError(f"{path}:{lineno}: expected 'topic_id<TAB>label'")
            preds[fields[0]] = fields[1].split()
    return preds


def _cmd_evaluate(args) -> int:
    topics = filter_gold_labels(load_topics(args.topics), args.min_avg_rating)
    if not topics:
        raise DataError("no topics survive the gold-rating filter")
    preds = _read_predictions(args.pred)
    table = load_embeddings(args.embeddings)

    results = [
        score_topic(
            preds.get(t.topic_id, []),
            [list(g.label) for g in t.golds],
            table,
            t.topic_id,
        )
        for t in topics
    ]
    report = score_model(results)
    model_f = [res.f for res in results]

    for k in args.baseline:
        base_results = [
            score_topic(
                baseline_label(list(t.terms), k),
                [list(g.label) for g in t.golds],
                table,
                t.topic_id,
            )
            for t in topics
        ]
        base_report = score_model(base_results)
        key = f"top{k}"
        report.baselines[key] = {
            "mean_p": base_report.mean_p,
            "mean_r": base_report.mean_r,
            "mean_f": base_report.mean_f,
        }
        if len(topics) >= 2:
            report.p_values[key] = paired_bootstrap(
                model_f,
                [res.f for res in base_results],
                args.bootstrap_samples,
                args.seed,
            )

    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_extend_topics(args) -> int:
    topics = load_topics(args.topics)
    stop = load_stopwords(args.stopwords) if args.stopwords else set()
    articles = list(read_corpus(args.corpus))
    rare = compute_rare_terms(articles, args.rare_min_count)
    index = build_df_index(articles, stop, rare)
    table = load_embeddings(args.embeddings)
    extended = [
        extend_topic(t, articles, index, table, stop, rare, args.n_docs, args.k)
        for t in topics
    ]
    save_topics(args.out, extended)
    flagged = sum(t.truncated_extension for t in extended)
    if flagged:
        logger.warning("%d topics received fewer than %d new terms", flagged, args.k)
    return 0


def _cmd_hparam_search(args) -> int:
    train_pairs, valid_pairs, term_vocab, label_vocab = _load_data_dir(args.data)
    base = ModelConfig(
        term_vocab_size=len(term_vocab), label_vocab_size=len(label_vocab)
    )
    train_encoded = ds.encode_pairs(
        train_pairs, term_vocab, label_vocab, base.t_x, base.max_label_len,
        drop_oov_labels=True,
    )
    valid_encoded = ds.encode_pairs(
        valid_pairs, term_vocab, label_vocab, base.t_x, base.max_label_len
    )
    train_fn = make_trial_train_fn(
        train_encoded, valid_encoded, base, args.trial_epochs
    )
    best, log = hyperparameter_search(HParamSpace(), args.samples, args.seed, train_fn)
    Path(args.out).write_text(json.dumps({"best": best, "trials": log}, indent=2) + "\n")
    logger.info("best overrides: %s", best)
    return 0


_COMMANDS = {
    "build-dataset": _cmd_build_dataset,
    "train": _cmd_train,
    "label": _cmd_label,
    "evaluate": _cmd_evaluate,
    "extend-topics": _cmd_extend_topics,
    "hparam-search": _cmd_hparam_search,
}


def dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())

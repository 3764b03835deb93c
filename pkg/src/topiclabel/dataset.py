"""Distant-supervision pair construction, splitting, vocabularies, encoding.

Pairs come in two styles: top-30 TFIDF terms of an article, or the first 30
preprocessed body tokens. The article title is the label in both.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .corpus import (
    Article,
    StopwordSet,
    normalize_label,
    preprocess_terms,
    tokenize,
)
from .errors import DataError
from .tfidf import DfIndex, top_k_terms

logger = logging.getLogger(__name__)

PAD_ID, SOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
RESERVED_TOKENS = ("<pad>", "<sos>", "<eos>", "<unk>")

DEFAULT_N_TERMS = 30
DEFAULT_MAX_LABEL_LEN = 10


@dataclass(frozen=True)
class TopicLabelPair:
    """Up to 30 topic terms plus a tokenized label; the training unit."""

    terms: tuple[str, ...]
    label: tuple[str, ...]


class Vocabulary:
    """Token <-> id maps with reserved ids PAD=0, SOS=1, EOS=2, UNK=3."""

    def __init__(self, tokens: Sequence[str]):
        for reserved in RESERVED_TOKENS:
            if reserved in tokens:
                raise DataError(f"reserved literal {reserved!r} appears as a token")
        self.id_to_token: list[str] = list(RESERVED_TOKENS) + list(tokens)
        self.token_to_id: dict[str, int] = {
            tok: i for i, tok in enumerate(self.id_to_token)
        }
        if len(self.token_to_id) != len(self.id_to_token):
            raise DataError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def decode(self, token_id: int) -> str:
        return self.id_to_token[token_id]


@dataclass(frozen=True)
class EncodedPair:
    """Integer sequences ready for the model: PAD-right input, SOS/EOS-framed target."""

    input_ids: tuple[int, ...]
    target_ids: tuple[int, ...]


def _usable_label(article: Article, max_label_len: int) -> tuple[str, ...] | None:
    try:
        label = normalize_label(article.title)
    except DataError:
        return None
    if len(label) > max_label_len:
        return None
    return tuple(label)


def build_pairs_tfidf(
    corpus: Iterable[Article],
    index: DfIndex,
    stop: StopwordSet,
    rare: set[str],
    n_terms: int = DEFAULT_N_TERMS,
    max_label_len: int = DEFAULT_MAX_LABEL_LEN,
) -> Iterator[TopicLabelPair]:
    """Emit (top-n TFIDF terms, title label) pairs; articles with too few terms are skipped."""
    skipped = 0
    for article in corpus:
        label = _usable_label(article, max_label_len)
        body = preprocess_terms(tokenize(article.text), stop, rare)
        if label is None or len(set(body)) < n_terms:
            skipped += 1
            continue
        ranked = top_k_terms(body, index, n_terms)
        yield TopicLabelPair(terms=tuple(tok for tok, _ in ranked), label=label)
    if skipped:
        logger.info("build_pairs_tfidf: skipped %d articles", skipped)


def build_pairs_sent(
    corpus: Iterable[Article],
    stop: StopwordSet,
    rare: set[str],
    n_terms: int = DEFAULT_N_TERMS,
    max_label_len: int = DEFAULT_MAX_LABEL_LEN,
) -> Iterator[TopicLabelPair]:
    """Emit (first-n preprocessed body tokens, title label) pairs; duplicates kept."""
    skipped = 0
    for article in corpus:
        label = _usable_label(article, max_label_len)
        body = preprocess_terms(tokenize(article.text), stop, rare)
        if label is None or len(body) < n_terms:
            skipped += 1
            continue
        yield TopicLabelPair(terms=tuple(body[:n_terms]), label=label)
    if skipped:
        logger.info("build_pairs_sent: skipped %d articles", skipped)


def split_pairs(
    pairs: Sequence[TopicLabelPair],
    sizes: tuple[int, int, int],
    seed: int,
) -> tuple[list[TopicLabelPair], list[TopicLabelPair], list[TopicLabelPair]]:
    """Deterministic shuffle under seed, then contiguous slices of the given sizes."""
    n_train, n_valid, n_test = sizes
    if n_train + n_valid + n_test > len(pairs):
        raise DataError(
            f"requested split sizes {sizes} exceed {len(pairs)} available pairs"
        )
    perm = np.random.default_rng(seed).permutation(len(pairs))
    shuffled = [pairs[i] for i in perm]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_valid],
        shuffled[n_train + n_valid : n_train + n_valid + n_test],
    )


def build_vocab(
    train_pairs: Sequence[TopicLabelPair], min_count: int = 1
) -> tuple[Vocabulary, Vocabulary]:
    """Term vocabulary from topic terms, label vocabulary from labels.

    Ids are assigned by frequency descending, ties lexicographic, after the
    four reserved ids. Tokens below min_count are excluded (encode to UNK).
    """
    if not train_pairs:
        raise DataError("cannot build vocabulary from an empty training set")
    term_counts: Counter[str] = Counter()
    label_counts: Counter[str] = Counter()
    for pair in train_pairs:
        term_counts.update(pair.terms)
        label_counts.update(pair.label)

    def ordered(counts: Counter[str]) -> list[str]:
        kept = [tok for tok, n in counts.items() if n >= min_count]
        kept.sort(key=lambda tok: (-counts[tok], tok))
        return kept

    return Vocabulary(ordered(term_counts)), Vocabulary(ordered(label_counts))


def encode_pair(
    pair: TopicLabelPair,
    term_vocab: Vocabulary,
    label_vocab: Vocabulary,
    t_x: int = DEFAULT_N_TERMS,
    max_label_len: int = DEFAULT_MAX_LABEL_LEN,
) -> EncodedPair:
    """Map a pair to fixed-length id sequences (input PAD-right, target SOS...EOS PAD-right)."""
    if not pair.terms:
        raise DataError("cannot encode a pair with empty terms")
    if len(pair.terms) > t_x:
        raise DataError(f"pair has {len(pair.terms)} terms, more than t_x={t_x}")
    if len(pair.label) > max_label_len:
        raise DataError(
            f"label has {len(pair.label)} tokens, more than max_label_len={max_label_len}"
        )
    input_ids = [term_vocab.encode(tok) for tok in pair.terms]
    input_ids += [PAD_ID] * (t_x - len(input_ids))
    target_ids = [SOS_ID] + [label_vocab.encode(tok) for tok in pair.label] + [EOS_ID]
    target_ids += [PAD_ID] * (max_label_len + 2 - len(target_ids))
    return EncodedPair(input_ids=tuple(input_ids), target_ids=tuple(target_ids))


def encode_pairs(
    pairs: Iterable[TopicLabelPair],
    term_vocab: Vocabulary,
    label_vocab: Vocabulary,
    t_x: int = DEFAULT_N_TERMS,
    max_label_len: int = DEFAULT_MAX_LABEL_LEN,
    drop_oov_labels: bool = False,
) -> list[EncodedPair]:
    """Encode pairs, optionally dropping pairs whose label has out-of-vocab tokens."""
    encoded = []
    for pair in pairs:
        if drop_oov_labels and any(
            tok not in label_vocab.token_to_id for tok in pair.label
        ):
            continue
        encoded.append(encode_pair(pair, term_vocab, label_vocab, t_x, max_label_len))
    return encoded


def write_pairs(path: str | Path, pairs: Iterable[TopicLabelPair]) -> None:
    """TSV, one pair per line: label tokens space-joined, TAB, terms space-joined."""
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(" ".join(pair.label) + "\t" + " ".join(pair.terms) + "\n")


def read_pairs(path: str | Path) -> list[TopicLabelPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 2:
                raise DataError(
                    f"{path}:{lineno}: expected 2 tab-separated fields, got {len(fields)}"
                )
            label, terms = fields
            pairs.append(
                TopicLabelPair(terms=tuple(terms.split()), label=tuple(label.split()))
            )
    return pairs


def write_vocab(path: str | Path, vocab: Vocabulary) -> None:
    """One token per line; line number - 1 is the id; first four lines are reserved."""
    with open(path, "w", encoding="utf-8") as fh:
        for tok in vocab.id_to_token:
            fh.write(tok + "\n")


def read_vocab(path: str | Path) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        tokens = [line.rstrip("\n") for line in fh]
    if tuple(tokens[:4]) != RESERVED_TOKENS:
        raise DataError(f"{path}: first four lines must be {RESERVED_TOKENS}")
    return Vocabulary(tokens[4:])

"""Corpus ingestion and text preprocessing.

Reads title/body documents from JSON Lines, tokenizes, and filters tokens
(numbers, punctuation-only tokens, rare terms, stop words) to produce the
clean token streams the rest of the pipeline consumes.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DataError

TokenList = list[str]
StopwordSet = set[str]

# Tokens may contain letters, digits, and internal '.'/'-' (keeps "u.s.",
# "long-term", "3.5"). Everything else splits.
_TOKEN_RE = re.compile(r"[a-z0-9.\-]+")
_NON_WORD_RE = re.compile(r"^[0-9.\-]+$")


@dataclass(frozen=True)
class Article:
    """One source document: identifier, title, raw body text."""

    id: str
    title: str
    text: str


def tokenize(text: str) -> TokenList:
    """Lowercase and split into tokens, preserving abbreviation periods.

    Tokens with no letter and no digit are dropped. Leading periods/hyphens
    and trailing hyphens are stripped; a trailing period is stripped only
    when the token has no other period, so "u.s." survives but "etc." -> "etc".
    """
    tokens = []
    for raw in _TOKEN_RE.findall(text.lower()):
        tok = raw.lstrip(".-").rstrip("-")
        if tok.endswith(".") and "." not in tok[:-1]:
            tok = tok.rstrip(".")
        if tok and not all(c in ".-" for c in tok):
            tokens.append(tok)
    return tokens


def preprocess_terms(tokens: TokenList, stop: StopwordSet, rare: set[str]) -> TokenList:
    """Remove number-only tokens, stop words, and rare terms; keep order and duplicates."""
    return [
        t
        for t in tokens
        if not _NON_WORD_RE.match(t) and t not in stop and t not in rare
    ]


def normalize_label(title: str) -> TokenList:
    """Tokenize a title into a label. Stop words and digits are retained."""
    tokens = tokenize(title)
    if not tokens:
        raise DataError(f"title has no usable tokens: {title!r}")
    return tokens


def compute_rare_terms(corpus: Iterable[Article], min_count: int) -> set[str]:
    """Tokens whose total frequency across tokenized bodies is below min_count."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for article in corpus:
        counts.update(tokenize(article.text))
    return {tok for tok, n in counts.items() if n < min_count}


def read_corpus(path: str | Path) -> Iterator[Article]:
    """Stream articles from a JSON Lines file with "id", "title", "text" fields."""
    seen_ids: set[str] = set()
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read corpus file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise DataError(f"{path}:{lineno}: record is not an object")
            for field in ("id", "title", "text"):
                if field not in record or not isinstance(record[field], str):
                    raise DataError(f"{path}:{lineno}: missing string field {field!r}")
            if not record["title"].strip():
                raise DataError(f"{path}:{lineno}: empty title")
            if record["id"] in seen_ids:
                raise DataError(f"{path}:{lineno}: duplicate article id {record['id']!r}")
            seen_ids.add(record["id"])
            yield Article(id=record["id"], title=record["title"], text=record["text"])


def load_stopwords(path: str | Path) -> StopwordSet:
    """Read a stopword file: one token per line, '#' lines are comments."""
    words: StopwordSet = set()
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                tok = line.strip()
                if tok and not tok.startswith("#"):
                    words.add(tok.lower())
    except OSError as exc:
        raise DataError(f"cannot read stopword file {path}: {exc}") from exc
    return words

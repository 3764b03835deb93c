"""Document-frequency index and TFIDF term ranking."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .corpus import Article, StopwordSet, TokenList, preprocess_terms, tokenize
from .errors import DataError


@dataclass
class DfIndex:
    """Per-token document counts over a corpus."""

    n_docs: int = 0
    df: dict[str, int] = field(default_factory=dict)


def build_df_index(
    corpus: Iterable[Article], stop: StopwordSet, rare: set[str]
) -> DfIndex:
    """Count, for each token, the number of articles whose preprocessed body contains it."""
    index = DfIndex()
    for article in corpus:
        index.n_docs += 1
        for tok in set(preprocess_terms(tokenize(article.text), stop, rare)):
            index.df[tok] = index.df.get(tok, 0) + 1
    return index


def tfidf_score(tf: int, df: int, n_docs: int) -> float:
    """tf * ln(n_docs / df). Raw term frequency, natural-log idf, no smoothing."""
    if df <= 0 or n_docs <= 0:
        raise ValueError(f"df and n_docs must be positive (df={df}, n_docs={n_docs})")
    if tf == 0:
        return 0.0
    return tf * math.log(n_docs / df)


def rank_terms(term_counts: dict[str, int], index: DfIndex) -> list[tuple[str, float]]:
    """Rank terms by TFIDF descending; ties by higher tf, then lexicographic."""
    scored = [
        (tok, tfidf_score(tf, index.df[tok], index.n_docs))
        for tok, tf in term_counts.items()
    ]
    scored.sort(key=lambda item: (-item[1], -term_counts[item[0]], item[0]))
    return scored


def top_k_terms(
    article_tokens: TokenList, index: DfIndex, k: int
) -> list[tuple[str, float]]:
    """Top-k distinct tokens of an article ranked by TFIDF within the index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    counts = Counter(article_tokens)
    return rank_terms(counts, index)[:k]


def save_df_index(path: str | Path, index: DfIndex) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"N {index.n_docs}\n")
        for tok in sorted(index.df):
            fh.write(f"{tok}\t{index.df[tok]}\n")


def load_df_index(path: str | Path) -> DfIndex:
    index = DfIndex()
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != "N":
            raise DataError(f"{path}:1: expected 'N <n_docs>' header")
        index.n_docs = int(header[1])
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected '<token>\\t<df>'")
            tok, df = parts[0], int(parts[1])
            if not 1 <= df <= index.n_docs:
                raise DataError(f"{path}:{lineno}: df out of range for {tok!r}")
            index.df[tok] = df
    return index

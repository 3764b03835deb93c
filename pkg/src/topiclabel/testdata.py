"""Evaluation topics with rated gold labels, plus the topic-extension
procedure (embedding-centroid document retrieval + pooled-TFIDF top-k).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import (
    Article,
    StopwordSet,
    normalize_label,
    preprocess_terms,
    tokenize,
)
from .errors import DataError
from .evaluation import EmbeddingTable
from .tfidf import DfIndex, rank_terms


@dataclass(frozen=True)
class GoldLabel:
    label: tuple[str, ...]
    avg_rating: float


@dataclass(frozen=True)
class Topic:
    """Term list ordered by descending marginal probability, plus rated golds."""

    topic_id: str
    terms: tuple[str, ...]
    golds: tuple[GoldLabel, ...]
    truncated_extension: bool = False


def load_topics(path: str | Path) -> list[Topic]:
    """JSON Lines topics: topic_id, terms, gold_labels with ratings/avg_rating."""
    topics = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                topic_id = str(record["topic_id"])
                terms = tuple(record["terms"])
            except (KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad record: {exc}") from exc
            if not terms or len(set(terms)) != len(terms):
                raise DataError(f"{path}:{lineno}: terms must be non-empty and distinct")
            golds = []
            for entry in record.get("gold_labels", []):
                if "ratings" in entry:
                    ratings = [float(v) for v in entry["ratings"]]
                    if not ratings:
                        raise DataError(f"{path}:{lineno}: empty ratings list")
                    avg = sum(ratings) / len(ratings)
                    bad = [v for v in ratings if not 0.0 <= v <= 3.0]
                else:
                    avg = float(entry["avg_rating"])
                    bad = [] if 0.0 <= avg <= 3.0 else [avg]
                if bad:
                    raise DataError(
                        f"{path}:{lineno}: rating out of [0, 3]: {bad[0]}"
                    )
                golds.append(
                    GoldLabel(
                        label=tuple(normalize_label(entry["label"])),
                        avg_rating=avg,
                    )
                )
            topics.append(Topic(topic_id=topic_id, terms=terms, golds=tuple(golds)))
    return topics


def save_topics(path: str | Path, topics: Sequence[Topic]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for topic in topics:
            record = {
                "topic_id": topic.topic_id,
                "terms": list(topic.terms),
                "gold_labels": [
                    {"label": " ".join(g.label), "avg_rating": g.avg_rating}
                    for g in topic.golds
                ],
            }
            fh.write(json.dumps(record) + "\n")


def filter_gold_labels(topics: Sequence[Topic], min_avg: float = 2.0) -> list[Topic]:
    """Keep golds with average rating >= min_avg; drop topics left with none."""
    kept = []
    for topic in topics:
        golds = tuple(g for g in topic.golds if g.avg_rating >= min_avg)
        if golds:
            kept.append(replace(topic, golds=golds))
    return kept


def _centroid(tokens: Sequence[str], table: EmbeddingTable) -> np.ndarray | None:
    vecs = [table.vectors[t] for t in tokens if t in table]
    if not vecs:
        return None
    return np.mean(vecs, axis=0)


def rank_docs_for_topic(
    topic: Topic,
    corpus: Sequence[Article],
    table: EmbeddingTable,
    stop: StopwordSet,
    rare: set[str],
) -> list[tuple[str, float]]:
    """Rank articles by cosine between topic and document embedding centroids.

    Ties break by article id; documents with no in-table tokens score 0.
    """
    topic_vec = _centroid(topic.terms, table)
    if topic_vec is None:
        raise DataError(f"topic {topic.topic_id!r} has no in-table terms")
    topic_norm = np.linalg.norm(topic_vec)
    ranked = []
    for article in corpus:
        doc_vec = _centroid(preprocess_terms(tokenize(article.text), stop, rare), table)
        if doc_vec is None or topic_norm == 0.0:
            cosine = 0.0
        else:
            doc_norm = np.linalg.norm(doc_vec)
            cosine = (
                float(topic_vec @ doc_vec / (topic_norm * doc_norm))
                if doc_norm > 0.0
                else 0.0
            )
        ranked.append((article.id, cosine))
    ranked.sort(key=lambda item: (-item[1], item[0]))
    return ranked


def extend_topic(
    topic: Topic,
    corpus: Sequence[Article],
    index: DfIndex,
    table: EmbeddingTable,
    stop: StopwordSet,
    rare: set[str],
    n_docs: int = 5,
    k: int = 20,
) -> Topic:
    """Append the top-k pooled-TFIDF terms from the topic's closest documents.

    Term frequency is summed over the n_docs retrieved documents; terms
    already in the topic are excluded. If fewer than k new terms exist, all
    are appended and the topic is flagged.
    """
    if not corpus:
        raise DataError("extend_topic requires a non-empty corpus")
    top_ids = {
        doc_id
        for doc_id, _ in rank_docs_for_topic(topic, corpus, table, stop, rare)[:n_docs]
    }
    pooled: Counter[str] = Counter()
    for article in corpus:
        if article.id in top_ids:
            pooled.update(preprocess_terms(tokenize(article.text), stop, rare))
    for tok in topic.terms:
        pooled.pop(tok, None)
    additions = [tok for tok, _ in rank_terms(dict(pooled), index)[:k]]
    return replace(
        topic,
        terms=topic.terms + tuple(additions),
        truncated_extension=len(additions) < k,
    )

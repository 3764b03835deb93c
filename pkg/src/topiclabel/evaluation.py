"""Embedding-based greedy-match scoring of generated labels.

Each candidate token is paired with its most similar reference token under
cosine similarity (and vice versa), giving precision/recall/F. Per-topic
scores take the max over gold labels; the model score is the mean over
topics. Also provides the top-k term baselines and a paired bootstrap test.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import TokenList
from .errors import DataError


class EmbeddingTable:
    """token -> vector map with a fixed dimensionality."""

    def __init__(self, dim: int, vectors: dict[str, np.ndarray] | None = None):
        if dim < 1:
            raise ValueError("embedding dim must be positive")
        self.dim = dim
        self.vectors: dict[str, np.ndarray] = {}
        for tok, vec in (vectors or {}).items():
            self.add(tok, vec)

    def add(self, token: str, vector) -> None:
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise DataError(
                f"vector for {token!r} has length {vec.shape}, expected ({self.dim},)"
            )
        if not np.isfinite(vec).all():
            raise DataError(f"vector for {token!r} contains non-finite values")
        self.vectors[token] = vec

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Plain-text embeddings: optional "<count> <dim>" header, then "token v1 .. vD"."""
    table: EmbeddingTable | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                except ValueError:
                    pass
                else:
                    table = EmbeddingTable(int(parts[1]))
                    continue
            token, values = parts[0], parts[1:]
            if table is None:
                table = EmbeddingTable(len(values))
            if len(values) != table.dim:
                raise DataError(
                    f"{path}:{lineno}: vector length {len(values)} != dim {table.dim}"
                )
            try:
                table.add(token, [float(v) for v in values])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad number: {exc}") from exc
    if table is None:
        raise DataError(f"{path}: empty embedding file")
    return table


def save_embeddings(path: str | Path, table: EmbeddingTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for token, vec in table.vectors.items():
            fh.write(token + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _similarity(a: str, b: str, table: EmbeddingTable) -> float:
    if a not in table or b not in table:
        return 0.0
    return _cosine(table.vectors[a], table.vectors[b])


def greedy_match_prf(
    cand: TokenList, ref: TokenList, table: EmbeddingTable
) -> tuple[float, float, float]:
    """Greedy-match precision/recall/F between candidate and reference tokens."""
    if not cand or not ref:
        raise DataError("greedy_match_prf requires non-empty candidate and reference")
    p = float(np.mean([max(_similarity(c, r, table) for r in ref) for c in cand]))
    r = float(np.mean([max(_similarity(c, r, table) for c in cand) for r in ref]))
    f = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


@dataclass
class TopicEvalResult:
    topic_id: str
    predicted: tuple[str, ...]
    best_gold: tuple[str, ...]
    p: float
    r: float
    f: float


@dataclass
class EvalReport:
    results: list[TopicEvalResult]
    mean_p: float
    mean_r: float
    mean_f: float
    baselines: dict = field(default_factory=dict)
    p_values: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "topics": [
                {
                    "topic_id": res.topic_id,
                    "predicted": list(res.predicted),
                    "best_gold": list(res.best_gold),
                    "p": res.p,
                    "r": res.r,
                    "f": res.f,
                }
                for res in self.results
            ],
            "summary": {
                "mean_p": self.mean_p,
                "mean_r": self.mean_r,
                "mean_f": self.mean_f,
            },
        }
        if self.baselines:
            payload["baselines"] = self.baselines
        if self.p_values:
            payload["p_values"] = self.p_values
        return json.dumps(payload, indent=2)


def score_topic(
    cand: TokenList,
    golds: Sequence[TokenList],
    table: EmbeddingTable,
    topic_id: str = "",
) -> TopicEvalResult:
    """Score against every gold and keep the F-maximizing one (ties -> first)."""
    if not golds:
        raise DataError(f"topic {topic_id!r} has no gold labels")
    if not cand:
        return TopicEvalResult(topic_id, (), tuple(golds[0]), 0.0, 0.0, 0.0)
    best = None
    for gold in golds:
        p, r, f = greedy_match_prf(cand, gold, table)
        if best is None or f > best[2]:
            best = (p, r, f, tuple(gold))
    p, r, f, gold = best
    return TopicEvalResult(topic_id, tuple(cand), gold, p, r, f)


def score_model(results: Sequence[TopicEvalResult]) -> EvalReport:
    """Arithmetic means of p, r, f over topics."""
    if not results:
        raise DataError("cannot aggregate an empty result list")
    return EvalReport(
        results=list(results),
        mean_p=float(np.mean([res.p for res in results])),
        mean_r=float(np.mean([res.r for res in results])),
        mean_f=float(np.mean([res.f for res in results])),
    )


def baseline_label(terms: TokenList, k: int) -> TokenList:
    """Top-k baseline: first k terms of the probability-ranked term list."""
    if not terms:
        raise DataError("baseline_label requires non-empty terms")
    if k < 1:
        raise ValueError("k must be >= 1")
    return list(terms[:k])


def paired_bootstrap(
    scores_a: Sequence[float],
    scores_b: Sequence[float],
    n_resamples: int = 10_000,
    seed: int = 0,
) -> float:
    """Fraction of paired resamples in which mean(a) <= mean(b)."""
    if len(scores_a) != len(scores_b):
        raise DataError("score vectors must have equal length")
    if len(scores_a) < 2:
        raise DataError("need at least 2 paired scores")
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    rng = np.random.default_rng(seed)
    idx = rng.integers(len(a), size=(n_resamples, len(a)))
    return float(np.mean(a[idx].mean(axis=1) <= b[idx].mean(axis=1)))

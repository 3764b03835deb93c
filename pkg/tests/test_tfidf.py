import math
from collections import Counter

import numpy as np
import pytest

from topiclabel.corpus import Article, preprocess_terms, tokenize
from topiclabel.tfidf import (
    build_df_index,
    load_df_index,
    save_df_index,
    tfidf_score,
    top_k_terms,
)


def brute_force_rank(article_tokens, index, k):
    """Independent scorer: score every distinct term, same tie rule."""
    counts = Counter(article_tokens)
    scored = []
    for tok, tf in counts.items():
        score = tf * math.log(index.n_docs / index.df[tok])
        scored.append((tok, score))
    scored.sort(key=lambda it: (-it[1], -counts[it[0]], it[0]))
    return scored[:k]


class TestBuildDfIndex:
    def test_counts_documents(self):
        corpus = [Article("1", "t", "a b"), Article("2", "t", "a c")]
        index = build_df_index(corpus, set(), set())
        assert index.n_docs == 2
        assert index.df == {"a": 2, "b": 1, "c": 1}

    def test_empty_corpus(self):
        index = build_df_index([], set(), set())
        assert index.n_docs == 0 and index.df == {}

    def test_df_counts_docs_not_occurrences(self):
        index = build_df_index([Article("1", "t", "a a a")], set(), set())
        assert index.df == {"a": 1}

    def test_stopwords_excluded(self):
        index = build_df_index([Article("1", "t", "the a")], {"the"}, set())
        assert index.df == {"a": 1}


class TestTfidfScore:
    def test_ubiquitous_term_zero(self):
        assert tfidf_score(3, 10, 10) == 0.0

    def test_absent_term_zero(self):
        assert tfidf_score(0, 5, 10) == 0.0

    def test_formula(self):
        assert tfidf_score(2, 1, 4) == pytest.approx(2 * math.log(4), abs=1e-5)
        assert tfidf_score(2, 1, 4) == pytest.approx(2.77259, abs=1e-5)

    def test_zero_df_error(self):
        with pytest.raises(ValueError):
            tfidf_score(1, 0, 10)
        with pytest.raises(ValueError):
            tfidf_score(1, 1, 0)


class TestTopKTerms:
    def test_worked_example(self):
        corpus = [
            Article("1", "t", "a a b"),
            Article("2", "t", "b c"),
            Article("3", "t", "b d"),
        ]
        index = build_df_index(corpus, set(), set())
        got = top_k_terms(["a", "a", "b"], index, 2)
        assert got[0][0] == "a"
        assert got[0][1] == pytest.approx(2 * math.log(3), abs=1e-5)
        assert got[1] == ("b", 0.0)

    def test_k_larger_than_terms(self):
        index = build_df_index([Article("1", "t", "a b")], set(), set())
        assert len(top_k_terms(["a", "b"], index, 10)) == 2

    def test_tie_breaks_lexicographic(self):
        # two terms, same tf, same df -> same score; 'a' first
        corpus = [Article("1", "t", "b a"), Article("2", "t", "x")]
        index = build_df_index(corpus, set(), set())
        got = top_k_terms(["b", "a"], index, 2)
        assert [t for t, _ in got] == ["a", "b"]

    def test_matches_brute_force_on_random_corpora(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            vocab = [f"w{i}" for i in range(rng.integers(5, 60))]
            corpus = [
                Article(
                    f"d{i}", "t", " ".join(rng.choice(vocab, size=rng.integers(3, 30)))
                )
                for i in range(rng.integers(2, 50))
            ]
            index = build_df_index(corpus, set(), set())
            article = corpus[0]
            tokens = preprocess_terms(tokenize(article.text), set(), set())
            assert top_k_terms(tokens, index, 10) == brute_force_rank(tokens, index, 10)

    def test_corpus_duplication_invariance(self):
        base = [Article("1", "t", "a a b"), Article("2", "t", "b c")]
        dup = base + [Article(f"{a.id}x", a.title, a.text) for a in base]
        i1 = build_df_index(base, set(), set())
        i2 = build_df_index(dup, set(), set())
        s1 = top_k_terms(["a", "a", "b"], i1, 3)
        s2 = top_k_terms(["a", "a", "b"], i2, 3)
        for (t1, v1), (t2, v2) in zip(s1, s2):
            assert t1 == t2
            assert v1 == pytest.approx(v2, abs=1e-12)


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        corpus = [Article("1", "t", "a b"), Article("2", "t", "a c")]
        index = build_df_index(corpus, set(), set())
        path = tmp_path / "index.txt"
        save_df_index(path, index)
        loaded = load_df_index(path)
        assert loaded.n_docs == index.n_docs and loaded.df == index.df

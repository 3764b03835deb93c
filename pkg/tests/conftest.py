import sys

import numpy as np
import pytest

from topiclabel.corpus import Article
from topiclabel.evaluation import EmbeddingTable


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the one-line-per-criterion acceptance verdicts after the run."""
    module = sys.modules.get("test_acceptance") or sys.modules.get(
        "tests.test_acceptance"
    )
    lines = getattr(module, "ACCEPTANCE_LINES", None)
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def make_corpus(rng, n_docs, vocab_size, words_per_doc=40):
    vocab = [f"word{i}" for i in range(vocab_size)]
    articles = []
    for i in range(n_docs):
        body = " ".join(rng.choice(vocab, size=words_per_doc))
        articles.append(Article(id=f"doc{i}", title=f"title {i}", text=body))
    return articles


@pytest.fixture
def tiny_table():
    """2-d table: e(a)=(1,0), e(b)=(0,1), e(c)=(sqrt2/2, sqrt2/2)."""
    s = np.sqrt(2.0) / 2.0
    return EmbeddingTable(2, {"a": [1.0, 0.0], "b": [0.0, 1.0], "c": [s, s]})

"""Scikit-learn style estimators wrapping the pipeline.

TfidfTopicTermExtractor turns raw articles into synthetic topic-term lists;
Seq2SeqLabeler fits the labelling model on (terms, label) pairs and
predicts labels for new term lists. Both compose with sklearn tooling
through get_params/set_params.
"""

from __future__ import annotations

from typing import Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .corpus import (
    Article,
    TokenList,
    compute_rare_terms,
    preprocess_terms,
    tokenize,
)
from .dataset import TopicLabelPair, build_vocab, encode_pairs
from .errors import DataError
from .model import ModelConfig, train
from .tfidf import build_df_index, top_k_terms


class TfidfTopicTermExtractor(BaseEstimator, TransformerMixin):
    """Extract per-article topic terms ranked by TFIDF over a fitted corpus."""

    def __init__(self, n_terms: int = 30, rare_min_count: int = 5, stopwords=None):
        self.n_terms = n_terms
        self.rare_min_count = rare_min_count
        self.stopwords = stopwords

    def fit(self, X: Sequence[Article], y=None):
        stop = set(self.stopwords or ())
        self.rare_ = compute_rare_terms(X, self.rare_min_count)
        self.stop_ = stop
        self.index_ = build_df_index(X, stop, self.rare_)
        return self

    def transform(self, X: Sequence[Article]) -> list[TokenList]:
        if not hasattr(self, "index_"):
            raise NotFittedError("TfidfTopicTermExtractor is not fitted")
        out = []
        for article in X:
            body = preprocess_terms(tokenize(article.text), self.stop_, self.rare_)
            ranked = top_k_terms(body, self.index_, self.n_terms) if body else []
            out.append([tok for tok, _ in ranked])
        return out


class Seq2SeqLabeler(BaseEstimator):
    """Attention seq2seq labeller with a fit/predict surface.

    fit takes term lists X and label token lists y (or TopicLabelPair
    objects in X with y omitted); predict returns decoded label token
    lists for new term lists.
    """

    def __init__(
        self,
        emb_dim: int = 300,
        hidden: int = 200,
        enc_layers: int = 1,
        dec_layers: int = 1,
        dropout: float = 0.1,
        lr: float = 0.001,
        optimizer: str = "adam",
        epochs: int = 10,
        batch_size: int = 64,
        t_x: int = 30,
        max_label_len: int = 10,
        vocab_min_count: int = 1,
        early_stop_train_loss: float = 0.0,
        seed: int = 0,
    ):
        self.emb_dim = emb_dim
        self.hidden = hidden
        self.enc_layers = enc_layers
        self.dec_layers = dec_layers
        self.dropout = dropout
        self.lr = lr
        self.optimizer = optimizer
        self.epochs = epochs
        self.batch_size = batch_size
        self.t_x = t_x
        self.max_label_len = max_label_len
        self.vocab_min_count = vocab_min_count
        self.early_stop_train_loss = early_stop_train_loss
        self.seed = seed

    def _as_pairs(self, X, y) -> list[TopicLabelPair]:
        if y is None:
            pairs = list(X)
            if not all(isinstance(p, TopicLabelPair) for p in pairs):
                raise DataError("without y, X must be TopicLabelPair objects")
            return pairs
        return [
            TopicLabelPair(terms=tuple(terms), label=tuple(label))
            for terms, label in zip(X, y, strict=True)
        ]

    def fit(self, X, y=None):
        pairs = self._as_pairs(X, y)
        self.term_vocab_, self.label_vocab_ = build_vocab(pairs, self.vocab_min_count)
        config = ModelConfig(
            term_vocab_size=len(self.term_vocab_),
            label_vocab_size=len(self.label_vocab_),
            emb_dim=self.emb_dim,
            enc_hidden=self.hidden,
            dec_hidden=self.hidden,
            enc_layers=self.enc_layers,
            dec_layers=self.dec_layers,
            dropout=self.dropout,
            lr=self.lr,
            optimizer=self.optimizer,
            t_x=self.t_x,
            max_label_len=self.max_label_len,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
            early_stop_train_loss=self.early_stop_train_loss,
        )
        encoded = encode_pairs(
            pairs,
            self.term_vocab_,
            self.label_vocab_,
            self.t_x,
            self.max_label_len,
            drop_oov_labels=True,
        )
        self.model_, self.history_ = train(encoded, [], config)
        return self

    def predict(self, X: Sequence[TokenList]) -> list[TokenList]:
        if not hasattr(self, "model_"):
            raise NotFittedError("Seq2SeqLabeler is not fitted")
        labels = []
        for terms in X:
            ids = [self.term_vocab_.encode(tok) for tok in terms[: self.t_x]]
            ids += [0] * (self.t_x - len(ids))
            decoded = self.model_.greedy_decode(ids)
            labels.append([self.label_vocab_.decode(i) for i in decoded])
        return labels

"""Topic labelling toolkit: distant-supervision datasets, a from-scratch
attention seq2seq labeller, and embedding-based label evaluation."""

from .corpus import Article, load_stopwords, normalize_label, preprocess_terms, tokenize
from .dataset import TopicLabelPair, Vocabulary, build_vocab, encode_pair, split_pairs
from .errors import DataError, NumericError
from .estimators import Seq2SeqLabeler, TfidfTopicTermExtractor
from .evaluation import (
    EmbeddingTable,
    baseline_label,
    greedy_match_prf,
    paired_bootstrap,
    score_model,
    score_topic,
)
from .model import (
    ModelConfig,
    Seq2SeqModel,
    init_model,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .tfidf import DfIndex, build_df_index, tfidf_score, top_k_terms

__version__ = "0.1.0"

__all__ = [
    "Article",
    "DataError",
    "DfIndex",
    "EmbeddingTable",
    "ModelConfig",
    "NumericError",
    "Seq2SeqLabeler",
    "Seq2SeqModel",
    "TfidfTopicTermExtractor",
    "TopicLabelPair",
    "Vocabulary",
    "baseline_label",
    "build_df_index",
    "build_vocab",
    "encode_pair",
    "greedy_match_prf",
    "init_model",
    "load_checkpoint",
    "load_stopwords",
    "normalize_label",
    "paired_bootstrap",
    "preprocess_terms",
    "save_checkpoint",
    "score_model",
    "score_topic",
    "split_pairs",
    "tfidf_score",
    "tokenize",
    "top_k_terms",
    "train",
]

"""Relevance-constrained query-focused summarization decoding."""

from .constraints import Clause, Cnf, ConstraintTracker, Literal, MorphologyTable, build_cnf, expand_word_forms
from .decoder import BeamCandidate, DecoderConfig, beam_search, nld_decode, nld_score, nld_search
from .eval import PairedTestResult, RougeScores, paired_t_test, rouge_l, rouge_n, rouge_scores
from .lm import NGramLM, load_lm, save_lm, train_ngram
from .pipeline import (
    ConstrainedSummarizer,
    ConstraintExtractor,
    PipelineConfig,
    QfsExample,
    constrain_example,
    load_dataset,
    run_pipeline,
)
from .saliency import (
    BilinearScorer,
    EmbeddingTable,
    SaliencyVector,
    integrad,
    integrated_gradients,
    loss_from_logit,
    normalize_saliency,
    select_constraint_tokens,
)
from .text import StopList, Vocabulary, build_vocab, is_content_token, tokenize

__version__ = "0.1.0"

__all__ = [
    "beam_search",
    "BeamCandidate",
    "BilinearScorer",
    "build_cnf",
    "build_vocab",
    "Clause",
    "Cnf",
    "constrain_example",
    "ConstrainedSummarizer",
    "ConstraintExtractor",
    "ConstraintTracker",
    "DecoderConfig",
    "EmbeddingTable",
    "expand_word_forms",
    "integrad",
    "integrated_gradients",
    "is_content_token",
    "Literal",
    "load_dataset",
    "load_lm",
    "loss_from_logit",
    "MorphologyTable",
    "NGramLM",
    "nld_decode",
    "nld_score",
    "nld_search",
    "normalize_saliency",
    "paired_t_test",
    "PairedTestResult",
    "PipelineConfig",
    "QfsExample",
    "rouge_l",
    "rouge_n",
    "rouge_scores",
    "RougeScores",
    "run_pipeline",
    "SaliencyVector",
    "save_lm",
    "select_constraint_tokens",
    "StopList",
    "tokenize",
    "train_ngram",
    "Vocabulary",
]

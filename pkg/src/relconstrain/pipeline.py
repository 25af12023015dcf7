"""Query-focused summarization with relevance constraints, end to end.

The n-gram model is trained on ``query ⊕ <sep> ⊕ summary`` token sequences
and decodes conditioned on ``query ⊕ <sep>``. Document content reaches the
output only through the constraints built from salient document tokens.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_choice, check_positive_int
from .constraints import Cnf, MorphologyTable, build_cnf, cnf_satisfied
from .decoder import BeamCandidate, DecoderConfig, beam_search_candidate, nld_search
from .eval import PRF, paired_t_test, rouge_scores
from .lm import NGramLM, load_lm
from .saliency import (
    DEFAULT_DIM,
    DEFAULT_STEPS,
    EmbeddingTable,
    SaliencyVector,
    compute_saliency,
    load_scorer,
    seeded_bilinear,
    select_constraint_tokens,
)
from .text import SEP, StopList, Vocabulary, build_vocab, tokenize

log = logging.getLogger(__name__)

REPORT_VERSION = 1
SOURCES = ("query", "document", "both")
REQUIRED_FIELDS = ("id", "query", "document", "summary")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class QfsExample:
    id: str
    query: str
    document: str
    summary: str = ""


def load_dataset(path: str | Path, max_doc_tokens: int | None = 512) -> list[QfsExample]:
    """Read a JSONL dataset, one ``{"id","query","document","summary"}`` object per line.

    Documents longer than ``max_doc_tokens`` tokens are truncated with a
    warning.
    """
    examples: list[QfsExample] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(row, dict):
                raise DataError(f"line {lineno}: expected a JSON object")
            for name in REQUIRED_FIELDS:
                if name not in row:
                    raise DataError(f"line {lineno}: missing field {name}")
            ex_id = str(row["id"])
            if ex_id in seen:
                raise DataError(f"line {lineno}: duplicate id {ex_id!r}")
            seen.add(ex_id)
            query, document = str(row["query"]), str(row["document"])
            if not query.strip() or not document.strip():
                raise DataError(f"line {lineno}: query and document must be non-empty")
            if max_doc_tokens is not None:
                doc_tokens = tokenize(document)
                if len(doc_tokens) > max_doc_tokens:
                    log.warning("example %s: document truncated from %d to %d tokens", ex_id, len(doc_tokens), max_doc_tokens)
                    document = " ".join(doc_tokens[:max_doc_tokens])
            examples.append(QfsExample(ex_id, query, document, str(row["summary"])))
    return examples


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(_jsonable(row), ensure_ascii=False) + "\n")


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def attribution_inputs(query_tokens: Sequence[str], doc_tokens: Sequence[str], source: str):
    """(context tokens, attributed tokens) for a constraint source.

    The scorer attributes its second argument, so the side the constraints
    come from goes there and the other side acts as context.
    """
    check_choice(source, "constraint_source", SOURCES)
    if source == "document":
        return list(query_tokens), list(doc_tokens)
    if source == "query":
        return list(doc_tokens), list(query_tokens)
    return list(query_tokens), list(query_tokens) + list(doc_tokens)


def example_saliency(ex: QfsExample, scorer, embeddings: EmbeddingTable, source: str = "document",
                     steps: int = DEFAULT_STEPS) -> SaliencyVector:
    context, attributed = attribution_inputs(tokenize(ex.query), tokenize(ex.document), source)
    return compute_saliency(scorer, embeddings, context, attributed, steps)


def constrain_example(ex: QfsExample, scorer, embeddings: EmbeddingTable, stops: StopList,
                      morph: MorphologyTable | None, k: int = 3, source: str = "document",
                      steps: int = DEFAULT_STEPS) -> Cnf:
    saliency = example_saliency(ex, scorer, embeddings, source, steps)
    return build_cnf(select_constraint_tokens(saliency, stops, k), morph)


class ConstraintExtractor(TransformerMixin, BaseEstimator):
    """Turn QFS examples into constraint CNFs via Integrated Gradients saliency.

    ``scorer_path`` loads a scorer file; otherwise a seeded bilinear toy
    scorer of dimension ``scorer_dim`` is used.
    """

    def __init__(self, k_constraints: int = 3, constraint_source: str = "document", ig_steps: int = DEFAULT_STEPS,
                 scorer_path: str | None = None, scorer_seed: int = 0, scorer_dim: int = DEFAULT_DIM,
                 stopwords: str | None = None, morphology: str | None = None):
        self.k_constraints = k_constraints
        self.constraint_source = constraint_source
        self.ig_steps = ig_steps
        self.scorer_path = scorer_path
        self.scorer_seed = scorer_seed
        self.scorer_dim = scorer_dim
        self.stopwords = stopwords
        self.morphology = morphology

    def fit(self, X=None, y=None):
        check_positive_int(self.k_constraints, "k_constraints")
        check_positive_int(self.ig_steps, "ig_steps")
        check_choice(self.constraint_source, "constraint_source", SOURCES)
        if self.scorer_path:
            self.scorer_, self.embeddings_ = load_scorer(self.scorer_path)
        else:
            self.scorer_, self.embeddings_ = seeded_bilinear(self.scorer_dim, self.scorer_seed)
        self.stops_ = StopList.from_file(self.stopwords) if self.stopwords else StopList.default()
        self.morph_ = MorphologyTable.from_tsv(self.morphology) if self.morphology else MorphologyTable.default()
        return self

    def saliency(self, ex: QfsExample) -> SaliencyVector:
        check_is_fitted(self, "scorer_")
        return example_saliency(ex, self.scorer_, self.embeddings_, self.constraint_source, self.ig_steps)

    def selected_tokens(self, ex: QfsExample) -> list[str]:
        return select_constraint_tokens(self.saliency(ex), self.stops_, self.k_constraints)

    def transform(self, X: Sequence[QfsExample]) -> list[Cnf]:
        check_is_fitted(self, "scorer_")
        return [build_cnf(self.selected_tokens(ex), self.morph_) for ex in X]


def lm_sequence(query: str, summary: str | None = None) -> list[str]:
    seq = tokenize(query) + [SEP]
    if summary is not None:
        seq += tokenize(summary)
    return seq


@dataclass
class Decoded:
    id: str
    tokens: list[str]
    cnf: Cnf
    candidate: BeamCandidate
    satisfied: bool

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def row(self) -> dict:
        return {
            "id": self.id,
            "prediction": self.text,
            "constraints": self.cnf.as_lists(),
            "satisfied": self.satisfied,
            "cum_logprob": self.candidate.cum_logprob,
        }


class ConstrainedSummarizer(BaseEstimator):
    """Summarize (query, document) pairs with an n-gram model and relevance constraints.

    ``fit`` trains the language model on the examples' queries and reference
    summaries; ``predict`` decodes one summary per example. With
    ``constrained=False`` decoding is plain beam search.
    """

    def __init__(self, lm_order: int = 3, lm_smoothing_k: float = 1.0, k_constraints: int = 3,
                 constraint_source: str = "document", ig_steps: int = DEFAULT_STEPS, scorer_path: str | None = None,
                 scorer_seed: int = 0, scorer_dim: int = DEFAULT_DIM, stopwords: str | None = None,
                 morphology: str | None = None, beam_width: int = 20, lambda_: float = 0.1, max_len: int = 32,
                 expand_top: int = 20, clause_slack: int = 1, likelihood_keep: int | None = None,
                 constrained: bool = True):
        self.lm_order = lm_order
        self.lm_smoothing_k = lm_smoothing_k
        self.k_constraints = k_constraints
        self.constraint_source = constraint_source
        self.ig_steps = ig_steps
        self.scorer_path = scorer_path
        self.scorer_seed = scorer_seed
        self.scorer_dim = scorer_dim
        self.stopwords = stopwords
        self.morphology = morphology
        self.beam_width = beam_width
        self.lambda_ = lambda_
        self.max_len = max_len
        self.expand_top = expand_top
        self.clause_slack = clause_slack
        self.likelihood_keep = likelihood_keep
        self.constrained = constrained

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(self.beam_width, self.lambda_, self.max_len, self.expand_top,
                             self.clause_slack, self.likelihood_keep)

    def _extractor(self) -> ConstraintExtractor:
        return ConstraintExtractor(self.k_constraints, self.constraint_source, self.ig_steps, self.scorer_path,
                                   self.scorer_seed, self.scorer_dim, self.stopwords, self.morphology).fit()

    def fit(self, X: Sequence[QfsExample], y=None, lm: NGramLM | None = None):
        """Train the LM on ``X`` (or adopt a pre-trained ``lm``) and load the constraint extractor."""
        self.decoder_config()
        if lm is None:
            if len(X) == 0:
                raise ValueError("empty corpus")
            corpus = [lm_sequence(ex.query, ex.summary) for ex in X]
            vocab = build_vocab(corpus, extra=[SEP])
            lm = NGramLM(self.lm_order, self.lm_smoothing_k).fit(corpus, vocab=vocab)
        elif SEP not in lm.vocab:
            raise ValueError(f"language model vocabulary lacks the separator {SEP}")
        self.lm_ = lm
        self.extractor_ = self._extractor()
        return self

    def constraints(self, ex: QfsExample) -> Cnf:
        check_is_fitted(self, "lm_")
        return self.extractor_.transform([ex])[0]

    def decode(self, ex: QfsExample, constrained: bool | None = None, cnf: Cnf | None = None, trace=None) -> Decoded:
        check_is_fitted(self, "lm_")
        constrained = self.constrained if constrained is None else constrained
        vocab: Vocabulary = self.lm_.vocab
        if cnf is None:
            cnf = self.constraints(ex)
        prefix = vocab.encode(lm_sequence(ex.query))
        banned = {vocab.bos, vocab.unk, vocab.id_of(SEP)}
        cfg = self.decoder_config()
        if constrained:
            cand = nld_search(self.lm_, prefix, cnf.encode(vocab), cfg, banned=banned, trace=trace)
        else:
            cand = beam_search_candidate(self.lm_, prefix, cfg, banned=banned)
        tokens = vocab.decode(cand.body)
        satisfied = cnf_satisfied(cnf, tokens)
        if constrained and satisfied != cand.tracker.all_satisfied(cnf):
            raise RuntimeError(f"example {ex.id}: decoder tracker disagrees with full re-scan")
        return Decoded(ex.id, tokens, cnf, cand, satisfied)

    def predict(self, X: Sequence[QfsExample]) -> list[str]:
        return [self.decode(ex).text for ex in X]


@dataclass
class PipelineConfig:
    train: str = ""
    test: str = ""
    dev: str = ""
    output_dir: str = "out"
    lm: str = ""
    lm_order: int = 3
    lm_smoothing_k: float = 1.0
    scorer: str = ""
    scorer_seed: int = 0
    scorer_dim: int = DEFAULT_DIM
    stopwords: str = ""
    morphology: str = ""
    k_constraints: int = 3
    constraint_source: str = "document"
    ig_steps: int = DEFAULT_STEPS
    beam_width: int = 20
    lambda_: float = 0.1
    max_len: int = 32
    expand_top: int = 20
    clause_slack: int = 1
    likelihood_keep: int = 0
    max_doc_tokens: int = 512
    baseline: bool = True

    def validate(self) -> "PipelineConfig":
        check_choice(self.constraint_source, "constraint_source", SOURCES)
        if not self.test:
            raise ValueError("config needs a test dataset path")
        if not self.train and not self.lm:
            raise ValueError("config needs a train dataset path or a trained lm file")
        for name in ("train", "test", "dev", "lm", "scorer", "stopwords", "morphology"):
            value = getattr(self, name)
            if value and not Path(value).exists():
                raise FileNotFoundError(f"{name}: no such file {value}")
        return self

    def summarizer(self) -> ConstrainedSummarizer:
        return ConstrainedSummarizer(
            lm_order=self.lm_order, lm_smoothing_k=self.lm_smoothing_k, k_constraints=self.k_constraints,
            constraint_source=self.constraint_source, ig_steps=self.ig_steps, scorer_path=self.scorer or None,
            scorer_seed=self.scorer_seed, scorer_dim=self.scorer_dim, stopwords=self.stopwords or None,
            morphology=self.morphology or None, beam_width=self.beam_width, lambda_=self.lambda_,
            max_len=self.max_len, expand_top=self.expand_top, clause_slack=self.clause_slack,
            likelihood_keep=self.likelihood_keep or None,
        )

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def config_key(name: str) -> str:
    """Normalize ``beam-width`` / ``beam_width`` / ``lambda`` to the field name."""
    key = name.strip().replace("-", "_")
    return "lambda_" if key == "lambda" else key


def coerce_value(cfg_field: dataclasses.Field, raw: Any):
    if not isinstance(raw, str):
        return raw
    kind = cfg_field.type if isinstance(cfg_field.type, str) else cfg_field.type.__name__
    if kind == "bool":
        lowered = raw.strip().lower()
        if lowered not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise ValueError(f"{cfg_field.name}: expected a boolean, got {raw!r}")
        return lowered in ("1", "true", "yes", "on")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw.strip()


def parse_config(text: str, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    """Build a config from ``key = value`` lines, then apply ``overrides``."""
    fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key = config_key(key)
        if key not in fields:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        values[key] = coerce_value(fields[key], value)
    for key, value in (overrides or {}).items():
        key = config_key(key)
        if key not in fields:
            raise ValueError(f"unknown config key {key!r}")
        if value is not None:
            values[key] = coerce_value(fields[key], value)
    return PipelineConfig(**values)


def mean_prf(scores: Sequence[PRF]) -> dict:
    if not scores:
        return {"p": 0.0, "r": 0.0, "f1": 0.0}
    return {
        "p": float(np.mean([s.precision for s in scores])),
        "r": float(np.mean([s.recall for s in scores])),
        "f1": float(np.mean([s.f1 for s in scores])),
    }


def summarize_scores(per_example: Sequence) -> dict:
    return {
        "r1": mean_prf([s.r1 for s in per_example]),
        "r2": mean_prf([s.r2 for s in per_example]),
        "rl": mean_prf([s.rl for s in per_example]),
    }


def compare_f1(a: Sequence, b: Sequence) -> dict:
    """Paired t-test per metric on per-example F1 of two score lists."""
    out = {}
    for metric in ("r1", "r2", "rl"):
        if len(a) < 2:
            out[metric] = None
            continue
        fa = [getattr(s, metric).f1 for s in a]
        fb = [getattr(s, metric).f1 for s in b]
        out[metric] = paired_t_test(fa, fb).as_dict()
    return out


def satisfaction_rate(decoded: Sequence[Decoded]) -> float:
    """Share of outputs satisfying every clause; vacuously 1.0 with no examples."""
    if not decoded:
        return 1.0
    return sum(d.satisfied for d in decoded) / len(decoded)


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Train, constrain, decode, score; write predictions and ``report.json`` to ``cfg.output_dir``."""
    cfg.validate()
    model = cfg.summarizer()
    if cfg.lm:
        model.fit([], lm=load_lm(cfg.lm))
    else:
        model.fit(load_dataset(cfg.train, cfg.max_doc_tokens))
    test = load_dataset(cfg.test, cfg.max_doc_tokens)

    constrained, baseline = [], []
    for ex in test:
        try:
            cnf = model.constraints(ex)
            constrained.append(model.decode(ex, constrained=True, cnf=cnf))
            if cfg.baseline:
                baseline.append(model.decode(ex, constrained=False, cnf=cnf))
        except ValueError as exc:
            raise DataError(f"example {ex.id}: {exc}") from exc
        except RuntimeError as exc:
            raise RuntimeError(f"example {ex.id}: {exc}") from exc

    refs = {ex.id: tokenize(ex.summary) for ex in test}
    c_scores = [rouge_scores(d.tokens, refs[d.id]) for d in constrained]
    report: dict[str, Any] = {
        "report_version": REPORT_VERSION,
        "n_examples": len(test),
        "config": cfg.as_dict(),
        "constrained": {**summarize_scores(c_scores), "satisfaction_rate": satisfaction_rate(constrained)},
    }
    rows = []
    for d, s in zip(constrained, c_scores):
        rows.append({"id": d.id, "n_clauses": len(d.cnf), "satisfied": d.satisfied,
                     "r1_f1": s.r1.f1, "r2_f1": s.r2.f1, "rl_f1": s.rl.f1})
    if cfg.baseline:
        b_scores = [rouge_scores(d.tokens, refs[d.id]) for d in baseline]
        report["unconstrained"] = {**summarize_scores(b_scores), "satisfaction_rate": satisfaction_rate(baseline)}
        report["paired_t_test"] = compare_f1(c_scores, b_scores)
        for row, d, s in zip(rows, baseline, b_scores):
            row.update({"baseline_satisfied": d.satisfied, "baseline_r1_f1": s.r1.f1,
                        "baseline_r2_f1": s.r2.f1, "baseline_rl_f1": s.rl.f1})
    report["examples"] = rows

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "predictions.jsonl", (d.row() for d in constrained))
    if cfg.baseline:
        write_jsonl(out / "predictions_unconstrained.jsonl", (d.row() for d in baseline))
    (out / "report.json").write_text(json.dumps(_jsonable(report), indent=2) + "\n", encoding="utf-8")
    return report


def read_predictions(path: str | Path) -> dict[str, str]:
    preds: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path} line {lineno}: invalid JSON ({exc.msg})") from exc
            text = row.get("prediction", row.get("summary", row.get("reference")))
            if "id" not in row or text is None:
                raise DataError(f"{path} line {lineno}: need 'id' and 'prediction' (or 'summary'/'reference')")
            preds[str(row["id"])] = str(text)
    return preds


def evaluate_files(predictions: str | Path, references: str | Path, compare: str | Path | None = None) -> dict:
    """ROUGE report for a predictions file against references, keyed by ``id``."""
    refs = read_predictions(references)
    preds = read_predictions(predictions)
    missing = sorted(set(refs) - set(preds))
    if missing:
        raise DataError(f"predictions missing ids: {', '.join(missing[:5])}")
    ids = sorted(refs)
    scores = [rouge_scores(tokenize(preds[i]), tokenize(refs[i])) for i in ids]
    report: dict[str, Any] = {**summarize_scores(scores), "n_examples": len(ids)}
    if compare is not None:
        other = read_predictions(compare)
        missing = sorted(set(refs) - set(other))
        if missing:
            raise DataError(f"comparison predictions missing ids: {', '.join(missing[:5])}")
        other_scores = [rouge_scores(tokenize(other[i]), tokenize(refs[i])) for i in ids]
        report["compare"] = summarize_scores(other_scores)
        report["paired_t_test"] = compare_f1(scores, other_scores)
    return _jsonable(report)

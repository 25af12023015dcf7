"""Next-token probability sources.

Any object with a ``vocab`` attribute and a ``next_token_logprobs(prefix)``
method returning a full log-distribution over ``vocab`` can drive the
decoders. :class:`NGramLM` is the built-in, trainable implementation.
"""

from __future__ import annotations

import math
from collections import Counter
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int, check_positive_real
from .text import Vocabulary, build_vocab

LM_MAGIC = "RELCONSTRAIN-LM"
LM_VERSION = 1


@runtime_checkable
class LanguageModel(Protocol):
    vocab: Vocabulary

    def next_token_logprobs(self, prefix: Sequence[int]) -> np.ndarray: ...


class NGramLM(BaseEstimator):
    """Add-k smoothed n-gram language model over a word vocabulary.

    Parameters
    ----------
    order : int
        Markov order; contexts are the previous ``order - 1`` tokens.
    smoothing_k : float
        Pseudo-count added to every (context, token) pair.

    Attributes
    ----------
    vocab_ : Vocabulary
    counts_ : dict
        ``context tuple -> Counter(token id -> count)``.
    totals_ : dict
        ``context tuple -> total count``.
    """

    def __init__(self, order: int = 3, smoothing_k: float = 1.0):
        self.order = order
        self.smoothing_k = smoothing_k

    def fit(self, X, y=None, vocab: Vocabulary | None = None):
        """Train on ``X``, a sequence of tokenized sentences (surfaces).

        Unless ``vocab`` is given, the vocabulary is built from ``X``.
        """
        if len(X) == 0:
            raise ValueError("empty corpus")
        if vocab is None:
            vocab = build_vocab(X)
        return self._fit_ids([vocab.encode(s) for s in X], vocab)

    def _fit_ids(self, corpus: Sequence[Sequence[int]], vocab: Vocabulary):
        order = check_positive_int(self.order, "order")
        k = check_positive_real(self.smoothing_k, "smoothing_k")
        if len(corpus) == 0:
            raise ValueError("empty corpus")
        n = len(vocab)
        counts: dict[tuple[int, ...], Counter] = {}
        for sentence in corpus:
            for tok in sentence:
                if not 0 <= tok < n:
                    raise ValueError(f"token out of vocabulary: {tok}")
            padded = [vocab.bos] * (order - 1) + list(sentence) + [vocab.eos]
            for i in range(order - 1, len(padded)):
                ctx = tuple(padded[i - order + 1 : i])
                counts.setdefault(ctx, Counter())[padded[i]] += 1
        self._install(vocab, counts, order, k)
        return self

    def _install(self, vocab, counts, order, k):
        self.order = order
        self.smoothing_k = k
        self.vocab_ = vocab
        self.counts_ = counts
        self.totals_ = {ctx: sum(c.values()) for ctx, c in counts.items()}
        self._cache: dict[tuple[int, ...], np.ndarray] = {}

    @property
    def vocab(self) -> Vocabulary:
        check_is_fitted(self, "vocab_")
        return self.vocab_

    def context_of(self, prefix: Sequence[int]) -> tuple[int, ...]:
        """The last ``order - 1`` ids of the BOS-padded prefix."""
        if self.order == 1:
            return ()
        padded = [self.vocab_.bos] * (self.order - 1) + list(prefix)
        return tuple(padded[len(padded) - self.order + 1 :])

    def next_token_logprobs(self, prefix: Sequence[int]) -> np.ndarray:
        """Log-probability of every vocabulary id following ``prefix``.

        ``prefix`` holds body token ids only; BOS padding is implicit.
        """
        check_is_fitted(self, "vocab_")
        n = len(self.vocab_)
        for tok in prefix:
            if not 0 <= tok < n:
                raise ValueError(f"token out of vocabulary: {tok}")
        ctx = self.context_of(prefix)
        cached = self._cache.get(ctx)
        if cached is not None:
            return cached.copy()
        k = self.smoothing_k
        total = self.totals_.get(ctx, 0)
        denom = total + k * n
        out = np.full(n, math.log(k / denom))
        for tok, c in self.counts_.get(ctx, {}).items():
            out[tok] = math.log((c + k) / denom)
        out.setflags(write=False)
        self._cache[ctx] = out
        return out.copy()

    def prob(self, token: int, prefix: Sequence[int]) -> float:
        return float(math.exp(self.next_token_logprobs(prefix)[token]))

    def sequence_logprob(self, prefix: Sequence[int], body: Sequence[int]) -> float:
        """Sum of next-token log-probabilities of ``body`` after ``prefix``."""
        total = 0.0
        seq = list(prefix)
        for tok in body:
            total += float(self.next_token_logprobs(seq)[tok])
            seq.append(tok)
        return total


def train_ngram(
    corpus: Sequence[Sequence[int]], order: int, smoothing_k: float, vocab: Vocabulary
) -> NGramLM:
    """Train an :class:`NGramLM` on already-encoded sentences."""
    return NGramLM(order=order, smoothing_k=smoothing_k)._fit_ids(corpus, vocab)


def next_token_logprobs(lm: LanguageModel, prefix: Sequence[int]) -> np.ndarray:
    return lm.next_token_logprobs(prefix)


def save_lm(lm: NGramLM, path: str | Path) -> None:
    check_is_fitted(lm, "vocab_")
    lines = [
        f"{LM_MAGIC} v{LM_VERSION}",
        f"order={lm.order}",
        f"k={float(lm.smoothing_k)!r}",
    ]
    lines.extend(f"V {i} {s}" for i, s in enumerate(lm.vocab_.surfaces))
    for ctx in sorted(lm.counts_):
        head = " ".join(["C", *map(str, ctx), "|"])
        for tok in sorted(lm.counts_[ctx]):
            lines.append(f"{head} {tok} {lm.counts_[ctx][tok]}")
    lines.append("END")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_lm(path: str | Path) -> NGramLM:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].startswith(LM_MAGIC + " "):
        raise ValueError("malformed LM file: missing header")
    version = lines[0][len(LM_MAGIC) + 1 :].strip()
    if version != f"v{LM_VERSION}":
        raise ValueError(f"unsupported version: {version}")
    if lines[-1] != "END":
        raise ValueError("malformed LM file: truncated (no END marker)")
    try:
        order = _read_kv(lines[1], "order", int)
        k = _read_kv(lines[2], "k", float)
        surfaces: list[str] = []
        counts: dict[tuple[int, ...], Counter] = {}
        for lineno, line in enumerate(lines[3:-1], start=4):
            tag, _, rest = line.partition(" ")
            if tag == "V":
                idx, surface = rest.split(" ")
                if int(idx) != len(surfaces):
                    raise ValueError(f"line {lineno}: vocabulary ids not dense")
                surfaces.append(surface)
            elif tag == "C":
                ctx_part, tok_part = rest.split("|")
                ctx = tuple(int(t) for t in ctx_part.split())
                tok, count = (int(t) for t in tok_part.split())
                if len(ctx) != order - 1 or count < 1:
                    raise ValueError(f"line {lineno}: bad count record")
                counts.setdefault(ctx, Counter())[tok] = count
            else:
                raise ValueError(f"line {lineno}: unknown record {tag!r}")
        vocab = Vocabulary.from_surfaces(surfaces)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"malformed LM file: {exc}") from exc
    n = len(vocab)
    for ctx, c in counts.items():
        if any(not 0 <= t < n for t in (*ctx, *c)):
            raise ValueError("malformed LM file: id out of range")
    lm = NGramLM(order=order, smoothing_k=k)
    lm._install(vocab, counts, check_positive_int(order, "order"), check_positive_real(k, "smoothing_k"))
    return lm


def _read_kv(line: str, key: str, cast):
    name, sep, value = line.partition("=")
    if name != key or not sep:
        raise ValueError(f"expected '{key}=' line, got {line!r}")
    return cast(value)

"""ROUGE-1/2/L and paired significance testing."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, overlap: float, n_candidate: int, n_reference: int) -> "PRF":
        p = overlap / n_candidate if n_candidate else 0.0
        r = overlap / n_reference if n_reference else 0.0
        f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
        return cls(p, r, f1)

    def as_dict(self) -> dict:
        return {"p": self.precision, "r": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class RougeScores:
    r1: PRF
    r2: PRF
    rl: PRF

    def as_dict(self) -> dict:
        return {"r1": self.r1.as_dict(), "r2": self.r2.as_dict(), "rl": self.rl.as_dict()}


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int) -> PRF:
    """Clipped n-gram overlap."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cand, ref = _ngrams(candidate, n), _ngrams(reference, n)
    overlap = sum((cand & ref).values())
    return PRF.from_counts(overlap, sum(cand.values()), sum(ref.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> PRF:
    return PRF.from_counts(lcs_length(candidate, reference), len(candidate), len(reference))


def rouge_scores(candidate: Sequence[str], reference: Sequence[str]) -> RougeScores:
    return RougeScores(rouge_n(candidate, reference, 1), rouge_n(candidate, reference, 2), rouge_l(candidate, reference))


@dataclass(frozen=True)
class PairedTestResult:
    t_stat: float
    p_value: float
    df: int

    def as_dict(self) -> dict:
        return asdict(self)


def student_t_sf2(t: float, df: int) -> float:
    """Two-sided tail probability ``P(|T| >= |t|)`` for Student's t with ``df`` dof."""
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> PairedTestResult:
    """Two-sided paired t-test of ``a - b``.

    Differences with zero variance give ``t = ±inf, p = 0`` (nonzero mean)
    or ``t = 0, p = 1`` (zero mean).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired samples must have equal length, got {a.shape} and {b.shape}")
    n = a.shape[0]
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    diff = a - b
    mean = float(diff.mean())
    sd = float(diff.std(ddof=1))
    df = n - 1
    # rounding noise in "constant" differences counts as zero variance
    if sd <= 1e-12 * max(1.0, abs(mean)):
        if mean == 0.0:
            return PairedTestResult(0.0, 1.0, df)
        return PairedTestResult(math.copysign(math.inf, mean), 0.0, df)
    t = mean / (sd / math.sqrt(n))
    return PairedTestResult(t, min(1.0, max(0.0, student_t_sf2(t, df))), df)

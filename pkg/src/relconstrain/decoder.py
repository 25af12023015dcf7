"""Beam search and constraint-aware beam search over a next-token model.

Both searches run for at most ``max_len`` steps. At every step each live
candidate is extended by its ``expand_top`` most likely tokens; candidates
that emit EOS and win a beam slot move to a finished pool. The answer is
the best finished candidate, or the best live one if nothing finished.

Candidate order is always (score descending, token ids ascending), so a
tie goes to the lower token id and then to the shorter sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from ._validation import check_positive_int, check_positive_real
from .constraints import Cnf, ConstraintTracker, rescan

TraceFn = Callable[[dict], None]


@dataclass(frozen=True)
class DecoderConfig:
    beam_width: int = 20
    lambda_: float = 0.1
    max_len: int = 32
    expand_top: int = 20
    clause_slack: int = 1
    likelihood_keep: int | None = None

    def __post_init__(self):
        check_positive_int(self.beam_width, "beam_width")
        check_positive_real(self.lambda_, "lambda", allow_zero=True)
        check_positive_int(self.max_len, "max_len")
        check_positive_int(self.expand_top, "expand_top")
        check_positive_int(self.clause_slack, "clause_slack", minimum=0)
        if self.likelihood_keep is None:
            object.__setattr__(self, "likelihood_keep", 2 * self.beam_width)
        check_positive_int(self.likelihood_keep, "likelihood_keep", minimum=self.beam_width)


@dataclass(frozen=True)
class BeamCandidate:
    tokens: tuple[int, ...]
    cum_logprob: float
    tracker: ConstraintTracker = field(default_factory=ConstraintTracker)
    nld_score: float = 0.0
    finished: bool = False

    @property
    def body(self) -> list[int]:
        """Generated ids without the trailing EOS."""
        return list(self.tokens[:-1] if self.finished else self.tokens)


def _rank_key(c: BeamCandidate):
    return (-c.nld_score, c.tokens)


def _final_key(cnf: Cnf):
    return lambda c: (not c.tracker.all_satisfied(cnf), -c.nld_score, c.tokens)


def _default_banned(lm) -> set[int]:
    vocab = lm.vocab
    return {vocab.bos, vocab.unk}


def top_tokens(logprobs: np.ndarray, n: int, banned: Iterable[int] = ()) -> list[int]:
    """Ids of the ``n`` most likely tokens (ties: lower id), skipping banned and impossible ones."""
    lp = np.array(logprobs, dtype=float)
    banned = list(banned)
    if banned:
        lp[banned] = -np.inf
    order = np.lexsort((np.arange(len(lp)), -lp))
    return [int(i) for i in order[:n] if np.isfinite(lp[i])]


def beam_search(lm, prefix: Sequence[int], cfg: DecoderConfig, banned: Iterable[int] | None = None) -> list[int]:
    """Plain beam search on cumulative log-probability; returns body ids."""
    return beam_search_candidate(lm, prefix, cfg, banned).body


def beam_search_candidate(lm, prefix, cfg: DecoderConfig, banned=None) -> BeamCandidate:
    banned = _default_banned(lm) if banned is None else set(banned)
    eos = lm.vocab.eos
    prefix = list(prefix)
    live = [BeamCandidate((), 0.0)]
    finished: list[BeamCandidate] = []
    for _ in range(cfg.max_len):
        expansions = []
        for cand in live:
            lp = lm.next_token_logprobs(prefix + list(cand.tokens))
            for tok in top_tokens(lp, cfg.expand_top, banned):
                score = cand.cum_logprob + float(lp[tok])
                expansions.append(BeamCandidate(cand.tokens + (tok,), score, nld_score=score, finished=tok == eos))
        if not expansions:
            break
        expansions.sort(key=_rank_key)
        chosen = expansions[: cfg.beam_width]
        finished.extend(c for c in chosen if c.finished)
        live = [c for c in chosen if not c.finished]
        if not live:
            break
    pool = finished or live
    if not pool:
        return BeamCandidate((), 0.0)
    return min(pool, key=_rank_key)


def nld_score(cand: BeamCandidate, cnf: Cnf, lambda_: float) -> float:
    """Cumulative log-probability plus ``lambda_`` times the best partial-match ratio."""
    return cand.cum_logprob + lambda_ * cand.tracker.max_partial_ratio(cnf)


def group_candidates(cands: Sequence[BeamCandidate]) -> list[list[BeamCandidate]]:
    """Partition by satisfied-clause set.

    Groups come out ordered by (number satisfied desc, bitmask asc), each
    sorted best-first.
    """
    groups: dict[int, list[BeamCandidate]] = {}
    for c in cands:
        groups.setdefault(c.tracker.mask, []).append(c)
    ordered = sorted(groups.items(), key=lambda kv: (-bin(kv[0]).count("1"), kv[0]))
    return [sorted(members, key=_rank_key) for _, members in ordered]


def prune(cands: list[BeamCandidate], keep: int, slack: int) -> list[BeamCandidate]:
    kept = sorted(cands, key=_rank_key)[:keep]
    if not kept:
        return kept
    most = max(len(c.tracker.satisfied) for c in kept)
    return [c for c in kept if len(c.tracker.satisfied) >= most - slack]


def round_robin(groups: list[list[BeamCandidate]], width: int) -> list[BeamCandidate]:
    """Take the best remaining candidate of each group in turn until ``width`` are chosen."""
    chosen: list[BeamCandidate] = []
    depth = 0
    while len(chosen) < width:
        took = False
        for members in groups:
            if depth < len(members):
                chosen.append(members[depth])
                took = True
                if len(chosen) == width:
                    break
        if not took:
            break
        depth += 1
    return chosen


def nld_search(
    lm,
    prefix: Sequence[int],
    cnf: Cnf,
    cfg: DecoderConfig,
    banned: Iterable[int] | None = None,
    trace: TraceFn | None = None,
    debug: bool = False,
) -> BeamCandidate:
    """Constraint-aware beam search; returns the winning candidate.

    ``cnf`` literals must already be in token-id space (see
    :meth:`Cnf.encode`). With ``debug`` every candidate's tracker and score
    are re-derived from scratch and compared. ``trace`` receives one dict
    per step describing groups and the selected beam.
    """
    banned = _default_banned(lm) if banned is None else set(banned)
    eos = lm.vocab.eos
    lam = cfg.lambda_
    prefix = list(prefix)
    root_tracker = ConstraintTracker.start(cnf)
    live = [BeamCandidate((), 0.0, root_tracker, lam * root_tracker.max_partial_ratio(cnf))]
    finished: list[BeamCandidate] = []
    for step in range(cfg.max_len):
        expansions = []
        for cand in live:
            lp = lm.next_token_logprobs(prefix + list(cand.tokens))
            for tok in top_tokens(lp, cfg.expand_top, banned):
                tracker = cand.tracker.advance(cnf, tok)
                cum = cand.cum_logprob + float(lp[tok])
                expansions.append(
                    BeamCandidate(cand.tokens + (tok,), cum, tracker, cum + lam * tracker.max_partial_ratio(cnf), tok == eos)
                )
        if not expansions:
            break
        survivors = prune(expansions, cfg.likelihood_keep, cfg.clause_slack)
        groups = group_candidates(survivors)
        if len(groups) > 2 ** len(cnf):
            raise AssertionError("group count exceeds 2^|C|")
        chosen = round_robin(groups, cfg.beam_width)
        if debug:
            for c in chosen:
                _check_candidate(c, cnf, lam)
        finished.extend(c for c in chosen if c.finished)
        live = [c for c in chosen if not c.finished]
        if trace is not None:
            trace(_trace_record(step, groups, chosen, len(finished)))
        if not live:
            break
    pool = finished or live
    if not pool:
        return BeamCandidate((), 0.0, root_tracker, 0.0)
    return min(pool, key=_final_key(cnf))


def nld_decode(lm, prefix, cnf: Cnf, cfg: DecoderConfig, banned=None, trace=None) -> list[int]:
    return nld_search(lm, prefix, cnf, cfg, banned, trace).body


def _check_candidate(c: BeamCandidate, cnf: Cnf, lam: float) -> None:
    satisfied, progress = rescan(cnf, c.tokens)
    if satisfied != c.tracker.satisfied or progress != c.tracker.progress:
        raise AssertionError(f"tracker disagrees with re-scan for {c.tokens}")
    ratio = max(
        (p / len(lit) for j, clause in enumerate(cnf.clauses) if j not in satisfied
         for lit, p in zip(clause.literals, progress[j])),
        default=0.0,
    )
    expected = c.cum_logprob + lam * ratio
    if not math.isclose(expected, c.nld_score, rel_tol=0, abs_tol=1e-12):
        raise AssertionError(f"stored score {c.nld_score} != recomputed {expected}")


def _trace_record(step: int, groups, chosen, n_finished: int) -> dict:
    return {
        "step": step,
        "n_groups": len(groups),
        "groups": [
            {"satisfied": sorted(members[0].tracker.satisfied), "size": len(members)} for members in groups
        ],
        "beam": [
            {
                "tokens": list(c.tokens),
                "cum_logprob": c.cum_logprob,
                "nld_score": c.nld_score,
                "satisfied": sorted(c.tracker.satisfied),
                "finished": c.finished,
            }
            for c in chosen
        ],
        "n_finished": n_finished,
    }

import itertools
import math
import random
from pathlib import Path

import numpy as np
import pytest

from relconstrain.constraints import Clause, Cnf, Literal, rescan
from relconstrain.lm import train_ngram
from relconstrain.text import Vocabulary

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures" / "synthetic"

# Water-privatization example: query, document, two generations, reference.
WATER_QUERY = "privatization: is water a resource that should be owned by private companies versus a global commons?"
WATER_DOCUMENT = (
    "private companies are profit-maximizing entities that often view environmental health and safety "
    "standards as obstructive to their profit interests. this is a problem particularly in the context "
    "of water which is so fundamentally important to the environment health and life."
)
WATER_BASELINE = "environmental and health standards are often violated by public owners of water"
WATER_CONSTRAINED = "environmental and health standards are often violated by water privatization companies."
WATER_REFERENCE = "environmental and health standards are often violated by private ownership of water"


class StationaryLM:
    """Same next-token distribution after every prefix."""

    def __init__(self, vocab: Vocabulary, probs: dict):
        self.vocab = vocab
        lp = np.full(len(vocab), -np.inf)
        for surface, p in probs.items():
            lp[vocab.id_of(surface)] = math.log(p)
        self._lp = lp

    def next_token_logprobs(self, prefix):
        return self._lp.copy()


class TableLM:
    """Explicit next-token distributions per full prefix, falling back to a default."""

    def __init__(self, vocab: Vocabulary, table: dict, default: dict):
        self.vocab = vocab
        self._table = {tuple(k): self._vec(v) for k, v in table.items()}
        self._default = self._vec(default)

    def _vec(self, probs):
        lp = np.full(len(self.vocab), -np.inf)
        for surface, p in probs.items():
            lp[self.vocab.id_of(surface)] = math.log(p)
        return lp

    def next_token_logprobs(self, prefix):
        return self._table.get(tuple(self.vocab.decode(prefix)), self._default).copy()


def random_vocab(rng: random.Random, n_words: int) -> Vocabulary:
    return Vocabulary([f"w{i}" for i in range(n_words)])


def random_ngram_lm(rng: random.Random, n_words: int, order: int, n_sentences: int = 6, k: float | None = None):
    vocab = random_vocab(rng, n_words)
    words = list(range(3, len(vocab)))
    corpus = [[rng.choice(words) for _ in range(rng.randint(0, 5))] for _ in range(n_sentences)]
    if k is None:
        k = rng.choice([0.05, 0.3, 1.0])
    return train_ngram(corpus, order, k, vocab)


def random_cnf(rng: random.Random, alphabet, n_clauses: int, max_lits: int = 2, max_lit_len: int = 2) -> Cnf:
    clauses = []
    for _ in range(n_clauses):
        lits = [
            Literal(tuple(rng.choice(alphabet) for _ in range(rng.randint(1, max_lit_len))))
            for _ in range(rng.randint(1, max_lits))
        ]
        clauses.append(Clause(tuple(lits)))
    return Cnf(tuple(clauses))


def brute_force_best(lm, cnf: Cnf, max_len: int, lam: float, banned=()):
    """Best (all-satisfied, constrained score) over every EOS-terminated sequence of length <= max_len.

    Scores come from summing next-token log-probabilities and re-scanning
    each whole sequence; nothing is shared with the decoder.
    """
    vocab = lm.vocab
    allowed = [i for i in range(len(vocab)) if i not in set(banned) and i != vocab.eos]
    best = None
    for body_len in range(max_len):
        for body in itertools.product(allowed, repeat=body_len):
            seq = list(body) + [vocab.eos]
            cum = 0.0
            for t in range(len(seq)):
                cum += float(lm.next_token_logprobs(seq[:t])[seq[t]])
            if not math.isfinite(cum):
                continue
            satisfied, progress = rescan(cnf, seq)
            ratio = max(
                (p / len(lit) for j, c in enumerate(cnf.clauses) if j not in satisfied
                 for lit, p in zip(c.literals, progress[j])),
                default=0.0,
            )
            key = (len(satisfied) == len(cnf), cum + lam * ratio)
            if best is None or key > best[0]:
                best = (key, seq)
    return best


@pytest.fixture
def fixtures_dir():
    return FIXTURES


# acceptance results, printed at the end of the run whatever the capture mode
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {detail}")

"""Positive lexical constraints in conjunctive normal form.

A :class:`Cnf` is a conjunction of clauses; a clause is satisfied once any
of its literals (a token sequence) appears contiguously in the generated
text, and stays satisfied from then on. :class:`ConstraintTracker` follows
that state token by token, together with how far each literal is
partially matched at the end of the generation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Sequence

from .text import Vocabulary, tokenize

_SIBILANT_ENDINGS = ("s", "x", "z", "ch", "sh", "o")


@dataclass(frozen=True)
class Literal:
    tokens: tuple
    source_lemma: str = ""

    def __post_init__(self):
        if len(self.tokens) == 0:
            raise ValueError("literal must contain at least one token")
        object.__setattr__(self, "tokens", tuple(self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    def text(self) -> str:
        return " ".join(map(str, self.tokens))


@dataclass(frozen=True)
class Clause:
    literals: tuple[Literal, ...]

    def __post_init__(self):
        seen: dict[tuple, Literal] = {}
        for lit in self.literals:
            seen.setdefault(lit.tokens, lit)
        if not seen:
            raise ValueError("clause must contain at least one literal")
        object.__setattr__(self, "literals", tuple(seen.values()))


@dataclass(frozen=True)
class Cnf:
    clauses: tuple[Clause, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(self.clauses))

    def __len__(self) -> int:
        return len(self.clauses)

    @property
    def max_literal_len(self) -> int:
        return max((len(lit) for c in self.clauses for lit in c.literals), default=0)

    def encode(self, vocab: Vocabulary) -> "Cnf":
        """Map literal surfaces to vocabulary ids.

        A surface the vocabulary does not know becomes ``-1``, which no
        generated id can match, so its literal is unsatisfiable.
        """
        def ids(tokens):
            return tuple(vocab.id_of(t) if t in vocab else -1 for t in tokens)

        return Cnf(tuple(
            Clause(tuple(Literal(ids(lit.tokens), lit.source_lemma) for lit in c.literals))
            for c in self.clauses
        ))

    def as_lists(self) -> list[list[str]]:
        """Clauses as lists of space-joined literal strings."""
        return [[lit.text() for lit in c.literals] for c in self.clauses]

    def format(self) -> str:
        """Debug format: one clause per line, literals separated by ``|``."""
        return "\n".join(" | ".join(lits) for lits in self.as_lists())


@dataclass(frozen=True)
class MorphologyTable:
    """Lemma -> word-form families.

    Lookups work from any member of a family, so ``standards`` finds the
    forms listed under ``standard``.
    """

    forms: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        forms = {lemma: frozenset(fs) | {lemma} for lemma, fs in self.forms.items()}
        object.__setattr__(self, "forms", forms)
        reverse: dict[str, set[str]] = {}
        for lemma, fs in forms.items():
            for f in fs:
                reverse.setdefault(f, set()).add(lemma)
        object.__setattr__(self, "_reverse", reverse)

    def family(self, surface: str) -> set[str]:
        out: set[str] = set()
        for lemma in self._reverse.get(surface, ()):
            out |= self.forms[lemma]
        return out

    @classmethod
    def from_tsv(cls, path: str | Path) -> "MorphologyTable":
        with open(path, encoding="utf-8") as fh:
            return cls(_parse_tsv(fh, str(path)))

    @classmethod
    def default(cls) -> "MorphologyTable":
        text = resources.files("relconstrain").joinpath("data/morphology.tsv").read_text(encoding="utf-8")
        return cls(_parse_tsv(text.splitlines(), "morphology.tsv"))


def _parse_tsv(lines: Iterable[str], name: str) -> dict[str, frozenset[str]]:
    table: dict[str, set[str]] = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        lemma, sep, rest = line.partition("\t")
        if not sep:
            raise ValueError(f"{name} line {lineno}: expected 'lemma<TAB>form1,form2,...'")
        forms = {f.strip().lower() for f in rest.split(",") if f.strip()}
        table.setdefault(lemma.strip().lower(), set()).update(forms)
    return {k: frozenset(v) for k, v in table.items()}


def _inflect(stem: str) -> set[str]:
    forms = {stem, stem + "s"}
    if stem.endswith(_SIBILANT_ENDINGS):
        forms.add(stem + "es")
    if stem.endswith("e"):
        forms |= {stem + "d", stem[:-1] + "ing"}
    else:
        forms |= {stem + "ed", stem + "ing"}
    return forms


def _rule_forms(lemma: str) -> set[str]:
    if not lemma.isalpha() or len(lemma) < 3:
        return set()
    if lemma.endswith("s") and not lemma.endswith(("ss", "us", "is")) and len(lemma) > 3:
        # looks plural: inflect the singular instead
        return _inflect(lemma[:-1]) | {lemma}
    return _inflect(lemma)


def expand_word_forms(lemma: str, morph: MorphologyTable | None = None) -> set[str]:
    """Surface forms of ``lemma``: table family, inflection rules, and the lemma itself."""
    forms = {lemma}
    if morph is not None:
        forms |= morph.family(lemma)
    forms |= _rule_forms(lemma)
    return forms


def build_cnf(tokens: Sequence[str], morph: MorphologyTable | None = None) -> Cnf:
    """One clause per token, each expanded to all of its word forms.

    The original token is the first literal of its clause; the remaining
    forms follow in sorted order. Multi-word forms become multi-token
    literals.
    """
    clauses = []
    for token in tokens:
        others = sorted(expand_word_forms(token, morph) - {token})
        literals = [Literal(tuple(tokenize(form)) or (form,), token) for form in [token, *others]]
        clauses.append(Clause(tuple(literals)))
    return Cnf(tuple(clauses))


def _match_len(window: Sequence[Hashable], literal: Sequence[Hashable]) -> int:
    """Largest p with ``window[-p:] == literal[:p]``."""
    for p in range(min(len(window), len(literal)), 0, -1):
        if tuple(window[len(window) - p :]) == tuple(literal[:p]):
            return p
    return 0


@dataclass(frozen=True)
class ConstraintTracker:
    """Satisfaction state of one generation path.

    ``progress[j][i]`` is the matched prefix length of literal ``i`` of
    clause ``j``; ``window`` keeps just enough recent tokens to extend any
    partial match.
    """

    satisfied: frozenset[int] = frozenset()
    progress: tuple[tuple[int, ...], ...] = ()
    window: tuple = ()

    @classmethod
    def start(cls, cnf: Cnf) -> "ConstraintTracker":
        return cls(frozenset(), tuple((0,) * len(c.literals) for c in cnf.clauses), ())

    @property
    def mask(self) -> int:
        return sum(1 << j for j in self.satisfied)

    def advance(self, cnf: Cnf, token: Hashable) -> "ConstraintTracker":
        keep = max(cnf.max_literal_len - 1, 0)
        extended = self.window + (token,)
        satisfied = set(self.satisfied)
        progress = []
        for j, clause in enumerate(cnf.clauses):
            row = []
            for lit in clause.literals:
                p = _match_len(extended, lit.tokens)
                row.append(p)
                if p == len(lit):
                    satisfied.add(j)
            progress.append(tuple(row))
        window = extended[len(extended) - keep :] if keep else ()
        return ConstraintTracker(frozenset(satisfied), tuple(progress), window)

    def max_partial_ratio(self, cnf: Cnf) -> float:
        best = 0.0
        for j, clause in enumerate(cnf.clauses):
            if j in self.satisfied:
                continue
            for lit, p in zip(clause.literals, self.progress[j]):
                best = max(best, p / len(lit))
        return best

    def all_satisfied(self, cnf: Cnf) -> bool:
        return len(self.satisfied) == len(cnf)


def advance(tracker: ConstraintTracker, cnf: Cnf, token: Hashable) -> ConstraintTracker:
    return tracker.advance(cnf, token)


def max_partial_ratio(tracker: ConstraintTracker, cnf: Cnf) -> float:
    """Best partial-match ratio over unsatisfied clauses; 0 when none remain."""
    return tracker.max_partial_ratio(cnf)


def track(cnf: Cnf, sequence: Iterable[Hashable]) -> ConstraintTracker:
    state = ConstraintTracker.start(cnf)
    for tok in sequence:
        state = state.advance(cnf, tok)
    return state


def contains_literal(sequence: Sequence[Hashable], literal: Literal) -> bool:
    n = len(literal)
    seq = tuple(sequence)
    return any(seq[i : i + n] == literal.tokens for i in range(len(seq) - n + 1))


def rescan(cnf: Cnf, sequence: Sequence[Hashable]) -> tuple[frozenset[int], tuple[tuple[int, ...], ...]]:
    """Satisfied clauses and partial-match lengths from a scan of the whole sequence.

    Independent of :class:`ConstraintTracker`; used to check it.
    """
    seq = tuple(sequence)
    satisfied = frozenset(
        j for j, clause in enumerate(cnf.clauses) if any(contains_literal(seq, lit) for lit in clause.literals)
    )
    progress = tuple(
        tuple(
            max((p for p in range(1, len(lit) + 1) if len(seq) >= p and seq[len(seq) - p :] == lit.tokens[:p]), default=0)
            for lit in clause.literals
        )
        for clause in cnf.clauses
    )
    return satisfied, progress


def cnf_satisfied(cnf: Cnf, sequence: Sequence[Hashable]) -> bool:
    """True iff every clause has a literal occurring in ``sequence``."""
    return all(any(contains_literal(sequence, lit) for lit in c.literals) for c in cnf.clauses)

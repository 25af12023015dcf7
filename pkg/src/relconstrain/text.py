"""Word-level tokenization, vocabularies and stopword filtering."""

from __future__ import annotations

import re
import string
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
SEP = "<sep>"
SPECIALS = (BOS, EOS, UNK)

# A word is a run of word characters, optionally joined by intra-word hyphens
# or apostrophes ("health-care", "it's"). Anything else that is not
# whitespace becomes a one-character token.
_TOKEN_RE = re.compile(r"\w+(?:[-']\w+)*|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split it into word and punctuation tokens.

    >>> tokenize("Private companies.")
    ['private', 'companies', '.']
    >>> tokenize("health-care, now")
    ['health-care', ',', 'now']
    """
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Token:
    surface: str
    id: int


class Vocabulary:
    """Dense id <-> surface mapping with BOS/EOS/UNK at ids 0, 1, 2.

    Instances are immutable once built; use :func:`build_vocab` or
    :meth:`from_surfaces` to construct one.
    """

    __slots__ = ("_surfaces", "_index")

    def __init__(self, surfaces: Iterable[str]):
        ordered: list[str] = list(SPECIALS)
        index = {s: i for i, s in enumerate(ordered)}
        for s in surfaces:
            if s in index:
                continue
            if not s or any(ch.isspace() for ch in s):
                raise ValueError(f"invalid token surface {s!r}")
            index[s] = len(ordered)
            ordered.append(s)
        self._surfaces = tuple(ordered)
        self._index = index

    @classmethod
    def from_surfaces(cls, surfaces: Sequence[str]) -> "Vocabulary":
        """Rebuild a vocabulary from its full ordered surface list (specials included)."""
        if tuple(surfaces[: len(SPECIALS)]) != SPECIALS:
            raise ValueError("vocabulary must start with the special tokens " + " ".join(SPECIALS))
        if len(set(surfaces)) != len(surfaces):
            raise ValueError("duplicate surfaces in vocabulary")
        return cls(surfaces[len(SPECIALS):])

    @property
    def bos(self) -> int:
        return 0

    @property
    def eos(self) -> int:
        return 1

    @property
    def unk(self) -> int:
        return 2

    @property
    def surfaces(self) -> tuple[str, ...]:
        return self._surfaces

    def __len__(self) -> int:
        return len(self._surfaces)

    def __contains__(self, surface: object) -> bool:
        return surface in self._index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self._surfaces == other._surfaces

    def __hash__(self) -> int:
        return hash(self._surfaces)

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)})"

    def id_of(self, surface: str) -> int:
        return self._index.get(surface, self.unk)

    def surface_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self._surfaces):
            raise ValueError(f"token out of vocabulary: {token_id}")
        return self._surfaces[token_id]

    def token(self, token_id: int) -> Token:
        return Token(self.surface_of(token_id), token_id)

    def encode(self, surfaces: Iterable[str]) -> list[int]:
        """Map surfaces to ids; unknown surfaces map to UNK."""
        return [self._index.get(s, self.unk) for s in surfaces]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.surface_of(i) for i in ids]


def build_vocab(corpus: Sequence[Sequence[str]], extra: Iterable[str] = ()) -> Vocabulary:
    """Collect every distinct surface of ``corpus`` in first-seen order.

    ``extra`` surfaces (e.g. a separator) are appended after the corpus
    surfaces.
    """
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    surfaces = [s for sentence in corpus for s in sentence]
    surfaces.extend(extra)
    return Vocabulary(surfaces)


def _is_punct_char(ch: str) -> bool:
    return ch in string.punctuation or unicodedata.category(ch)[0] in "PS"


@dataclass(frozen=True)
class StopList:
    stopwords: frozenset[str] = field(default_factory=frozenset)
    punctuation: frozenset[str] = field(default_factory=lambda: frozenset(string.punctuation))

    def __post_init__(self):
        object.__setattr__(self, "stopwords", frozenset(s.lower() for s in self.stopwords))
        object.__setattr__(self, "punctuation", frozenset(p.lower() for p in self.punctuation))

    def is_punctuation(self, surface: str) -> bool:
        return all(ch in self.punctuation or _is_punct_char(ch) for ch in surface)

    @classmethod
    def from_file(cls, path: str | Path) -> "StopList":
        with open(path, encoding="utf-8") as fh:
            return cls(frozenset(_read_stop_lines(fh)))

    @classmethod
    def default(cls) -> "StopList":
        text = resources.files("relconstrain").joinpath("data/stopwords.txt").read_text(encoding="utf-8")
        return cls(frozenset(_read_stop_lines(text.splitlines())))


def _read_stop_lines(lines: Iterable[str]) -> Iterable[str]:
    for line in lines:
        line = line.strip()
        if line and not line.startswith("#"):
            yield line.lower()


def is_content_token(surface: str, stops: StopList) -> bool:
    """False for stopwords and punctuation-only surfaces, True otherwise."""
    if surface in stops.stopwords:
        return False
    return not stops.is_punctuation(surface)

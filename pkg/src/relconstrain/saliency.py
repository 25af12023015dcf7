"""Gradient attribution of document tokens against a relevance scorer."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
from scipy.special import expit

from ._validation import check_embeddings, check_positive_int
from .text import StopList, is_content_token

SCORER_MAGIC = "RELCONSTRAIN-SCORER"
SCORER_VERSION = 1
DEFAULT_DIM = 16
DEFAULT_STEPS = 10
EMBEDDING_SD = 0.1


class DifferentiableScorer(Protocol):
    """Relevance logit of a (query, document) pair and its document gradient."""

    def forward(self, q: np.ndarray, d: np.ndarray) -> float: ...

    def grad_doc(self, q: np.ndarray, d: np.ndarray) -> np.ndarray: ...


def _mean_rows(x: np.ndarray) -> np.ndarray:
    if x.shape[0] == 0:
        return np.zeros(x.shape[1])
    return x.mean(axis=0)


class BilinearScorer:
    """``f = mean(q)ᵀ · W · mean(d)``."""

    def __init__(self, W):
        W = np.asarray(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"W must be square, got shape {W.shape}")
        self.W = W
        self.dim = W.shape[0]

    def _check(self, q, d):
        return check_embeddings(q, self.dim, "query embeddings"), check_embeddings(d, self.dim, "doc embeddings")

    def forward(self, q, d) -> float:
        q, d = self._check(q, d)
        return float(_mean_rows(q) @ self.W @ _mean_rows(d))

    def grad_doc(self, q, d) -> np.ndarray:
        q, d = self._check(q, d)
        n = d.shape[0]
        if n == 0:
            return np.zeros((0, self.dim))
        row = self.W.T @ _mean_rows(q) / n
        return np.tile(row, (n, 1))


class SigmoidBilinearScorer(BilinearScorer):
    """Bilinear score squashed through a logistic sigmoid (a nonlinear scorer)."""

    def forward(self, q, d) -> float:
        return float(expit(super().forward(q, d)))

    def grad_doc(self, q, d) -> np.ndarray:
        s = expit(BilinearScorer.forward(self, q, d))
        return s * (1.0 - s) * super().grad_doc(q, d)


class LinearScorer:
    """``f = Σ_i w · x_i``; the query is ignored.

    Its gradient is constant, so Integrated Gradients is exact for any step
    count, which makes it a useful calibration scorer.
    """

    def __init__(self, w):
        self.w = np.asarray(w, dtype=float)
        self.dim = self.w.shape[0]

    def forward(self, q, d) -> float:
        d = check_embeddings(d, self.dim, "doc embeddings")
        return float(d.sum(axis=0) @ self.w)

    def grad_doc(self, q, d) -> np.ndarray:
        d = check_embeddings(d, self.dim, "doc embeddings")
        return np.tile(self.w, (d.shape[0], 1))


def loss_from_logit(f_value: float) -> float:
    """Pointwise cross-entropy against label 1: ``-ln sigmoid(f)``."""
    return float(np.logaddexp(0.0, -f_value))


def integrated_gradients(scorer: DifferentiableScorer, q, d, steps: int = DEFAULT_STEPS) -> np.ndarray:
    """Attribution of every document token, baseline all-zero document.

    The whole document embedding matrix is scaled along the straight path
    ``(k/m)·d`` for ``k = 1..m``; token ``i`` receives
    ``d_i · mean_k ∂f/∂x_i``.
    """
    steps = check_positive_int(steps, "steps")
    q = np.asarray(q, dtype=float)
    d = np.asarray(d, dtype=float)
    if d.shape[0] == 0:
        return np.zeros(0)
    total = np.zeros_like(d)
    for k in range(1, steps + 1):
        total += scorer.grad_doc(q, (k / steps) * d)
    return np.einsum("ij,ij->i", d, total / steps)


def integrad(scorer: DifferentiableScorer, q, d, token_index: int, steps: int = DEFAULT_STEPS) -> float:
    return float(integrated_gradients(scorer, q, d, steps)[token_index])


def normalize_saliency(raw: Sequence[float]) -> np.ndarray:
    """Divide by the sum of absolute values; all-zero input stays all-zero."""
    raw = np.asarray(raw, dtype=float)
    denom = np.abs(raw).sum()
    if denom == 0:
        return np.zeros_like(raw)
    return raw / denom


@dataclass(frozen=True)
class SaliencyVector:
    tokens: tuple[str, ...]
    raw: np.ndarray
    normalized: np.ndarray

    def __post_init__(self):
        if not len(self.tokens) == len(self.raw) == len(self.normalized):
            raise ValueError("tokens, raw and normalized must have equal length")

    @classmethod
    def from_raw(cls, tokens: Sequence[str], raw: Sequence[float]) -> "SaliencyVector":
        raw = np.asarray(raw, dtype=float)
        return cls(tuple(tokens), raw, normalize_saliency(raw) if len(raw) else raw)


def select_constraint_tokens(saliency: SaliencyVector, stops: StopList, k: int = 3) -> list[str]:
    """Top-``k`` distinct content surfaces by raw saliency.

    Each surface is scored by its best occurrence; ties go to the earlier
    position.
    """
    k = check_positive_int(k, "k")
    best: dict[str, tuple[float, int]] = {}
    for pos, (surface, score) in enumerate(zip(saliency.tokens, saliency.raw)):
        if not is_content_token(surface, stops):
            continue
        if surface not in best or score > best[surface][0]:
            best[surface] = (float(score), pos)
    ranked = sorted(best.items(), key=lambda item: (-item[1][0], item[1][1]))
    return [surface for surface, _ in ranked[:k]]


class EmbeddingTable:
    """Static token embeddings keyed by surface.

    Surfaces without an explicit vector get a deterministic Gaussian vector
    derived from ``seed`` and the surface text, so any document can be
    embedded without a fixed vocabulary.
    """

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0, vectors: dict[str, np.ndarray] | None = None):
        self.dim = check_positive_int(dim, "dim")
        self.seed = int(seed)
        self.vectors: dict[str, np.ndarray] = {}
        for surface, vec in (vectors or {}).items():
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (self.dim,) or not np.all(np.isfinite(vec)):
                raise ValueError(f"embedding for {surface!r} must be {self.dim} finite values")
            self.vectors[surface] = vec

    def vector(self, surface: str) -> np.ndarray:
        vec = self.vectors.get(surface)
        if vec is not None:
            return vec
        digest = hashlib.sha256(surface.encode("utf-8")).digest()
        rng = np.random.default_rng([self.seed, int.from_bytes(digest[:8], "little")])
        return rng.normal(0.0, EMBEDDING_SD, self.dim)

    def embed(self, surfaces: Sequence[str]) -> np.ndarray:
        if not surfaces:
            return np.zeros((0, self.dim))
        return np.stack([self.vector(s) for s in surfaces])


def seeded_bilinear(dim: int = DEFAULT_DIM, seed: int = 0) -> tuple[BilinearScorer, EmbeddingTable]:
    """Toy relevance scorer with seeded Gaussian W and embeddings."""
    rng = np.random.default_rng([seed, 1])
    W = rng.normal(0.0, EMBEDDING_SD, (dim, dim))
    return BilinearScorer(W), EmbeddingTable(dim, seed)


def compute_saliency(
    scorer: DifferentiableScorer,
    embeddings: EmbeddingTable,
    query_tokens: Sequence[str],
    doc_tokens: Sequence[str],
    steps: int = DEFAULT_STEPS,
) -> SaliencyVector:
    q = embeddings.embed(query_tokens)
    d = embeddings.embed(doc_tokens)
    return SaliencyVector.from_raw(doc_tokens, integrated_gradients(scorer, q, d, steps))


def save_scorer(path: str | Path, scorer: BilinearScorer, embeddings: EmbeddingTable, explicit: bool = True) -> None:
    """Write a scorer file; with ``explicit`` the W rows and any stored vectors are included."""
    kind = "sigmoid-bilinear" if isinstance(scorer, SigmoidBilinearScorer) else "bilinear"
    lines = [f"{SCORER_MAGIC} v{SCORER_VERSION}", f"dim={embeddings.dim}", f"seed={embeddings.seed}", f"kind={kind}"]
    if explicit:
        lines.extend("W " + " ".join(repr(float(v)) for v in row) for row in scorer.W)
        for surface in sorted(embeddings.vectors):
            lines.append(f"E {surface} " + " ".join(repr(float(v)) for v in embeddings.vectors[surface]))
    lines.append("END")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_scorer(path: str | Path) -> tuple[BilinearScorer, EmbeddingTable]:
    """Read a scorer file. Missing W rows are regenerated from the seed."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(SCORER_MAGIC + " "):
        raise ValueError("malformed scorer file: missing header")
    version = lines[0][len(SCORER_MAGIC) + 1 :].strip()
    if version != f"v{SCORER_VERSION}":
        raise ValueError(f"unsupported version: {version}")
    if lines[-1] != "END":
        raise ValueError("malformed scorer file: truncated (no END marker)")
    header: dict[str, str] = {}
    rows: list[list[float]] = []
    vectors: dict[str, list[float]] = {}
    try:
        for lineno, line in enumerate(lines[1:-1], start=2):
            if line.startswith("W "):
                rows.append([float(v) for v in line[2:].split()])
            elif line.startswith("E "):
                surface, *vals = line[2:].split()
                vectors[surface] = [float(v) for v in vals]
            elif "=" in line:
                key, _, value = line.partition("=")
                header[key.strip()] = value.strip()
            elif line.strip():
                raise ValueError(f"line {lineno}: unrecognized record")
        dim = int(header.get("dim", DEFAULT_DIM))
        seed = int(header.get("seed", 0))
        kind = header.get("kind", "bilinear")
    except ValueError as exc:
        raise ValueError(f"malformed scorer file: {exc}") from exc
    base, table = seeded_bilinear(dim, seed)
    W = np.asarray(rows, dtype=float) if rows else base.W
    if W.shape != (dim, dim):
        raise ValueError(f"malformed scorer file: W must be {dim}x{dim}")
    cls = {"bilinear": BilinearScorer, "sigmoid-bilinear": SigmoidBilinearScorer}.get(kind)
    if cls is None:
        raise ValueError(f"malformed scorer file: unknown kind {kind!r}")
    return cls(W), EmbeddingTable(dim, seed, vectors)

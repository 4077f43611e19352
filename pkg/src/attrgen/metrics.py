"""Diversity metrics (vocabulary, pairwise similarity, n-gram novelty)
and multi-label ranking metrics."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

log = logging.getLogger(__name__)

_TOKEN = re.compile(r"[^\W_]+")

FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211
_FNV_MASK = (1 << 64) - 1


class MetricsError(ValueError):
    """Degenerate inputs: empty corpora, scopes with no pairs, bad shapes."""


def tokenize(text: str) -> list[str]:
    """Lowercased maximal alphanumeric runs; underscores split tokens."""
    return _TOKEN.findall(text.lower())


def fnv1a64(data: bytes) -> int:
    value = FNV_OFFSET
    for byte in data:
        value = ((value ^ byte) * FNV_PRIME) & _FNV_MASK
    return value


def ngram_set(tokens: Sequence[str], n_max: int) -> set[str]:
    grams: set[str] = set()
    for n in range(1, n_max + 1):
        for start in range(len(tokens) - n + 1):
            grams.add(" ".join(tokens[start : start + n]))
    return grams


# --- vocabulary ---


def vocab_size(
    corpus: Sequence[str], labels: Sequence[Hashable]
) -> tuple[int, float]:
    """(distinct tokens overall, mean distinct tokens per class)."""
    if not corpus:
        raise MetricsError("corpus must be non-empty")
    if len(corpus) != len(labels):
        raise MetricsError(
            f"corpus has {len(corpus)} texts but {len(labels)} labels"
        )
    overall: set[str] = set()
    per_class: dict[Hashable, set[str]] = {}
    for text, label in zip(corpus, labels):
        tokens = tokenize(text)
        overall.update(tokens)
        per_class.setdefault(label, set()).update(tokens)
    class_avg = sum(len(v) for v in per_class.values()) / len(per_class)
    return len(overall), class_avg


# --- embedding ---


@dataclass(frozen=True)
class HashTfEmbedder:
    """Term-frequency vectors over FNV-hashed unigrams and bigrams."""

    dimension: int = 4096
    kind: str = field(default="builtin-hash-tf", init=False)

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise MetricsError(f"dimension must be >= 1, got {self.dimension}")

    def index(self, gram: str) -> int:
        return fnv1a64(gram.encode("utf-8")) % self.dimension

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dimension))
        for row, text in enumerate(texts):
            tokens = tokenize(text)
            if not tokens:
                log.warning("empty text at index %d embeds to the zero vector", row)
                continue
            grams = tokens + [
                f"{a} {b}" for a, b in zip(tokens, tokens[1:])
            ]
            for gram in grams:
                out[row, self.index(gram)] += 1.0
            out[row] /= np.linalg.norm(out[row])
        return out


def embed(texts: Sequence[str], embedder: HashTfEmbedder | None = None) -> np.ndarray:
    """Unit vectors for ``texts``; empty texts map to zero vectors."""
    if embedder is None:
        embedder = HashTfEmbedder()
    return embedder.embed_batch(texts)


# --- pairwise similarity ---


def _pair_mask(n: int) -> np.ndarray:
    return np.triu(np.ones((n, n), dtype=bool), k=1)


def aps(
    vectors: np.ndarray,
    labels: Sequence[Hashable] | None = None,
    scope: str = "all",
) -> float:
    """Mean cosine over unordered distinct pairs.

    Scope "intra" keeps same-label pairs, "inter" different-label pairs;
    both need labels. Vectors are assumed unit-length (or zero).
    """
    vectors = np.asarray(vectors, dtype=float)
    n = len(vectors)
    if n < 2:
        raise MetricsError("need at least 2 vectors")
    if scope not in ("all", "intra", "inter"):
        raise MetricsError(f"unknown scope {scope!r}")
    mask = _pair_mask(n)
    if scope != "all":
        if labels is None:
            raise MetricsError(f"scope {scope!r} needs labels")
        if len(labels) != n:
            raise MetricsError(f"{n} vectors but {len(labels)} labels")
        same = np.array(
            [[a == b for b in labels] for a in labels], dtype=bool
        )
        mask &= same if scope == "intra" else ~same
    count = int(mask.sum())
    if count == 0:
        raise MetricsError(f"no {scope} pairs in this corpus")
    gram = vectors @ vectors.T
    return float(gram[mask].sum() / count)


@dataclass(frozen=True)
class Histogram:
    edges: tuple[float, ...]
    counts: tuple[int, ...]

    def total(self) -> int:
        return sum(self.counts)


def _pair_from_index(index: int, n: int) -> tuple[int, int]:
    # unordered pair (i, j), i < j, ranked lexicographically
    i = 0
    remaining = index
    row = n - 1
    while remaining >= row:
        remaining -= row
        row -= 1
        i += 1
    return i, i + 1 + remaining


def similarity_histogram(
    vectors: np.ndarray,
    labels: Sequence[Hashable],
    bins: int = 50,
    max_pairs_per_class: int = 10_000,
    seed: int = 0,
) -> Histogram:
    """Binned cosines of same-class pairs over [-1, 1].

    Classes with more than ``max_pairs_per_class`` pairs are subsampled
    without replacement using ``seed``.
    """
    vectors = np.asarray(vectors, dtype=float)
    if bins < 1:
        raise MetricsError(f"bins must be >= 1, got {bins}")
    if len(labels) != len(vectors):
        raise MetricsError(f"{len(vectors)} vectors but {len(labels)} labels")
    rng = np.random.default_rng(seed)
    by_class: dict[Hashable, list[int]] = {}
    for index, label in enumerate(labels):
        by_class.setdefault(label, []).append(index)

    sims: list[float] = []
    for members in by_class.values():
        count = len(members) * (len(members) - 1) // 2
        if count == 0:
            continue
        if count > max_pairs_per_class:
            chosen = rng.choice(count, size=max_pairs_per_class, replace=False)
        else:
            chosen = np.arange(count)
        for pair_index in chosen:
            i, j = _pair_from_index(int(pair_index), len(members))
            sims.append(float(vectors[members[i]] @ vectors[members[j]]))
    if not sims:
        raise MetricsError("no same-class pairs to histogram")
    edges = np.linspace(-1.0, 1.0, bins + 1)
    counts, _ = np.histogram(np.clip(sims, -1.0, 1.0), bins=edges)
    return Histogram(edges=tuple(edges.tolist()), counts=tuple(int(c) for c in counts))


# --- n-gram novelty ---


def ingf(corpus: Sequence[str], n_max: int = 3) -> float:
    """Distinct-n-gram mass per document, discounted by corpus-level reuse.

    With S(d) the word 1..n_max-gram set of document d:
    |union S(d)| / |corpus| * mean_d |S(d)| / max_d |S(d)|.
    Duplicates shrink the union term, so repetition lowers the score.
    """
    if not corpus:
        raise MetricsError("corpus must be non-empty")
    gram_sets = [ngram_set(tokenize(text), n_max) for text in corpus]
    largest = max(len(s) for s in gram_sets)
    if largest == 0:
        return 0.0
    union: set[str] = set()
    for grams in gram_sets:
        union |= grams
    richness = sum(len(s) / largest for s in gram_sets) / len(gram_sets)
    return len(union) / len(corpus) * richness


# --- multi-label ranking ---


def _ranking(scores: np.ndarray) -> np.ndarray:
    # stable sort on negated scores: ties broken by ascending class index
    return np.argsort(-scores, kind="stable")


def multilabel_metrics(
    scores: Sequence[Sequence[float]],
    truth: Sequence[set[int]],
    ks: Sequence[int] = (1, 3, 5),
    threshold: float = 0.5,
) -> dict[str, float]:
    """Ranking and F1 metrics for per-class score vectors.

    Returns precision@k and ndcg@k for each k in ``ks``, plus mrr,
    macro_f1, and micro_f1 (scores >= ``threshold`` count as predicted).
    """
    matrix = np.asarray(scores, dtype=float)
    if matrix.ndim != 2 or len(matrix) == 0:
        raise MetricsError("scores must be a non-empty matrix")
    n, n_classes = matrix.shape
    if len(truth) != n:
        raise MetricsError(f"{n} score rows but {len(truth)} truth sets")
    for index, labels in enumerate(truth):
        if not labels:
            raise MetricsError(f"truth set {index} is empty")
        if any(c < 0 or c >= n_classes for c in labels):
            raise MetricsError(f"truth set {index} references unknown classes")
    for k in ks:
        if k < 1 or k > n_classes:
            raise MetricsError(f"k={k} outside [1, {n_classes}]")

    rankings = [_ranking(row) for row in matrix]
    out: dict[str, float] = {}
    for k in ks:
        hits = []
        ndcgs = []
        for ranking, labels in zip(rankings, truth):
            top = ranking[:k]
            hits.append(sum(1 for c in top if c in labels) / k)
            dcg = sum(
                1.0 / math.log2(rank + 2)
                for rank, c in enumerate(top)
                if c in labels
            )
            ideal = sum(
                1.0 / math.log2(rank + 2) for rank in range(min(len(labels), k))
            )
            ndcgs.append(dcg / ideal)
        out[f"precision@{k}"] = float(np.mean(hits))
        out[f"ndcg@{k}"] = float(np.mean(ndcgs))

    reciprocal = []
    for ranking, labels in zip(rankings, truth):
        rank = next(i for i, c in enumerate(ranking) if c in labels)
        reciprocal.append(1.0 / (rank + 1))
    out["mrr"] = float(np.mean(reciprocal))

    predicted = matrix >= threshold
    actual = np.zeros_like(predicted)
    for row, labels in enumerate(truth):
        actual[row, list(labels)] = True
    per_class_f1 = []
    for c in range(n_classes):
        tp = int((predicted[:, c] & actual[:, c]).sum())
        fp = int((predicted[:, c] & ~actual[:, c]).sum())
        fn = int((~predicted[:, c] & actual[:, c]).sum())
        per_class_f1.append(2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0)
    out["macro_f1"] = float(np.mean(per_class_f1))
    tp = int((predicted & actual).sum())
    fp = int((predicted & ~actual).sum())
    fn = int((~predicted & actual).sum())
    out["micro_f1"] = 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0
    return out


# --- assembled report ---


@dataclass(frozen=True)
class DiversityReport:
    """Table-style diversity summary; None marks scopes with no pairs."""

    vocab_all: int
    vocab_class_avg: float
    aps_all: float | None
    aps_intra: float | None
    aps_inter: float | None
    ingf: float
    histogram: Histogram | None


def diversity_report(
    corpus: Sequence[str],
    labels: Sequence[Hashable],
    embedder: HashTfEmbedder | None = None,
    n_max: int = 3,
    bins: int = 50,
    max_pairs_per_class: int = 10_000,
    seed: int = 0,
) -> DiversityReport:
    """All diversity metrics for a labeled corpus in one pass."""
    all_vocab, class_avg = vocab_size(corpus, labels)
    vectors = embed(corpus, embedder)

    def try_aps(scope: str) -> float | None:
        try:
            return aps(vectors, labels, scope)
        except MetricsError:
            return None

    try:
        histogram = similarity_histogram(
            vectors, labels, bins, max_pairs_per_class, seed
        )
    except MetricsError:
        histogram = None
    return DiversityReport(
        vocab_all=all_vocab,
        vocab_class_avg=class_avg,
        aps_all=try_aps("all"),
        aps_intra=try_aps("intra"),
        aps_inter=try_aps("inter"),
        ingf=ingf(corpus, n_max),
        histogram=histogram,
    )

"""Attribute classifier for probing value distributions in datasets.

A smoothed token-count model is trained from the attribute values
recorded in generation provenance, then applied to any corpus to
estimate how the attribute is distributed there."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Sequence

from .metrics import tokenize


class ProbeError(ValueError):
    """Untrainable inputs or mismatched prediction/annotation shapes."""


@dataclass(frozen=True)
class AttributeClassifier:
    """Multinomial token model with additive smoothing.

    ``values`` is sorted; ties at prediction resolve to the earliest
    entry. Tokens outside ``vocabulary`` are ignored when scoring.
    """

    dimension: str
    values: tuple[str, ...]
    alpha: float
    vocabulary: frozenset[str]
    token_counts: tuple[dict[str, int], ...]
    token_totals: tuple[int, ...]
    priors: tuple[float, ...]

    def log_likelihood(self, value_index: int, token: str) -> float:
        count = self.token_counts[value_index].get(token, 0)
        total = self.token_totals[value_index]
        return math.log(
            (count + self.alpha) / (total + self.alpha * len(self.vocabulary))
        )

    def token_probability_row(self, value_index: int) -> dict[str, float]:
        return {
            token: math.exp(self.log_likelihood(value_index, token))
            for token in self.vocabulary
        }


def train_attribute_classifier(
    examples: Sequence[tuple[str, str]],
    alpha: float = 1.0,
    dimension: str = "attribute",
) -> AttributeClassifier:
    """Fit the count model on (text, attribute-value) pairs."""
    if alpha <= 0:
        raise ProbeError(f"alpha must be positive, got {alpha}")
    values = sorted({value for _, value in examples})
    if len(values) < 2:
        raise ProbeError(
            f"need at least 2 distinct attribute values, got {len(values)}"
        )
    index_of = {value: i for i, value in enumerate(values)}
    counts: list[dict[str, int]] = [{} for _ in values]
    label_counts = [0] * len(values)
    vocabulary: set[str] = set()
    for text, value in examples:
        row = index_of[value]
        label_counts[row] += 1
        for token in tokenize(text):
            vocabulary.add(token)
            counts[row][token] = counts[row].get(token, 0) + 1
    return AttributeClassifier(
        dimension=dimension,
        values=tuple(values),
        alpha=alpha,
        vocabulary=frozenset(vocabulary),
        token_counts=tuple(counts),
        token_totals=tuple(sum(c.values()) for c in counts),
        priors=tuple(n / len(examples) for n in label_counts),
    )


def predict_attribute(
    classifier: AttributeClassifier, text: str
) -> tuple[str, dict[str, float]]:
    """(winning value, posterior over values).

    Unseen tokens are skipped, so a text of only unseen tokens (or an
    empty text) falls back to the prior argmax.
    """
    tokens = [t for t in tokenize(text) if t in classifier.vocabulary]
    scores = []
    for index in range(len(classifier.values)):
        score = math.log(classifier.priors[index])
        for token in tokens:
            score += classifier.log_likelihood(index, token)
        scores.append(score)
    peak = max(scores)
    exp = [math.exp(s - peak) for s in scores]
    norm = sum(exp)
    posterior = {
        value: e / norm for value, e in zip(classifier.values, exp)
    }
    winner = classifier.values[scores.index(peak)]
    return winner, posterior


@dataclass(frozen=True)
class AttributeDistributionReport:
    """Predicted-value proportions, overall and broken out per class."""

    dimension: str
    overall: dict[str, float]
    per_class: dict[Hashable, dict[str, float]]


def _proportions(predictions: Sequence[str]) -> dict[str, float]:
    out: dict[str, float] = {}
    for value in predictions:
        out[value] = out.get(value, 0) + 1
    return {value: count / len(predictions) for value, count in out.items()}


def distribution_report(
    classifier: AttributeClassifier,
    texts: Sequence[str],
    labels: Sequence[Hashable] | None = None,
) -> AttributeDistributionReport:
    """Predict every text and tally value proportions."""
    if not texts:
        raise ProbeError("dataset must be non-empty")
    if labels is not None and len(labels) != len(texts):
        raise ProbeError(f"{len(texts)} texts but {len(labels)} labels")
    predictions = [predict_attribute(classifier, text)[0] for text in texts]
    per_class: dict[Hashable, dict[str, float]] = {}
    if labels is not None:
        grouped: dict[Hashable, list[str]] = {}
        for prediction, label in zip(predictions, labels):
            grouped.setdefault(label, []).append(prediction)
        per_class = {
            label: _proportions(preds) for label, preds in grouped.items()
        }
    return AttributeDistributionReport(
        dimension=classifier.dimension,
        overall=_proportions(predictions),
        per_class=per_class,
    )


def agreement(predictions: Sequence[str], annotations: Sequence[str]) -> float:
    """Exact-match fraction; an "unknown" annotation only matches itself."""
    if len(predictions) != len(annotations):
        raise ProbeError(
            f"{len(predictions)} predictions but {len(annotations)} annotations"
        )
    if not predictions:
        raise ProbeError("nothing to compare")
    matches = sum(1 for p, a in zip(predictions, annotations) if p == a)
    return matches / len(predictions)

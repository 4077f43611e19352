"""Random attribute configurations, label-count sampling, and subtopic merging.

All randomness flows through numpy Generator streams (PCG64) so a single seed
reproduces every sampled configuration; the algorithm id is recorded in
dataset provenance. Subtopic merging groups near-duplicate strings across
classes by transitive closure over a fuzzy-match threshold.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .schema import AttributeSchema, AttributeValue, ClassLabel

RNG_ID = "numpy-pcg64"


def make_rng(seed: int) -> np.random.Generator:
    """The generator every sampling entry point expects."""
    return np.random.default_rng(seed)


def split_streams(seed: int, count: int) -> list[np.random.Generator]:
    """Independent child streams (one per worker/class) from one seed."""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(count)]


@dataclass(frozen=True)
class AttributeConfiguration:
    """One fully-specified prompt condition: a class plus one value per dimension."""

    label: ClassLabel
    assignments: tuple[tuple[str, AttributeValue], ...]

    def value(self, dimension_name: str) -> AttributeValue:
        for name, value in self.assignments:
            if name == dimension_name:
                return value
        raise KeyError(dimension_name)

    def text(self, dimension_name: str) -> str:
        return self.value(dimension_name).text

    def dimension_names(self) -> list[str]:
        return [name for name, _ in self.assignments]


def sample_configuration(
    schema: AttributeSchema, class_name: str, rng: np.random.Generator
) -> AttributeConfiguration:
    """Choose a value independently and uniformly for every dimension."""
    label = schema.class_named(class_name)
    assignments = []
    for dim in schema.dimensions:
        values = dim.values_for(class_name)
        assignments.append((dim.name, values[int(rng.integers(len(values)))]))
    return AttributeConfiguration(label=label, assignments=tuple(assignments))


@dataclass(frozen=True)
class LabelCountDistribution:
    """Empirical distribution of how many labels one example carries."""

    histogram: tuple[tuple[int, float], ...]
    source: str = ""

    def __post_init__(self) -> None:
        if not self.histogram:
            raise ValueError("empty label-count histogram")
        total = 0.0
        for n, prob in self.histogram:
            if n < 1:
                raise ValueError(f"label count must be >= 1, got {n}")
            if prob < 0:
                raise ValueError(f"negative probability for n={n}")
            total += prob
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

    def probability(self, n: int) -> float:
        for count, prob in self.histogram:
            if count == n:
                return prob
        return 0.0

    def max_count(self) -> int:
        return max(n for n, _ in self.histogram)


def estimate_label_count_distribution(
    reference_label_sets: Iterable[Sequence | set | frozenset],
    source: str = "",
) -> LabelCountDistribution:
    """Histogram of |label-set| over a reference corpus, normalized."""
    sizes: dict[int, int] = {}
    total = 0
    for label_set in reference_label_sets:
        if not label_set:
            raise ValueError("reference contains an empty label set")
        size = len(label_set)
        sizes[size] = sizes.get(size, 0) + 1
        total += 1
    if total == 0:
        raise ValueError("no reference label sets given")
    histogram = tuple((n, count / total) for n, count in sorted(sizes.items()))
    return LabelCountDistribution(histogram=histogram, source=source)


def sample_label_set(
    dist: LabelCountDistribution,
    classes: Sequence[str],
    rng: np.random.Generator,
) -> frozenset[str]:
    """Draw a label-set size from ``dist``, then that many distinct classes
    uniformly without replacement."""
    counts = [n for n, _ in dist.histogram]
    probs = [p for _, p in dist.histogram]
    n = int(rng.choice(counts, p=probs))
    if n > len(classes):
        raise ValueError(f"drew label count {n} but only {len(classes)} classes exist")
    chosen = rng.choice(len(classes), size=n, replace=False)
    return frozenset(classes[int(i)] for i in chosen)


def _normalize(text: str) -> str:
    return " ".join(text.lower().split())


def _edit_distance(a: str, b: str) -> int:
    # two-row Levenshtein
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, char_a in enumerate(a, start=1):
        current = [i]
        for j, char_b in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (char_a != char_b),
                )
            )
        previous = current
    return previous[-1]


def fuzzy_score(a: str, b: str) -> int:
    """Normalized edit similarity in [0, 100].

    Both strings are lowercased with whitespace collapsed before comparison;
    the score is 100 x (1 - distance / longer-length), rounded to the nearest
    integer. Two empty strings score 100.
    """
    norm_a, norm_b = _normalize(a), _normalize(b)
    longest = max(len(norm_a), len(norm_b))
    if longest == 0:
        return 100
    ratio = 1.0 - _edit_distance(norm_a, norm_b) / longest
    return int(ratio * 100 + 0.5)


@dataclass(frozen=True)
class MergePolicy:
    """Threshold and similarity function for subtopic merging."""

    threshold: int = 90
    similarity: Callable[[str, str], int] = field(default=fuzzy_score)

    def __post_init__(self) -> None:
        if not 0 <= self.threshold <= 100:
            raise ValueError(f"threshold must be in [0, 100], got {self.threshold}")


@dataclass(frozen=True)
class SubtopicGroup:
    """Merged subtopics: the member strings and every class they came from."""

    members: tuple[str, ...]
    classes: frozenset[str]

    @property
    def representative(self) -> str:
        return self.members[0]


class _UnionFind:
    def __init__(self, size: int) -> None:
        self.parent = list(range(size))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        root_i, root_j = self.find(i), self.find(j)
        if root_i != root_j:
            self.parent[root_j] = root_i


def merge_subtopics(
    per_class_subtopics: Mapping[str, Sequence[str]],
    policy: MergePolicy | None = None,
) -> dict[str, SubtopicGroup]:
    """Group subtopics across classes whose similarity reaches the threshold.

    Transitive: if a~b and b~c score at or above the threshold, all three land
    in one group even when a~c does not. Groups are keyed by their
    lexicographically smallest member; each group's class set is the union of
    the classes its members appeared under.
    """
    if policy is None:
        policy = MergePolicy()
    texts: list[str] = []
    seen: dict[str, int] = {}
    classes_of: list[set[str]] = []
    for class_name, subtopics in per_class_subtopics.items():
        for subtopic in subtopics:
            if subtopic not in seen:
                seen[subtopic] = len(texts)
                texts.append(subtopic)
                classes_of.append(set())
            classes_of[seen[subtopic]].add(class_name)

    uf = _UnionFind(len(texts))
    for i in range(len(texts)):
        for j in range(i + 1, len(texts)):
            if policy.similarity(texts[i], texts[j]) >= policy.threshold:
                uf.union(i, j)

    grouped: dict[int, list[int]] = {}
    for i in range(len(texts)):
        grouped.setdefault(uf.find(i), []).append(i)

    result: dict[str, SubtopicGroup] = {}
    for indices in grouped.values():
        members = tuple(sorted(texts[i] for i in indices))
        classes = frozenset().union(*(classes_of[i] for i in indices))
        result[members[0]] = SubtopicGroup(members=members, classes=classes)
    return result

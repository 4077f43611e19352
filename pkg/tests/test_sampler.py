"""Sampling and merging: frequency oracles, DP oracle, union-find oracle."""

import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from attrgen.sampler import (
    LabelCountDistribution,
    MergePolicy,
    estimate_label_count_distribution,
    fuzzy_score,
    make_rng,
    merge_subtopics,
    sample_configuration,
    sample_label_set,
    split_streams,
)
from attrgen.schema import load_builtin_schema, parse_schema

TOY = """\
[task] name=toy persona=p
[class] id=0 name=red
[class] id=1 name=blue
[dimension] name=Coin kind=independent
value: heads
value: tails
[dimension] name=Pet kind=dependent
class: red
value: crab
class: blue
value: whale
value: jay
"""


def full_matrix_distance(a, b):
    """Textbook full-table Levenshtein, the oracle for the two-row version."""
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        table[i][0] = i
    for j in range(len(b) + 1):
        table[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            table[i][j] = min(
                table[i - 1][j] + 1,
                table[i][j - 1] + 1,
                table[i - 1][j - 1] + (a[i - 1] != b[j - 1]),
            )
    return table[len(a)][len(b)]


def oracle_score(a, b):
    norm_a = " ".join(a.lower().split())
    norm_b = " ".join(b.lower().split())
    longest = max(len(norm_a), len(norm_b))
    if longest == 0:
        return 100
    return int((1.0 - full_matrix_distance(norm_a, norm_b) / longest) * 100 + 0.5)


def test_fuzzy_score_frozen_cases():
    assert fuzzy_score("Prime numbers", "prime numbers") == 100
    assert fuzzy_score("", "") == 100
    assert fuzzy_score("a", "") == 0
    # kitten/sitting: distance 3 over length 7 -> 57.14 -> 57
    assert fuzzy_score("kitten", "sitting") == 57
    assert fuzzy_score("graph  neural\tnetworks", "Graph Neural Networks") == 100


@settings(max_examples=200)
@given(st.text("abcde XYZ", max_size=12), st.text("abcde XYZ", max_size=12))
def test_fuzzy_score_matches_dp_oracle(a, b):
    assert fuzzy_score(a, b) == oracle_score(a, b)


@given(st.text(max_size=20), st.text(max_size=20))
def test_fuzzy_score_symmetric_and_bounded(a, b):
    score = fuzzy_score(a, b)
    assert 0 <= score <= 100
    assert score == fuzzy_score(b, a)
    assert fuzzy_score(a, a) == 100


def test_label_count_distribution_frozen():
    dist = estimate_label_count_distribution([{"a"}, {"a", "b"}, {"a", "b"}])
    assert dist.probability(1) == pytest.approx(1 / 3)
    assert dist.probability(2) == pytest.approx(2 / 3)
    assert dist.probability(3) == 0.0
    assert dist.max_count() == 2


def test_label_count_distribution_degenerate():
    dist = estimate_label_count_distribution([{"a"}, {"b"}, {"c"}])
    assert dist.histogram == ((1, 1.0),)


def test_label_count_distribution_rejects_bad_input():
    with pytest.raises(ValueError, match="no reference"):
        estimate_label_count_distribution([])
    with pytest.raises(ValueError, match="empty label set"):
        estimate_label_count_distribution([{"a"}, set()])


@given(st.lists(st.integers(1, 4), min_size=1, max_size=50))
def test_label_count_distribution_counting_oracle(sizes):
    sets = [set(range(size)) for size in sizes]
    dist = estimate_label_count_distribution(sets)
    expected = Counter(sizes)
    for n, count in expected.items():
        assert dist.probability(n) == pytest.approx(count / len(sizes))
    assert sum(p for _, p in dist.histogram) == pytest.approx(1.0)


def test_distribution_validation():
    with pytest.raises(ValueError, match="sum"):
        LabelCountDistribution(histogram=((1, 0.5), (2, 0.4)))
    with pytest.raises(ValueError, match=">= 1"):
        LabelCountDistribution(histogram=((0, 1.0),))


def test_sample_label_set_forced():
    dist = LabelCountDistribution(histogram=((1, 1.0),))
    assert sample_label_set(dist, ["x"], make_rng(0)) == frozenset({"x"})


def test_sample_label_set_full_roster():
    dist = LabelCountDistribution(histogram=((3, 1.0),))
    assert sample_label_set(dist, ["a", "b", "c"], make_rng(0)) == frozenset("abc")


def test_sample_label_set_too_many():
    dist = LabelCountDistribution(histogram=((4, 1.0),))
    with pytest.raises(ValueError, match="label count 4"):
        sample_label_set(dist, ["a", "b"], make_rng(0))


def test_sample_label_set_pair_frequencies():
    dist = LabelCountDistribution(histogram=((2, 1.0),))
    classes = ["a", "b", "c"]
    rng = make_rng(7)
    counts = Counter(sample_label_set(dist, classes, rng) for _ in range(10_000))
    for pair in itertools.combinations(classes, 2):
        assert counts[frozenset(pair)] / 10_000 == pytest.approx(1 / 3, abs=0.03)


def test_sample_configuration_forced():
    schema = parse_schema(
        "[task] name=t persona=p\n[class] id=0 name=only\n"
        "[dimension] name=A kind=independent\nvalue: a1\n"
        "[dimension] name=B kind=independent\nvalue: b1\n"
    )
    config = sample_configuration(schema, "only", make_rng(0))
    assert config.text("A") == "a1"
    assert config.text("B") == "b1"
    assert config.label.name == "only"


def test_sample_configuration_membership_and_order():
    schema = parse_schema(TOY)
    rng = make_rng(3)
    for _ in range(200):
        config = sample_configuration(schema, "blue", rng)
        assert config.dimension_names() == ["Coin", "Pet"]
        assert config.text("Coin") in {"heads", "tails"}
        assert config.text("Pet") in {"whale", "jay"}


def test_sample_configuration_uniformity():
    schema = parse_schema(TOY)
    rng = make_rng(11)
    counts = Counter(
        sample_configuration(schema, "red", rng).text("Coin") for _ in range(10_000)
    )
    assert 0.46 <= counts["heads"] / 10_000 <= 0.54


def test_sample_configuration_nyt_dimensions():
    schema = load_builtin_schema("nyt")
    config = sample_configuration(schema, "economy", make_rng(1))
    assert set(config.dimension_names()) == {
        "Subtopic", "Location", "Writing Style", "Length"
    }


def test_sampling_reproducibility():
    schema = parse_schema(TOY)

    def draw():
        rng = make_rng(99)
        return [sample_configuration(schema, "blue", rng) for _ in range(20)]

    assert draw() == draw()


def test_split_streams_independent_but_reproducible():
    first = [stream.integers(1000) for stream in split_streams(5, 3)]
    second = [stream.integers(1000) for stream in split_streams(5, 3)]
    assert first == second
    assert len(set(first)) > 1


def oracle_merge(per_class, threshold):
    """Brute-force union-find over the full pairwise score matrix."""
    texts = []
    classes_of = {}
    for class_name, subs in per_class.items():
        for sub in subs:
            if sub not in classes_of:
                texts.append(sub)
                classes_of[sub] = set()
            classes_of[sub].add(class_name)
    parent = {t: t for t in texts}

    def find(t):
        while parent[t] != t:
            t = parent[t]
        return t

    for a, b in itertools.combinations(texts, 2):
        if fuzzy_score(a, b) >= threshold:
            parent[find(b)] = find(a)
    groups = {}
    for t in texts:
        groups.setdefault(find(t), []).append(t)
    return {
        min(members): (tuple(sorted(members)),
                       frozenset().union(*(classes_of[m] for m in members)))
        for members in groups.values()
    }


def test_merge_exact_duplicate():
    groups = merge_subtopics(
        {"A": ["graph neural networks"], "B": ["graph neural networks"]}
    )
    assert set(groups) == {"graph neural networks"}
    assert groups["graph neural networks"].classes == frozenset({"A", "B"})


def test_merge_sub_threshold_pair_stays_split():
    a = "abcdefghijklmnopqrs"
    b = "abcdefghijklmnopqXY"
    assert fuzzy_score(a, b) == 89
    groups = merge_subtopics({"A": [a], "B": [b]}, MergePolicy(threshold=90))
    assert len(groups) == 2


def test_merge_at_threshold_joins():
    a = "aaaaaaaaaa"
    b = "aaaaaaaaab"
    assert fuzzy_score(a, b) == 90
    groups = merge_subtopics({"A": [a], "B": [b]}, MergePolicy(threshold=90))
    assert len(groups) == 1


def test_merge_transitive_chain():
    a, b, c = "aaaaaaaaaa", "aaaaaaaaab", "aaaaaaaabb"
    assert fuzzy_score(a, c) < 90 <= fuzzy_score(a, b)
    assert fuzzy_score(b, c) >= 90
    groups = merge_subtopics({"A": [a], "B": [b], "C": [c]})
    (group,) = groups.values()
    assert group.members == (a, b, c)
    assert group.classes == frozenset({"A", "B", "C"})


def test_merge_representative_is_smallest_member():
    groups = merge_subtopics({"A": ["zebra topic"], "B": ["Zebra topic"]})
    (key,) = groups
    assert key == "Zebra topic"
    assert groups[key].representative == "Zebra topic"


def test_merge_partition_property():
    rng = np.random.default_rng(17)
    alphabet = "abcdef"
    per_class = {
        f"c{c}": [
            "".join(rng.choice(list(alphabet), size=int(rng.integers(3, 9))))
            for _ in range(6)
        ]
        for c in range(4)
    }
    groups = merge_subtopics(per_class, MergePolicy(threshold=70))
    all_inputs = {sub for subs in per_class.values() for sub in subs}
    seen = [m for g in groups.values() for m in g.members]
    assert sorted(seen) == sorted(all_inputs)


def test_merge_matches_oracle_randomized():
    rng = np.random.default_rng(23)
    words = ["signal", "signals", "market", "markets", "deep net", "deepnet",
             "poetry", "poetic", "transit", "transits", "quantum", "quanta"]
    for trial in range(20):
        per_class = {}
        for c in range(3):
            size = int(rng.integers(2, 6))
            picks = rng.choice(len(words), size=size, replace=False)
            per_class[f"class{c}"] = [words[int(i)] for i in picks]
        for threshold in (70, 85, 90):
            got = merge_subtopics(per_class, MergePolicy(threshold=threshold))
            want = oracle_merge(per_class, threshold)
            assert {k: (g.members, g.classes) for k, g in got.items()} == want


def test_merge_policy_validation():
    with pytest.raises(ValueError, match="threshold"):
        MergePolicy(threshold=101)


def test_merge_custom_similarity():
    groups = merge_subtopics(
        {"A": ["x"], "B": ["completely different"]},
        MergePolicy(threshold=1, similarity=lambda a, b: 100),
    )
    assert len(groups) == 1

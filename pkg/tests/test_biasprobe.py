"""Attribute classifier: hand Bayes checks, enumeration oracle, reports."""

from fractions import Fraction

import numpy as np
import pytest

from attrgen.biasprobe import (
    ProbeError,
    agreement,
    distribution_report,
    predict_attribute,
    train_attribute_classifier,
)
from attrgen.metrics import tokenize

THREE_VALUE = [
    ("x x y", "a"),
    ("y z", "b"),
    ("z z", "c"),
]


def test_train_validation():
    with pytest.raises(ProbeError, match="2 distinct"):
        train_attribute_classifier([("a b", "only"), ("c d", "only")])
    with pytest.raises(ProbeError, match="alpha"):
        train_attribute_classifier([("a", "x"), ("b", "y")], alpha=0.0)


def test_separable_vocabulary():
    classifier = train_attribute_classifier(
        [("tokyo osaka kyoto", "Asia"), ("paris london berlin", "Europe")]
    )
    value, posterior = predict_attribute(classifier, "tokyo summit")
    assert value == "Asia"
    assert posterior["Asia"] > posterior["Europe"]


def test_training_order_invariance():
    examples = [
        ("alpha beta", "one"),
        ("beta gamma", "two"),
        ("gamma delta", "one"),
        ("delta alpha", "two"),
    ]
    direct = train_attribute_classifier(examples)
    shuffled = train_attribute_classifier(examples[::-1])
    assert direct == shuffled


def test_hand_computed_posterior():
    classifier = train_attribute_classifier(THREE_VALUE)
    value, posterior = predict_attribute(classifier, "x z")
    # scores: a = 1/3 * 3/6 * 1/6, b = 1/3 * 1/5 * 2/5, c = 1/3 * 1/5 * 3/5
    # proportional to 25 : 24 : 36
    assert value == "c"
    assert posterior["a"] == pytest.approx(25 / 85, abs=1e-9)
    assert posterior["b"] == pytest.approx(24 / 85, abs=1e-9)
    assert posterior["c"] == pytest.approx(36 / 85, abs=1e-9)


def oracle_posterior(examples, alpha, text):
    """Exact-fraction enumeration of the smoothed posterior."""
    values = sorted({v for _, v in examples})
    vocab = {t for doc, _ in examples for t in tokenize(doc)}
    alpha = Fraction(alpha)
    weights = {}
    for value in values:
        docs = [doc for doc, v in examples if v == value]
        counts = {}
        for doc in docs:
            for token in tokenize(doc):
                counts[token] = counts.get(token, 0) + 1
        total = sum(counts.values())
        weight = Fraction(len(docs), len(examples))
        for token in tokenize(text):
            if token not in vocab:
                continue
            weight *= (counts.get(token, 0) + alpha) / (
                total + alpha * len(vocab)
            )
        weights[value] = weight
    norm = sum(weights.values())
    return {v: w / norm for v, w in weights.items()}


def test_predict_matches_enumeration_oracle():
    rng = np.random.default_rng(19)
    tokens = ["p", "q", "r", "s"]
    for _ in range(30):
        n_values = int(rng.integers(2, 4))
        examples = []
        for value_index in range(n_values):
            for _ in range(int(rng.integers(1, 4))):
                doc = " ".join(
                    rng.choice(tokens, size=int(rng.integers(1, 5)))
                )
                examples.append((doc, f"v{value_index}"))
        probe = " ".join(rng.choice(tokens + ["zz"], size=3))
        classifier = train_attribute_classifier(examples)
        value, posterior = predict_attribute(classifier, probe)
        want = oracle_posterior(examples, 1.0, probe)
        for key, exact in want.items():
            assert posterior[key] == pytest.approx(float(exact), abs=1e-9)
        ranked = sorted(want.items(), key=lambda item: (-item[1], item[0]))
        if len(ranked) > 1 and float(ranked[0][1] - ranked[1][1]) > 1e-9:
            assert value == ranked[0][0]


def test_empty_text_prior_fallback():
    classifier = train_attribute_classifier(
        [("a", "minor"), ("b", "major"), ("c", "major")]
    )
    assert predict_attribute(classifier, "")[0] == "major"


def test_unseen_tokens_prior_fallback():
    classifier = train_attribute_classifier(
        [("a", "minor"), ("b", "major"), ("c", "major")]
    )
    value, posterior = predict_attribute(classifier, "zzz qqq")
    assert value == "major"
    assert posterior["major"] == pytest.approx(2 / 3, abs=1e-9)


def test_tie_breaks_to_earliest_value():
    classifier = train_attribute_classifier([("x", "zeta"), ("y", "alpha")])
    assert predict_attribute(classifier, "")[0] == "alpha"


def test_token_probability_rows_sum_to_one():
    classifier = train_attribute_classifier(THREE_VALUE)
    for index in range(len(classifier.values)):
        row = classifier.token_probability_row(index)
        assert sum(row.values()) == pytest.approx(1.0, abs=1e-9)


def test_posterior_sums_to_one():
    classifier = train_attribute_classifier(THREE_VALUE)
    for probe in ("x", "x y z", "unseen words", ""):
        _, posterior = predict_attribute(classifier, probe)
        assert sum(posterior.values()) == pytest.approx(1.0, abs=1e-9)


# --- distribution reports ---

POOLS = {
    "Asia": ["tokyo", "seoul", "delhi", "hanoi"],
    "Europe": ["paris", "oslo", "madrid", "rome"],
    "Africa": ["cairo", "lagos", "nairobi", "accra"],
}


def disjoint_corpus(per_value, seed=0):
    rng = np.random.default_rng(seed)
    examples = []
    for value, pool in POOLS.items():
        for _ in range(per_value):
            examples.append(
                (" ".join(rng.choice(pool, size=3)), value)
            )
    return examples


def test_report_singleton():
    classifier = train_attribute_classifier(disjoint_corpus(4))
    report = distribution_report(classifier, ["tokyo delhi"])
    assert report.overall == {"Asia": 1.0}
    assert report.per_class == {}


def test_report_balanced_separable_uniform():
    classifier = train_attribute_classifier(disjoint_corpus(5))
    probes = [text for text, _ in disjoint_corpus(10, seed=7)]
    report = distribution_report(classifier, probes)
    for value in POOLS:
        assert report.overall[value] == pytest.approx(1 / 3, abs=1e-9)


def test_report_conservation_and_per_class():
    classifier = train_attribute_classifier(disjoint_corpus(4))
    texts = ["tokyo", "paris", "cairo", "seoul", "rome", "lagos"]
    labels = [0, 0, 0, 1, 1, 1]
    report = distribution_report(classifier, texts, labels)
    predictions = [predict_attribute(classifier, t)[0] for t in texts]
    recount = {
        v: predictions.count(v) / len(predictions) for v in set(predictions)
    }
    assert report.overall == recount
    assert sum(report.overall.values()) == pytest.approx(1.0, abs=1e-9)
    for label in (0, 1):
        assert sum(report.per_class[label].values()) == pytest.approx(
            1.0, abs=1e-9
        )
    assert report.per_class[0] == {
        "Asia": pytest.approx(1 / 3),
        "Europe": pytest.approx(1 / 3),
        "Africa": pytest.approx(1 / 3),
    }


def test_report_validation():
    classifier = train_attribute_classifier(disjoint_corpus(2))
    with pytest.raises(ProbeError, match="non-empty"):
        distribution_report(classifier, [])
    with pytest.raises(ProbeError, match="labels"):
        distribution_report(classifier, ["a"], [0, 1])


def test_heldout_accuracy_on_disjoint_vocabularies():
    classifier = train_attribute_classifier(disjoint_corpus(5, seed=1))
    heldout = disjoint_corpus(8, seed=2)
    predictions = [predict_attribute(classifier, text)[0] for text, _ in heldout]
    truth = [value for _, value in heldout]
    assert agreement(predictions, truth) == 1.0


# --- agreement ---


def test_agreement_identity_and_disjoint():
    assert agreement(["a", "b"], ["a", "b"]) == 1.0
    assert agreement(["a", "b"], ["b", "a"]) == 0.0


def test_agreement_unknown_annotation():
    assert agreement(["Asia"], ["unknown"]) == 0.0
    assert agreement(["unknown"], ["unknown"]) == 1.0


def test_agreement_matches_recount():
    rng = np.random.default_rng(23)
    values = ["a", "b", "c"]
    predictions = [values[int(i)] for i in rng.integers(0, 3, size=100)]
    annotations = [values[int(i)] for i in rng.integers(0, 3, size=100)]
    expected = sum(p == a for p, a in zip(predictions, annotations)) / 100
    assert agreement(predictions, annotations) == pytest.approx(expected)


def test_agreement_validation():
    with pytest.raises(ProbeError, match="annotations"):
        agreement(["a"], ["a", "b"])
    with pytest.raises(ProbeError, match="nothing"):
        agreement([], [])

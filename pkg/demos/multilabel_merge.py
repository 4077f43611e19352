"""Merge near-duplicate subtopics across classes, then generate multi-label data.

Subtopics proposed independently per class sometimes describe the same thing;
fuzzy matching at threshold 90 groups them, and examples generated from a
merged group carry every contributing class as a label.
"""

from attrgen import (
    AttributeDimension,
    AttributeSchema,
    AttributeValue,
    ClassLabel,
    GenerationJob,
    GenerationParams,
    MockProvider,
    MockRule,
    generate_multilabel_dataset,
    merge_subtopics,
)
from attrgen.promptgen import parse_template
from attrgen.sampler import LabelCountDistribution

per_class = {
    "cs.LG": ["evolving networks for trading", "gradient descent tricks"],
    "q-fin.CP": ["evolving network for trading", "option pricing formulas"],
    "stat.ME": ["survey weighting methods", "bootstrap confidence bands"],
}

merged = merge_subtopics(per_class)
for key, group in sorted(merged.items()):
    print(f"group {key!r}: members={list(group.members)} classes={sorted(group.classes)}")

classes = sorted(per_class)
schema = AttributeSchema(
    task="papers",
    persona="",
    classes=[ClassLabel(i, name) for i, name in enumerate(classes)],
    dimensions=[
        AttributeDimension(
            "Subtopic",
            class_dependent=True,
            per_class={n: [AttributeValue(t) for t in per_class[n]] for n in classes},
        )
    ],
)
job = GenerationJob(
    schema=schema,
    mode="attr",
    per_class_count=2,
    params=GenerationParams(max_tokens=64),
    seed=3,
    template=parse_template("mode: attr\n---\nWrite a {class} abstract about {subtopic}."),
)
result = generate_multilabel_dataset(
    job,
    LabelCountDistribution(((1, 1.0),)),
    merged,
    MockProvider([MockRule(match="", response="We study the stated problem.")]),
)

print()
for example in result.examples:
    names = [schema.classes[i].name for i in example.label]
    print(f"labels={names} subtopic={example.provenance['configuration']['assignments'][0]['text']!r}")

"""Attribute-conditioned prompt generation for synthetic training data."""

from attrgen.biasprobe import (
    distribution_report,
    predict_attribute,
    train_attribute_classifier,
)
from attrgen.curation import (
    caf_filter,
    interactive_select,
    propose_dimensions,
    propose_values,
)
from attrgen.engine import (
    GeneratedExample,
    GenerationJob,
    GenerationResult,
    emit_dataset,
    generate_dataset,
    generate_multilabel_dataset,
    load_dataset,
)
from attrgen.metrics import diversity_report, multilabel_metrics
from attrgen.promptgen import (
    load_builtin_template,
    load_template,
    parse_template,
    render_attr,
    render_meta,
    render_sim,
)
from attrgen.provider import (
    ChatCompletionProvider,
    CostMeter,
    GenerationParams,
    MockProvider,
    MockRule,
    cost_per_1k_examples,
)
from attrgen.sampler import (
    make_rng,
    merge_subtopics,
    sample_configuration,
    sample_label_set,
)
from attrgen.schema import (
    AttributeDimension,
    AttributeSchema,
    AttributeValue,
    ClassLabel,
    count_configurations,
    load_builtin_schema,
    load_schema,
)

__version__ = "0.1.0"

__all__ = [
    "AttributeDimension",
    "AttributeSchema",
    "AttributeValue",
    "ChatCompletionProvider",
    "ClassLabel",
    "CostMeter",
    "GeneratedExample",
    "GenerationJob",
    "GenerationParams",
    "GenerationResult",
    "MockProvider",
    "MockRule",
    "caf_filter",
    "cost_per_1k_examples",
    "count_configurations",
    "distribution_report",
    "diversity_report",
    "emit_dataset",
    "generate_dataset",
    "generate_multilabel_dataset",
    "interactive_select",
    "load_builtin_schema",
    "load_builtin_template",
    "load_dataset",
    "load_schema",
    "load_template",
    "make_rng",
    "merge_subtopics",
    "multilabel_metrics",
    "parse_template",
    "predict_attribute",
    "propose_dimensions",
    "propose_values",
    "render_attr",
    "render_meta",
    "render_sim",
    "sample_configuration",
    "sample_label_set",
    "train_attribute_classifier",
]

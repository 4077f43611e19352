"""Command-line front end: the whole pipeline as subcommands.

Every command reads shared settings from an optional JSON config file, with
flags taking precedence. Exit codes: 0 success, 1 domain error (bad data,
backend trouble), 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .biasprobe import distribution_report, train_attribute_classifier
from .curation import (
    CandidateList,
    caf_filter,
    interactive_select,
    propose_dimensions,
    propose_values,
)
from .engine import (
    GenerationJob,
    emit_dataset,
    generate_dataset,
    load_dataset,
    preview_prompts,
    provenance_path,
)
from .metrics import DiversityReport, diversity_report, multilabel_metrics
from .promptgen import PromptTemplate, load_template
from .provider import (
    ChatCompletionProvider,
    CostMeter,
    GenerationParams,
    MockProvider,
    Provider,
    ProviderError,
    cost_per_1k_examples,
    count_tokens,
)
from .schema import (
    AttributeSchema,
    AttributeValue,
    SchemaError,
    load_builtin_schema,
    load_schema,
    validate,
)

log = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad invocation that argparse could not catch statically."""


@dataclass(frozen=True)
class RunConfig:
    """Effective settings: built-in defaults, overlaid by file, then flags."""

    provider: str = "mock"
    model: str = "mock-model"
    base_url: str = ""
    script: str | None = None
    price_per_1k_prompt_tokens: float = 0.0
    price_per_1k_completion_tokens: float = 0.0
    schema: str | None = None
    templates: dict[str, str] = field(default_factory=dict)
    seed: int = 0
    max_in_flight: int = 4
    budget_cap: float | None = None


_PROVIDER_KEYS = {
    "kind",
    "model",
    "base_url",
    "script",
    "price_per_1k_prompt_tokens",
    "price_per_1k_completion_tokens",
}
_CONFIG_KEYS = {
    "provider",
    "schema",
    "templates",
    "seed",
    "max_in_flight",
    "budget_cap",
}


def _require_file(path: str, what: str) -> None:
    if not Path(path).is_file():
        raise ValueError(f"{what}: no such file: {path}")


def load_run_config(path: str | Path) -> RunConfig:
    """Parse a JSON config file; every referenced path must exist."""
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    unknown = sorted(set(data) - _CONFIG_KEYS)
    if unknown:
        raise ValueError(f"{path}: unknown config keys {unknown}")
    merged: dict[str, object] = {}
    provider = data.get("provider", {})
    if not isinstance(provider, dict):
        raise ValueError(f"{path}: 'provider' must be an object")
    unknown = sorted(set(provider) - _PROVIDER_KEYS)
    if unknown:
        raise ValueError(f"{path}: unknown provider keys {unknown}")
    if "kind" in provider:
        merged["provider"] = provider["kind"]
    for key in ("model", "base_url", "script", "price_per_1k_prompt_tokens", "price_per_1k_completion_tokens"):
        if key in provider:
            merged[key] = provider[key]
    for key in ("schema", "templates", "seed", "max_in_flight", "budget_cap"):
        if key in data:
            merged[key] = data[key]
    config = dataclasses.replace(RunConfig(), **merged)  # type: ignore[arg-type]
    if config.script is not None:
        _require_file(config.script, f"{path}: provider script")
    if config.schema is not None and not Path(config.schema).is_file():
        # builtin task names are allowed where a schema is expected
        try:
            load_builtin_schema(config.schema)
        except SchemaError:
            raise ValueError(f"{path}: schema: no such file or built-in task: {config.schema}") from None
    if not isinstance(config.templates, dict):
        raise ValueError(f"{path}: 'templates' must map mode to path")
    for mode, template_path in config.templates.items():
        if mode not in ("sim", "attr"):
            raise ValueError(f"{path}: template mode must be 'sim' or 'attr', got {mode!r}")
        _require_file(template_path, f"{path}: {mode} template")
    return config


_FLAG_FIELDS = (
    "provider",
    "model",
    "base_url",
    "script",
    "seed",
    "max_in_flight",
    "budget_cap",
)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """File config overlaid with whatever flags the user actually passed."""
    config = (
        load_run_config(args.config)
        if getattr(args, "config", None)
        else RunConfig()
    )
    overrides = {}
    for name in _FLAG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "price_prompt", None) is not None:
        overrides["price_per_1k_prompt_tokens"] = args.price_prompt
    if getattr(args, "price_completion", None) is not None:
        overrides["price_per_1k_completion_tokens"] = args.price_completion
    return dataclasses.replace(config, **overrides)


def build_provider(config: RunConfig) -> Provider:
    meter = CostMeter(
        price_per_1k_prompt_tokens=config.price_per_1k_prompt_tokens,
        price_per_1k_completion_tokens=config.price_per_1k_completion_tokens,
    )
    if config.provider == "mock":
        if config.script:
            _require_file(config.script, "provider script")
            return MockProvider.from_script(config.script, meter=meter)
        return MockProvider(meter=meter)
    if config.provider == "chat":
        if not config.base_url:
            raise ValueError("chat provider needs a base URL (--base-url or config)")
        return ChatCompletionProvider(config.model, config.base_url, meter=meter)
    raise ValueError(f"unknown provider kind {config.provider!r}")


def _load_schema_ref(ref: str | None) -> AttributeSchema:
    if not ref:
        raise UsageError("the following arguments are required: --schema")
    if Path(ref).is_file():
        schema = load_schema(ref)
    else:
        try:
            schema = load_builtin_schema(ref)
        except SchemaError:
            raise ValueError(f"schema {ref!r}: no such file or built-in task") from None
    validate(schema)
    return schema


def _template_for(
    args: argparse.Namespace, config: RunConfig, mode: str
) -> PromptTemplate | None:
    if getattr(args, "template", None):
        _require_file(args.template, "template")
        return load_template(args.template)
    wanted = "attr" if mode == "attr" else "sim"
    if wanted in config.templates:
        return load_template(config.templates[wanted])
    return None


def _write_lines(path: str | None, lines: Sequence[str]) -> None:
    if path:
        Path(path).write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")


def _write_report(path: str, payload: dict) -> None:
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


# --- subcommands ---


def cmd_propose(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    if args.task_description and args.dimension:
        raise UsageError("give either --task-description or --dimension, not both")
    provider = build_provider(config)
    if args.task_description:
        items = list(propose_dimensions(args.task_description, provider).candidates)
    elif args.dimension:
        proposal = propose_values(args.dimension, args.class_name, args.count, provider)
        items = list(proposal.candidates)
    else:
        raise UsageError("one of --task-description or --dimension is required")
    for item in items:
        print(item)
    _write_lines(args.out, items)
    return 0


def cmd_curate(args: argparse.Namespace) -> int:
    data = json.loads(Path(args.candidates).read_text(encoding="utf-8"))
    if not isinstance(data, dict) or "dimension" not in data or "candidates" not in data:
        raise ValueError(
            f"{args.candidates}: expected an object with 'dimension' and 'candidates'"
        )
    candidates = CandidateList(
        dimension=data["dimension"],
        candidates=tuple(data["candidates"]),
        class_name=data.get("class"),
    )
    record = interactive_select(
        candidates, replay_path=args.replay, record_path=args.record
    )
    for value in record.accepted:
        print(value)
    _write_lines(args.out, record.accepted)
    return 0


def cmd_filter(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    schema = _load_schema_ref(args.schema or config.schema)
    class_label = schema.class_named(args.class_name)
    raw = Path(args.values).read_text(encoding="utf-8")
    values = [AttributeValue(line.strip()) for line in raw.splitlines() if line.strip()]
    if not values:
        raise ValueError(f"{args.values}: no values to filter")
    similar = [part.strip() for part in args.similar.split(",") if part.strip()]
    if not similar:
        raise ValueError("--similar lists no class names")
    provider = build_provider(config)
    kept, removed = caf_filter(
        class_label,
        values,
        similar,
        provider,
        dimension=args.dimension,
        max_in_flight=config.max_in_flight,
    )
    for value in kept:
        print(value.text)
    if removed:
        print(f"removed {len(removed)} ambiguous value(s)", file=sys.stderr)
    _write_lines(args.out, [v.text for v in kept])
    _write_lines(args.removed_out, [v.text for v in removed])
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    schema = _load_schema_ref(args.schema or config.schema)
    if args.seed is None and not getattr(args, "config", None):
        raise UsageError("the following arguments are required: --seed")
    template = _template_for(args, config, args.mode)
    similar = None
    if args.similar:
        similar = json.loads(Path(args.similar).read_text(encoding="utf-8"))
        if not isinstance(similar, dict):
            raise ValueError(f"{args.similar}: expected an object mapping class to list")
    params = GenerationParams(
        max_tokens=args.max_tokens,
        temperature=args.temperature if args.temperature is not None else 1.0,
    )
    job = GenerationJob(
        schema=schema,
        mode=args.mode,
        per_class_count=args.per_class,
        params=params,
        seed=config.seed,
        budget_cap=config.budget_cap,
        template=template,
        similar_classes=similar,
    )
    if args.dry_run:
        previews = preview_prompts(job)
        prompt_tokens = sum(count_tokens(prompt) for _, prompt in previews)
        projected = (
            prompt_tokens * config.price_per_1k_prompt_tokens
            + len(previews) * params.max_tokens * config.price_per_1k_completion_tokens
        ) / 1000.0
        for cls, prompt in previews:
            print(f"--- {cls.name}")
            print(prompt)
        print(f"requests: {len(previews)}")
        print(f"prompt tokens: {prompt_tokens}")
        print(f"projected cost (completions at max_tokens): {projected:.6f}")
        return 0
    provider = build_provider(config)
    result = generate_dataset(job, provider, max_in_flight=config.max_in_flight)
    emit_dataset(result.examples, args.out)
    print(f"wrote {len(result.examples)} examples to {args.out}")
    print(f"provenance sidecar: {provenance_path(args.out)}")
    print(f"total cost: {result.meter['total_cost']:.6f}")
    print(f"cost per 1k examples: {cost_per_1k_examples(provider.meter):.6f}")
    if result.partial:
        print("warning: dataset is partial (budget cap or failed slots)", file=sys.stderr)
    for failure in result.failures:
        print(f"warning: {failure}", file=sys.stderr)
    return 0


def _report_payload(report: DiversityReport) -> dict:
    histogram = None
    if report.histogram is not None:
        histogram = {
            "edges": list(report.histogram.edges),
            "counts": list(report.histogram.counts),
        }
    return {
        "vocab_all": report.vocab_all,
        "vocab_class_avg": report.vocab_class_avg,
        "aps_all": report.aps_all,
        "aps_intra": report.aps_intra,
        "aps_inter": report.aps_inter,
        "ingf": report.ingf,
        "histogram": histogram,
    }


def cmd_metrics(args: argparse.Namespace) -> int:
    examples = load_dataset(args.dataset)
    corpus = [ex.text for ex in examples]
    labels = [ex.label for ex in examples]
    payload = {"dataset": _report_payload(diversity_report(corpus, labels))}
    if args.against:
        reference = load_dataset(args.against)
        payload["reference"] = _report_payload(
            diversity_report(
                [ex.text for ex in reference], [ex.label for ex in reference]
            )
        )
    _write_report(args.report, payload)
    for name, body in payload.items():
        print(
            f"{name}: vocab={body['vocab_all']} "
            f"aps_intra={body['aps_intra']} ingf={body['ingf']:.4f}"
        )
    return 0


def cmd_bias(args: argparse.Namespace) -> int:
    train = load_dataset(args.train)
    pairs = []
    for index, example in enumerate(train):
        configuration = example.provenance.get("configuration")
        if not configuration:
            raise ValueError(
                f"{args.train}: example {index} has no attribute provenance; "
                "train on a dataset generated in attr mode"
            )
        entry = next(
            (
                a
                for a in configuration["assignments"]
                if a["dimension"] == args.dimension
            ),
            None,
        )
        if entry is None:
            raise ValueError(
                f"{args.train}: example {index} records no dimension "
                f"{args.dimension!r}"
            )
        pairs.append((example.text, entry["text"]))
    classifier = train_attribute_classifier(pairs, dimension=args.dimension)
    apply_to = load_dataset(args.apply)
    report = distribution_report(
        classifier,
        [ex.text for ex in apply_to],
        [ex.label for ex in apply_to],
    )
    payload = {
        "dimension": report.dimension,
        "overall": report.overall,
        "per_class": {str(label): dist for label, dist in report.per_class.items()},
    }
    _write_report(args.report, payload)
    for value in sorted(report.overall):
        print(f"{value}: {report.overall[value]:.4f}")
    return 0


def cmd_eval_metrics(args: argparse.Namespace) -> int:
    scores: list[list[float]] = []
    with Path(args.scores).open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                scores.append([float(part) for part in line.split()])
            except ValueError:
                raise ValueError(
                    f"{args.scores}:{lineno}: score lines must hold "
                    "whitespace-separated reals"
                ) from None
    truth_examples = load_dataset(args.truth)
    truth = [
        set(ex.label) if isinstance(ex.label, tuple) else {ex.label}
        for ex in truth_examples
    ]
    if len(scores) != len(truth):
        raise ValueError(
            f"score/truth size mismatch: {len(scores)} score rows, "
            f"{len(truth)} truth records"
        )
    ks = tuple(int(part) for part in args.ks.split(","))
    results = multilabel_metrics(scores, truth, ks=ks, threshold=args.threshold)
    _write_report(args.report, results)
    for name in sorted(results):
        print(f"{name} = {results[name]:.6f}")
    return 0


# --- parser ---


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file with shared settings")
    common.add_argument("--provider", choices=("mock", "chat"), default=None)
    common.add_argument("--script", help="mock provider rule script (JSON list)")
    common.add_argument("--model", default=None, help="backend model id")
    common.add_argument("--base-url", dest="base_url", default=None)
    common.add_argument("--price-prompt", dest="price_prompt", type=float, default=None,
                        help="price per 1k prompt tokens")
    common.add_argument("--price-completion", dest="price_completion", type=float,
                        default=None, help="price per 1k completion tokens")
    common.add_argument("--max-in-flight", dest="max_in_flight", type=int, default=None)

    parser = argparse.ArgumentParser(
        prog="attrgen",
        description="Attribute-conditioned training-data generation toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("propose", parents=[common],
                       help="ask the model for attribute dimensions or values")
    p.add_argument("--task-description", dest="task_description")
    p.add_argument("--dimension")
    p.add_argument("--class", dest="class_name", default=None)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_propose)

    p = sub.add_parser("curate", parents=[common],
                       help="select attribute values interactively or from a record")
    p.add_argument("--candidates", required=True,
                   help="JSON file with dimension, class, candidates")
    p.add_argument("--record", help="append decisions to this file")
    p.add_argument("--replay", help="replay decisions from this file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("filter", parents=[common],
                       help="drop values the model links to similar classes")
    p.add_argument("--schema")
    p.add_argument("--dimension", required=True)
    p.add_argument("--class", dest="class_name", required=True)
    p.add_argument("--values", required=True, help="file with one value per line")
    p.add_argument("--similar", required=True, help="comma-separated class names")
    p.add_argument("--out")
    p.add_argument("--removed-out", dest="removed_out")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("generate", parents=[common], help="generate a labeled dataset")
    p.add_argument("--schema")
    p.add_argument("--mode", required=True, choices=("sim", "attr", "meta"))
    p.add_argument("--per-class", dest="per_class", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--budget-cap", dest="budget_cap", type=float, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--max-tokens", dest="max_tokens", type=int, default=512)
    p.add_argument("--template", help="prompt template file overriding the built-in")
    p.add_argument("--similar", help="JSON file mapping class name to similar classes")
    p.add_argument("--dry-run", dest="dry_run", action="store_true",
                   help="print prompts and projected cost; no provider calls")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("metrics", parents=[common],
                       help="diversity report for a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--against", help="reference dataset to report alongside")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bias", parents=[common],
                       help="attribute-distribution probe over a dataset")
    p.add_argument("--train", required=True,
                   help="attribute-generated dataset with provenance")
    p.add_argument("--dimension", required=True)
    p.add_argument("--apply", required=True, help="dataset to probe")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_bias)

    p = sub.add_parser("eval-metrics", parents=[common],
                       help="ranking metrics for a score dump against truth labels")
    p.add_argument("--scores", required=True,
                   help="one line per example: whitespace-separated class scores")
    p.add_argument("--truth", required=True, help="dataset with reference labels")
    p.add_argument("--report", required=True)
    p.add_argument("--ks", default="1,3,5")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_eval_metrics)

    return parser


def dispatch(argv: Sequence[str]) -> int:
    """Run one command; never raises, returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        code = exc.code
        return int(code) if code is not None else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, ProviderError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

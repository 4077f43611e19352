"""End-to-end dataset generation.

The engine turns a GenerationJob into a labeled dataset: it budgets one
request per example, renders prompts for the chosen strategy, fans requests
out through a provider, normalizes the completions, and emits line-delimited
records with a provenance sidecar. All sampling flows through one seeded
generator, and finished examples are reordered to sampling order, so a seed
plus a deterministic provider pins the output byte for byte.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter, deque
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from itertools import count
from pathlib import Path
from typing import Any, NamedTuple

from .promptgen import (
    PromptTemplate,
    load_builtin_template,
    render_attr,
    render_meta,
    render_sim,
)
from .provider import (
    BudgetCapExceeded,
    GenerationParams,
    Provider,
    ProviderError,
)
from .sampler import (
    RNG_ID,
    AttributeConfiguration,
    LabelCountDistribution,
    SubtopicGroup,
    make_rng,
    sample_configuration,
    sample_label_set,
)
from .schema import AttributeSchema, AttributeValue, ClassLabel

log = logging.getLogger(__name__)


class EngineError(RuntimeError):
    """Generation or dataset-file problem outside the provider's remit."""


@dataclass(frozen=True)
class GenerationJob:
    """Everything that defines one generation run.

    ``template`` defaults to the built-in template for the schema's task.
    ``similar_classes`` supplies the dissimilarity lists some attribute
    templates interpolate, keyed by class name.
    """

    schema: AttributeSchema
    mode: str
    per_class_count: int
    params: GenerationParams
    seed: int
    budget_cap: float | None = None
    retry_empty: int = 3
    template: PromptTemplate | None = None
    similar_classes: Mapping[str, Sequence[str]] | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("sim", "attr", "meta"):
            raise ValueError(f"unknown generation mode {self.mode!r}")
        if self.per_class_count < 1:
            raise ValueError(f"per_class_count must be >= 1, got {self.per_class_count}")
        if self.budget_cap is not None and self.budget_cap < 0:
            raise ValueError(f"budget_cap must be >= 0, got {self.budget_cap}")
        if self.retry_empty < 0:
            raise ValueError(f"retry_empty must be >= 0, got {self.retry_empty}")


@dataclass(frozen=True)
class GeneratedExample:
    """One labeled text plus the full story of how it was produced."""

    label: int | tuple[int, ...]
    text: str
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if isinstance(self.label, list):
            object.__setattr__(self, "label", tuple(self.label))
        label = self.label
        if isinstance(label, tuple):
            if not label:
                raise ValueError("label set must be non-empty")
            for item in label:
                if isinstance(item, bool) or not isinstance(item, int) or item < 0:
                    raise ValueError(f"bad class id {item!r} in label set")
            if any(b <= a for a, b in zip(label, label[1:])):
                raise ValueError(f"label set must be strictly ascending, got {list(label)}")
        elif isinstance(label, bool) or not isinstance(label, int) or label < 0:
            raise ValueError(f"bad label {label!r}")
        if not isinstance(self.text, str) or not self.text.strip():
            raise ValueError("example text must be non-empty")


class GenerationResult(NamedTuple):
    """Dataset plus the accounting for the run that produced it.

    ``partial`` is set when the budget cap fired or any quota went unfilled;
    ``failures`` lists the slots given up on, one message each.
    """

    examples: list[GeneratedExample]
    meter: dict[str, float | int]
    partial: bool
    failures: tuple[str, ...]


_ENUM_MARKER = re.compile(r"^(?:[-*•]|\(?\d{1,3}[.)])(?:\s+|$)")


def postprocess(raw: str) -> str | None:
    """Normalize one completion; None means reject (empty after cleanup).

    Lines are stripped, runs of blank lines collapse to one, surrounding
    blank lines go away, and a single leading enumeration marker (a bullet
    or "1."-style prefix) is removed.
    """
    lines: list[str] = []
    for line in raw.splitlines():
        line = line.strip()
        if line == "" and (not lines or lines[-1] == ""):
            continue
        lines.append(line)
    while lines and lines[-1] == "":
        lines.pop()
    if lines:
        lines[0] = _ENUM_MARKER.sub("", lines[0], count=1).strip()
        while lines and lines[0] == "":
            lines.pop(0)
    text = "\n".join(lines)
    return text if text else None


def configuration_payload(configuration: AttributeConfiguration) -> dict[str, Any]:
    """JSON-safe form of a configuration, rich enough to re-render its prompt."""
    return {
        "class": configuration.label.name,
        "assignments": [
            {
                "dimension": name,
                "text": value.text,
                "fields": {key: val for key, val in value.fields},
            }
            for name, value in configuration.assignments
        ],
    }


def configuration_from_payload(
    payload: Mapping[str, Any], schema: AttributeSchema
) -> AttributeConfiguration:
    """Inverse of configuration_payload, resolving the class against ``schema``."""
    label = schema.class_named(payload["class"])
    assignments = tuple(
        (
            entry["dimension"],
            AttributeValue(entry["text"], tuple(entry["fields"].items())),
        )
        for entry in payload["assignments"]
    )
    return AttributeConfiguration(label=label, assignments=assignments)


def _class_name_by_id(schema: AttributeSchema, class_id: int) -> str:
    for cls in schema.classes:
        if cls.id == class_id:
            return cls.name
    raise EngineError(f"no class with id {class_id} in task {schema.task!r}")


def replay_prompt(
    example: GeneratedExample, template: PromptTemplate, schema: AttributeSchema
) -> str:
    """Re-render the prompt from recorded provenance.

    Auditing hook: for any engine-emitted example this must reproduce
    ``example.provenance["prompt"]`` exactly.
    """
    prov = example.provenance
    mode = prov.get("mode", template.mode)
    label_set = prov.get("label_set")
    if mode == "attr":
        config = configuration_from_payload(prov["configuration"], schema)
        class_text = ", ".join(label_set) if label_set else None
        return render_attr(
            template, config, similar=prov.get("similar"), class_text=class_text
        )
    if label_set:
        name = ", ".join(label_set)
    else:
        name = _class_name_by_id(schema, int(example.label))  # type: ignore[arg-type]
    base = render_sim(template, name)
    if mode == "meta":
        description = prov.get("meta_description", "")
        return f"{description}\n\n{base}" if description else base
    return base


@dataclass
class _Slot:
    """One pending example request."""

    key: str
    label: int | tuple[int, ...]
    prompt: str
    provenance: dict[str, Any]
    seed_position: int
    attempts_left: int


def _run_slots(
    slots: Sequence[_Slot],
    provider: Provider,
    params: GenerationParams,
    max_in_flight: int,
    refill: Callable[[_Slot], _Slot | None],
) -> tuple[list[GeneratedExample], list[str], bool]:
    """Drive every slot to completion, retry, refill, or failure.

    Requests go out in waves of ``max_in_flight``; retries and refills join
    the back of the queue, so the whole schedule is deterministic. Once the
    budget cap fires no further wave starts.
    """
    queue = deque(slots)
    examples: list[GeneratedExample] = []
    failures: list[str] = []
    capped = False
    while queue and not capped:
        wave = [queue.popleft() for _ in range(min(max_in_flight, len(queue)))]
        results = provider.complete_many([s.prompt for s in wave], params, max_in_flight)
        for slot, result in zip(wave, results):
            if isinstance(result, BudgetCapExceeded):
                capped = True
                continue
            if isinstance(result, Exception):
                slot.attempts_left -= 1
                if slot.attempts_left > 0:
                    queue.append(slot)
                else:
                    log.warning("slot %r failed permanently: %s", slot.key, result)
                    failures.append(f"{slot.key}: provider failure: {result}")
                continue
            text = postprocess(result.text)
            if text is None:
                slot.attempts_left -= 1
                if slot.attempts_left > 0:
                    queue.append(slot)
                    continue
                log.warning("slot %r kept coming back empty; dropping it", slot.key)
                fresh = refill(slot)
                if fresh is not None:
                    queue.append(fresh)
                else:
                    failures.append(f"{slot.key}: dropped after empty completions")
                continue
            provenance = dict(slot.provenance)
            provenance["prompt_tokens"] = result.prompt_tokens
            provenance["completion_tokens"] = result.completion_tokens
            examples.append(
                GeneratedExample(label=slot.label, text=text, provenance=provenance)
            )
            provider.meter.count_example()
    return examples, failures, capped


def _base_provenance(
    job: GenerationJob, provider: Provider, prompt: str, position: int
) -> dict[str, Any]:
    return {
        "prompt": prompt,
        "mode": job.mode,
        "configuration": None,
        "model_id": getattr(provider, "model", "mock"),
        "seed": job.seed,
        "seed_position": position,
        "rng": RNG_ID,
    }


def _resolve_template(job: GenerationJob) -> PromptTemplate:
    if job.template is not None:
        template = job.template
    else:
        wanted = "attr" if job.mode == "attr" else "sim"
        template = load_builtin_template(job.schema.task, wanted)
    expected = "attr" if job.mode == "attr" else "sim"
    if template.mode != expected:
        raise EngineError(
            f"mode {job.mode!r} needs a {expected!r} template, got {template.mode!r}"
        )
    return template


def _meta_prompt(
    base: str, provider: Provider, params: GenerationParams, retries: int
) -> str:
    """Task-description enrichment with its own retry budget.

    A provider that cannot answer the description query degrades to the plain
    prompt rather than sinking the run.
    """
    last: ProviderError | None = None
    for _ in range(1 + retries):
        try:
            return render_meta(base, provider, params)
        except BudgetCapExceeded:
            raise
        except ProviderError as exc:
            last = exc
    log.warning("task-description query failed (%s); using the plain prompt", last)
    return base


def generate_dataset(
    job: GenerationJob, provider: Provider, max_in_flight: int = 4
) -> GenerationResult:
    """Produce ``per_class_count`` examples for every class in the schema.

    Attribute mode samples a fresh configuration per example. A slot whose
    completions stay empty after the retry budget is replaced by a newly
    sampled one (bounded, so a dead provider cannot loop forever); permanent
    provider failures forfeit the slot but not the run. The budget cap stops
    new waves as soon as it fires and flags the result partial.
    """
    schema = job.schema
    template = _resolve_template(job)
    if job.budget_cap is not None:
        provider.meter.budget_cap = job.budget_cap
    rng = make_rng(job.seed)
    position = count()

    meta_prompts: dict[str, tuple[str, str]] = {}
    if job.mode == "meta":
        for cls in schema.classes:
            base = render_sim(template, cls.name)
            try:
                enriched = _meta_prompt(base, provider, job.params, job.retry_empty)
            except BudgetCapExceeded:
                return GenerationResult([], provider.meter.snapshot(), True, ())
            suffix = f"\n\n{base}"
            description = enriched[: -len(suffix)] if enriched.endswith(suffix) else ""
            meta_prompts[cls.name] = (enriched, description)

    def new_slot(cls: ClassLabel) -> _Slot:
        pos = next(position)
        if job.mode == "attr":
            config = sample_configuration(schema, cls.name, rng)
            similar: list[str] | None = None
            if job.similar_classes and cls.name in job.similar_classes:
                similar = list(job.similar_classes[cls.name])
            prompt = render_attr(template, config, similar=similar)
            provenance = _base_provenance(job, provider, prompt, pos)
            provenance["configuration"] = configuration_payload(config)
            if similar:
                provenance["similar"] = similar
        elif job.mode == "meta":
            prompt, description = meta_prompts[cls.name]
            provenance = _base_provenance(job, provider, prompt, pos)
            provenance["meta_description"] = description
        else:
            prompt = render_sim(template, cls.name)
            provenance = _base_provenance(job, provider, prompt, pos)
        return _Slot(
            key=cls.name,
            label=cls.id,
            prompt=prompt,
            provenance=provenance,
            seed_position=pos,
            attempts_left=1 + job.retry_empty,
        )

    refills = {cls.name: job.per_class_count for cls in schema.classes}

    def refill(slot: _Slot) -> _Slot | None:
        if refills[slot.key] <= 0:
            return None
        refills[slot.key] -= 1
        return new_slot(schema.class_named(slot.key))

    slots = [new_slot(cls) for cls in schema.classes for _ in range(job.per_class_count)]
    examples, failures, capped = _run_slots(
        slots, provider, job.params, max_in_flight, refill
    )
    examples.sort(key=lambda ex: ex.provenance["seed_position"])
    counts = Counter(ex.label for ex in examples)
    short = any(counts.get(cls.id, 0) != job.per_class_count for cls in schema.classes)
    return GenerationResult(
        examples, provider.meter.snapshot(), capped or short, tuple(failures)
    )


def preview_prompts(job: GenerationJob) -> list[tuple[ClassLabel, str]]:
    """The prompts generate_dataset would issue first, without any provider.

    Replays the same sampling schedule, so attr-mode previews match a real
    run with the same seed request for request. Meta mode previews the plain
    prompt; the description enrichment needs a provider.
    """
    schema = job.schema
    template = _resolve_template(job)
    rng = make_rng(job.seed)
    out: list[tuple[ClassLabel, str]] = []
    for cls in schema.classes:
        for _ in range(job.per_class_count):
            if job.mode == "attr":
                config = sample_configuration(schema, cls.name, rng)
                similar: list[str] | None = None
                if job.similar_classes and cls.name in job.similar_classes:
                    similar = list(job.similar_classes[cls.name])
                prompt = render_attr(template, config, similar=similar)
            else:
                prompt = render_sim(template, cls.name)
            out.append((cls, prompt))
    return out


def generate_multilabel_dataset(
    job: GenerationJob,
    dist: LabelCountDistribution,
    merged_subtopics: Mapping[str, SubtopicGroup],
    provider: Provider,
    max_in_flight: int = 4,
) -> GenerationResult:
    """Multi-label generation: examples carry sets of class ids.

    In sim mode each example draws a label-set size from ``dist``, then that
    many classes, and the prompt lists all of them. In attr mode each example
    draws a merged subtopic group; its label set is exactly the classes that
    share the subtopic, and the schema's single class-dependent dimension is
    pinned to the group's representative string. Total size is
    ``per_class_count`` times the number of classes.
    """
    schema = job.schema
    if job.mode == "meta":
        raise EngineError("multi-label generation supports sim and attr modes only")
    template = _resolve_template(job)
    if job.budget_cap is not None:
        provider.meter.budget_cap = job.budget_cap
    rng = make_rng(job.seed)
    position = count()
    total = job.per_class_count * len(schema.classes)

    group_keys: list[str] = []
    subtopic_dimension = ""
    if job.mode == "attr":
        if not merged_subtopics:
            raise EngineError("attr mode needs at least one merged subtopic group")
        group_keys = sorted(merged_subtopics)
        dependent = [dim for dim in schema.dimensions if dim.class_dependent]
        if len(dependent) != 1:
            raise EngineError(
                "multi-label attr generation expects exactly one class-dependent "
                f"dimension, found {len(dependent)}"
            )
        subtopic_dimension = dependent[0].name

    def new_slot(_: _Slot | None = None) -> _Slot:
        pos = next(position)
        if job.mode == "sim":
            names = sample_label_set(dist, schema.class_names(), rng)
            by_id = sorted(names, key=lambda n: schema.class_named(n).id)
            listed = ", ".join(by_id)
            prompt = render_sim(template, listed)
            provenance = _base_provenance(job, provider, prompt, pos)
            key = listed
        else:
            group_key = group_keys[int(rng.integers(len(group_keys)))]
            group = merged_subtopics[group_key]
            by_id = sorted(group.classes, key=lambda n: schema.class_named(n).id)
            assignments = []
            for dim in schema.dimensions:
                if dim.class_dependent:
                    assignments.append(
                        (subtopic_dimension, AttributeValue(group.representative))
                    )
                else:
                    choice = dim.values[int(rng.integers(len(dim.values)))]
                    assignments.append((dim.name, choice))
            config = AttributeConfiguration(
                label=schema.class_named(by_id[0]), assignments=tuple(assignments)
            )
            prompt = render_attr(template, config, class_text=", ".join(by_id))
            provenance = _base_provenance(job, provider, prompt, pos)
            provenance["configuration"] = configuration_payload(config)
            key = group_key
        provenance["label_set"] = list(by_id)
        label = tuple(schema.class_named(name).id for name in by_id)
        return _Slot(
            key=key,
            label=label,
            prompt=prompt,
            provenance=provenance,
            seed_position=pos,
            attempts_left=1 + job.retry_empty,
        )

    budget = [total]

    def refill(_: _Slot) -> _Slot | None:
        if budget[0] <= 0:
            return None
        budget[0] -= 1
        return new_slot()

    slots = [new_slot() for _ in range(total)]
    examples, failures, capped = _run_slots(
        slots, provider, job.params, max_in_flight, refill
    )
    examples.sort(key=lambda ex: ex.provenance["seed_position"])
    return GenerationResult(
        examples,
        provider.meter.snapshot(),
        capped or len(examples) < total,
        tuple(failures),
    )


def provenance_path(path: str | Path) -> Path:
    """Sidecar location for a dataset file."""
    return Path(f"{path}.provenance.json")


def emit_dataset(examples: Sequence[GeneratedExample], path: str | Path) -> Path:
    """Write one JSON record per line plus a provenance sidecar.

    Records carry exactly the fields ``label`` and ``text``; everything else
    lives in the sidecar, keyed by line number.
    """
    path = Path(path)
    lines = []
    provenance: dict[str, Any] = {}
    for index, example in enumerate(examples):
        label = list(example.label) if isinstance(example.label, tuple) else example.label
        lines.append(json.dumps({"label": label, "text": example.text}, ensure_ascii=False))
        if example.provenance:
            provenance[str(index)] = example.provenance
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    provenance_path(path).write_text(
        json.dumps(provenance, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    return path


def _parse_label(value: Any, where: str) -> int | tuple[int, ...]:
    if isinstance(value, bool):
        raise EngineError(f"{where}: label must be an integer or integer array")
    if isinstance(value, int):
        return value
    if isinstance(value, list):
        if not value or any(isinstance(v, bool) or not isinstance(v, int) for v in value):
            raise EngineError(f"{where}: label array must hold one or more integers")
        return tuple(value)
    raise EngineError(f"{where}: label must be an integer or integer array")


def load_dataset(path: str | Path) -> list[GeneratedExample]:
    """Read a dataset file back; the inverse of emit_dataset on label and text.

    Provenance is reattached from the sidecar when one sits next to the file.
    """
    path = Path(path)
    sidecar: dict[str, Any] = {}
    sidecar_path = provenance_path(path)
    if sidecar_path.exists():
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    examples: list[GeneratedExample] = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            where = f"{path}:{lineno}"
            line = line.rstrip("\n")
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EngineError(f"{where}: invalid JSON: {exc.msg}") from None
            if not isinstance(record, dict):
                raise EngineError(f"{where}: record must be a JSON object")
            if set(record) != {"label", "text"}:
                raise EngineError(
                    f"{where}: fields must be exactly 'label' and 'text', "
                    f"got {sorted(record)}"
                )
            if not isinstance(record["text"], str):
                raise EngineError(f"{where}: text must be a string")
            label = _parse_label(record["label"], where)
            try:
                example = GeneratedExample(
                    label=label,
                    text=record["text"],
                    provenance=sidecar.get(str(lineno - 1), {}),
                )
            except ValueError as exc:
                raise EngineError(f"{where}: {exc}") from None
            examples.append(example)
    return examples

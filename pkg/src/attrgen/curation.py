"""Attribute curation: proposing dimensions and values, human selection,
and class-dependent value filtering against similar classes."""

from __future__ import annotations

import logging
import re
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from .provider import GenerationParams, Provider
from .schema import AttributeValue, ClassLabel

log = logging.getLogger(__name__)

DIMENSIONS_PROMPT = (
    "Which attribute dimensions do you consider vital in determining "
    "the topic of {task}?"
)
VALUES_PROMPT = "List {count} diverse {dimension} for {class}."
VALUES_PROMPT_CLASSLESS = "List {count} diverse {dimension}."
SIMILAR_PROMPT = (
    "List {k} similar classes for {class}. "
    "The set of classes is listed as: {classes}."
)
RELEVANCE_QUESTION = (
    "Is the {dimension} '{value}' related to the topic '{similar-class}'? "
    "Answer Yes or No."
)

_DEFAULT_PARAMS = GenerationParams(max_tokens=512)


class CurationError(RuntimeError):
    """Empty parses, broken decision files, and other curation failures."""


def _fill(template: str, pairs: dict[str, str]) -> str:
    for key, value in pairs.items():
        template = template.replace("{" + key + "}", value)
    return template


def _dedupe(items: Sequence[str]) -> tuple[str, ...]:
    seen: set[str] = set()
    kept: list[str] = []
    for item in items:
        if item.lower() not in seen:
            seen.add(item.lower())
            kept.append(item)
    return tuple(kept)


@dataclass(frozen=True)
class CandidateList:
    """Ordered value candidates for one dimension (one class, if dependent)."""

    dimension: str
    candidates: tuple[str, ...]
    class_name: str | None = None
    source_prompt: str = ""

    def __post_init__(self) -> None:
        lowered = [c.lower() for c in self.candidates]
        if len(set(lowered)) != len(lowered):
            raise CurationError("candidates must be case-insensitively unique")


@dataclass(frozen=True)
class DecisionRecord:
    """Accept/reject partition of a candidate list.

    ``timestamp`` is the selection time; replayed records carry None
    because the decisions file does not store it.
    """

    dimension: str
    accepted: tuple[str, ...]
    rejected: tuple[str, ...]
    class_name: str | None = None
    timestamp: str | None = None

    def __post_init__(self) -> None:
        overlap = set(self.accepted) & set(self.rejected)
        if overlap:
            raise CurationError(f"accepted and rejected overlap: {sorted(overlap)}")


_BULLETS = "-*•"


def parse_enumerated_list(text: str) -> list[str]:
    """Items from numbered ("1.", "2)"), bulleted, or one-per-line text.

    Leading markers are stripped repeatedly, so "1. - x" yields "x".
    Empty items are dropped.
    """
    items: list[str] = []
    for raw in text.split("\n"):
        line = raw.strip()
        while line:
            if line[0] in _BULLETS:
                line = line[1:].lstrip()
                continue
            match = re.match(r"\d+[.)]", line)
            if match:
                line = line[match.end() :].lstrip()
                continue
            break
        if line:
            items.append(line)
    return items


def _comma_split_single(items: list[str]) -> list[str]:
    # "subtopics, length, location, ..." arrives as one line
    if len(items) == 1 and "," in items[0]:
        return [part.strip() for part in items[0].split(",") if part.strip()]
    return items


def propose_dimensions(
    task_description: str,
    provider: Provider,
    prompt: str = DIMENSIONS_PROMPT,
    params: GenerationParams = _DEFAULT_PARAMS,
) -> CandidateList:
    """Ask the provider for attribute dimension names and parse its answer.

    Prose answers like "Writing Style: use varied styles..." keep only the
    part before the colon.
    """
    if not task_description.strip():
        raise CurationError("task description must be non-empty")
    question = _fill(prompt, {"task": task_description})
    answer = provider.complete(question, params).text
    items = parse_enumerated_list(answer)
    items = [item.partition(":")[0].strip() or item for item in items]
    items = _comma_split_single(items)
    candidates = _dedupe([i for i in items if i])
    if not candidates:
        raise CurationError(f"no dimension candidates parsed from: {answer!r}")
    return CandidateList(
        dimension="dimension", candidates=candidates, source_prompt=question
    )


def propose_values(
    dimension: str,
    class_name: str | None,
    count: int,
    provider: Provider,
    prompt: str | None = None,
    params: GenerationParams = _DEFAULT_PARAMS,
) -> CandidateList:
    """Ask for up to ``count`` values of a dimension, in response order."""
    if count < 1:
        raise CurationError(f"count must be >= 1, got {count}")
    if prompt is None:
        prompt = VALUES_PROMPT if class_name is not None else VALUES_PROMPT_CLASSLESS
    question = _fill(
        prompt,
        {"count": str(count), "dimension": dimension, "class": class_name or ""},
    )
    answer = provider.complete(question, params).text
    candidates = _dedupe(parse_enumerated_list(answer))[:count]
    if not candidates:
        raise CurationError(f"no value candidates parsed from: {answer!r}")
    return CandidateList(
        dimension=dimension,
        candidates=candidates,
        class_name=class_name,
        source_prompt=question,
    )


def similar_classes(
    class_label: ClassLabel,
    all_classes: Sequence[str],
    k: int,
    provider: Provider,
    prompt: str = SIMILAR_PROMPT,
    params: GenerationParams = _DEFAULT_PARAMS,
) -> list[str]:
    """Up to ``k`` roster class names the provider calls similar.

    Names outside the roster are discarded with a warning; the class
    itself is never returned.
    """
    if k < 1:
        raise CurationError(f"k must be >= 1, got {k}")
    roster = {name.lower(): name for name in all_classes}
    if class_label.name.lower() not in roster:
        raise CurationError(f"class {class_label.name!r} is not in the roster")
    question = _fill(
        prompt,
        {"k": str(k), "class": class_label.name, "classes": ", ".join(all_classes)},
    )
    answer = provider.complete(question, params).text
    items = _comma_split_single(parse_enumerated_list(answer))
    kept: list[str] = []
    for item in items:
        canonical = roster.get(item.lower())
        if canonical is None:
            log.warning("similar-class answer %r is not a known class", item)
        elif canonical.lower() != class_label.name.lower() and canonical not in kept:
            kept.append(canonical)
    return kept[:k]


def _parse_yes_no(text: str) -> bool | None:
    match = re.search(r"[A-Za-z]+", text)
    if match:
        token = match.group(0).lower()
        if token == "yes":
            return True
        if token == "no":
            return False
    return None


def caf_filter(
    class_label: ClassLabel,
    values: Sequence[AttributeValue],
    similar: Sequence[str],
    provider: Provider,
    dimension: str = "attribute value",
    question: str = RELEVANCE_QUESTION,
    params: GenerationParams | None = None,
    max_in_flight: int = 4,
) -> tuple[list[AttributeValue], list[AttributeValue]]:
    """Split ``values`` into (kept, removed) by relevance to similar classes.

    A value is removed when the provider answers yes for any similar
    class. A failed query keeps the value (fail-open) with a warning,
    unless another answer for the same value already said yes.
    """
    values = list(values)
    if not similar:
        return values, []
    if params is None:
        params = GenerationParams(max_tokens=8)
    prompts = [
        _fill(
            question,
            {
                "dimension": dimension,
                "value": value.text,
                "similar-class": similar_name,
            },
        )
        for value in values
        for similar_name in similar
    ]
    answers = provider.complete_many(prompts, params, max_in_flight)

    kept: list[AttributeValue] = []
    removed: list[AttributeValue] = []
    per_value = len(similar)
    for index, value in enumerate(values):
        slice_ = answers[index * per_value : (index + 1) * per_value]
        positive = False
        failed = False
        for answer in slice_:
            if isinstance(answer, Exception):
                failed = True
                continue
            verdict = _parse_yes_no(answer.text)
            if verdict is True:
                positive = True
                break
            if verdict is None:
                log.warning(
                    "unparseable relevance answer %r for value %r; treating as no",
                    answer.text,
                    value.text,
                )
        if positive:
            removed.append(value)
        else:
            if failed:
                log.warning(
                    "relevance check failed for value %r (class %s); keeping it",
                    value.text,
                    class_label.name,
                )
            kept.append(value)
    return kept, removed


# --- decisions file ---


def _escape(value: str) -> str:
    return value.replace("\\", "\\\\").replace(";", "\\;")


def _unescape(value: str) -> str:
    out: list[str] = []
    index = 0
    while index < len(value):
        if value[index] == "\\" and index + 1 < len(value):
            out.append(value[index + 1])
            index += 2
        else:
            out.append(value[index])
            index += 1
    return "".join(out)


def _unescape_split(joined: str) -> list[str]:
    items: list[str] = []
    current: list[str] = []
    index = 0
    while index < len(joined):
        char = joined[index]
        if char == "\\" and index + 1 < len(joined):
            current.append(joined[index + 1])
            index += 2
        elif char == ";":
            items.append("".join(current))
            current = []
            index += 1
        else:
            current.append(char)
            index += 1
    if current:
        items.append("".join(current))
    return [item for item in items if item]


def format_decision_line(record: DecisionRecord) -> str:
    return (
        f"dimension={_escape(record.dimension)}"
        f" class={_escape(record.class_name) if record.class_name else '-'}"
        f" accept={';'.join(_escape(v) for v in record.accepted)}"
        f" reject={';'.join(_escape(v) for v in record.rejected)}"
    )


def parse_decision_line(line: str, lineno: int = 0) -> DecisionRecord:
    where = f"decisions line {lineno}" if lineno else "decisions line"
    if not line.startswith("dimension="):
        raise CurationError(f"{where}: expected 'dimension=...'")
    body = line[len("dimension=") :]
    dimension, sep, rest = body.partition(" class=")
    if not sep:
        raise CurationError(f"{where}: missing ' class=' field")
    cls, sep, rest = rest.partition(" accept=")
    if not sep:
        raise CurationError(f"{where}: missing ' accept=' field")
    accepted, sep, rejected = rest.partition(" reject=")
    if not sep:
        raise CurationError(f"{where}: missing ' reject=' field")
    return DecisionRecord(
        dimension=_unescape(dimension),
        class_name=None if cls == "-" else _unescape(cls),
        accepted=tuple(_unescape_split(accepted)),
        rejected=tuple(_unescape_split(rejected)),
    )


def read_decisions(path: str | Path) -> list[DecisionRecord]:
    records = []
    for lineno, raw in enumerate(
        Path(path).read_text(encoding="utf-8").split("\n"), start=1
    ):
        if raw.strip():
            records.append(parse_decision_line(raw.strip(), lineno))
    return records


def append_decision(path: str | Path, record: DecisionRecord) -> None:
    with open(path, "a", encoding="utf-8") as handle:
        handle.write(format_decision_line(record) + "\n")


def _replay(candidates: CandidateList, replay_path: str | Path) -> DecisionRecord:
    match: DecisionRecord | None = None
    for record in read_decisions(replay_path):
        if (
            record.dimension == candidates.dimension
            and record.class_name == candidates.class_name
        ):
            match = record  # last record for the pair wins
    if match is None:
        raise CurationError(
            f"{replay_path}: no decision record for dimension="
            f"{candidates.dimension!r} class={candidates.class_name!r}"
        )
    known = set(candidates.candidates)
    unknown = [v for v in (*match.accepted, *match.rejected) if v not in known]
    if unknown:
        raise CurationError(
            f"{replay_path}: decision references unknown candidates: {unknown}"
        )
    mentioned = set(match.accepted) | set(match.rejected)
    missing = [c for c in candidates.candidates if c not in mentioned]
    if missing:
        log.warning("decisions omit %d candidate(s); rejecting them", len(missing))
    return DecisionRecord(
        dimension=candidates.dimension,
        class_name=candidates.class_name,
        accepted=tuple(c for c in candidates.candidates if c in set(match.accepted)),
        rejected=tuple(c for c in candidates.candidates if c not in set(match.accepted)),
        timestamp=None,
    )


def interactive_select(
    candidates: CandidateList,
    replay_path: str | Path | None = None,
    record_path: str | Path | None = None,
) -> DecisionRecord:
    """Partition candidates into accepted and rejected.

    With ``replay_path`` the partition is read back from a decisions
    file. Otherwise each candidate is offered on the terminal (y/yes
    accepts) and, if ``record_path`` is set, the result is appended
    there for later replay.
    """
    if replay_path is not None:
        return _replay(candidates, replay_path)
    if not sys.stdin.isatty():
        raise CurationError("no terminal for selection; supply a replay file")

    accepted: list[str] = []
    rejected: list[str] = []
    target = candidates.class_name or "(all classes)"
    print(f"Selecting {candidates.dimension} values for {target}:")
    for candidate in candidates.candidates:
        answer = input(f"  keep {candidate!r}? [y/n] ").strip().lower()
        (accepted if answer in ("y", "yes") else rejected).append(candidate)
    record = DecisionRecord(
        dimension=candidates.dimension,
        class_name=candidates.class_name,
        accepted=tuple(accepted),
        rejected=tuple(rejected),
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    if record_path is not None:
        append_decision(record_path, record)
    return record

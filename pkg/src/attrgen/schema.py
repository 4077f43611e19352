"""Attribute schemas: the classes of a labeling task plus the attribute
dimensions (and their value lists) that prompts get conditioned on.

A dimension is either shared by every class ("independent") or carries a
separate value list per class ("dependent"). The plain-text file format is
line oriented:

    [task] name=nyt persona=Suppose you are a news writer.
    [class] id=0 name=economy
    [dimension] name=Location kind=independent
    value: Asia
    [dimension] name=Subtopic kind=dependent
    class: economy
    value: Housing market and real estate
    value: short (30-80 words) | min-words=30 max-words=80

Header attributes are ``key=value`` pairs; a value runs until the next known
key for that header, so it may contain spaces (but not a literal ``" key="``
for a key of the same header). ``value:`` lines may carry machine-readable
fields after a ``|`` separator, as single tokens ``name=value``. Blank lines
and ``#`` comments are ignored.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path


class SchemaError(ValueError):
    """Malformed schema file or inconsistent in-memory schema."""


@dataclass(frozen=True)
class ClassLabel:
    """One target class: a non-negative integer id and a unique name."""

    id: int
    name: str


@dataclass(frozen=True)
class AttributeValue:
    """A value a dimension can take.

    ``text`` is the human-readable form substituted into prompts.  ``fields``
    holds optional machine-readable parts, e.g. ``{"min-words": "30"}`` for a
    length bucket.
    """

    text: str
    fields: tuple[tuple[str, str], ...] = ()

    def field(self, name: str) -> str:
        for key, val in self.fields:
            if key == name:
                return val
        raise KeyError(name)

    def has_field(self, name: str) -> bool:
        return any(key == name for key, _ in self.fields)


@dataclass
class AttributeDimension:
    """A named attribute axis, class-independent or class-dependent."""

    name: str
    class_dependent: bool
    values: list[AttributeValue] = field(default_factory=list)
    per_class: dict[str, list[AttributeValue]] = field(default_factory=dict)

    def values_for(self, class_name: str) -> list[AttributeValue]:
        """Value list applicable to ``class_name``."""
        if not self.class_dependent:
            return self.values
        try:
            return self.per_class[class_name]
        except KeyError:
            raise SchemaError(
                f"dimension {self.name!r} has no values for class {class_name!r}"
            ) from None


@dataclass
class AttributeSchema:
    """A task: its persona line, class roster, and attribute dimensions."""

    task: str
    persona: str
    classes: list[ClassLabel]
    dimensions: list[AttributeDimension]

    def class_named(self, name: str) -> ClassLabel:
        for cls in self.classes:
            if cls.name == name:
                return cls
        raise SchemaError(f"unknown class {name!r} in task {self.task!r}")

    def class_names(self) -> list[str]:
        return [cls.name for cls in self.classes]

    def dimension(self, name: str) -> AttributeDimension:
        for dim in self.dimensions:
            if dim.name == name:
                return dim
        raise SchemaError(f"unknown dimension {name!r} in task {self.task!r}")


def validate(schema: AttributeSchema) -> None:
    """Check structural invariants, raising SchemaError on the first breach.

    Class ids must be unique and contiguous from zero, names unique and
    non-empty, dimension names unique, every applicable value list non-empty,
    and every class-dependent dimension must cover exactly the class roster.
    """
    if not schema.classes:
        raise SchemaError("schema has no classes")
    ids = sorted(cls.id for cls in schema.classes)
    if ids != list(range(len(schema.classes))):
        raise SchemaError(f"class ids must be contiguous from 0, got {ids}")
    names = [cls.name for cls in schema.classes]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate class names")
    if any(not name.strip() for name in names):
        raise SchemaError("empty class name")

    dim_names = [dim.name for dim in schema.dimensions]
    if len(set(dim_names)) != len(dim_names):
        raise SchemaError("duplicate dimension names")

    roster = set(names)
    for dim in schema.dimensions:
        if dim.class_dependent:
            covered = set(dim.per_class)
            if covered != roster:
                missing = sorted(roster - covered)
                extra = sorted(covered - roster)
                raise SchemaError(
                    f"dimension {dim.name!r} class coverage mismatch: "
                    f"missing={missing} extra={extra}"
                )
            for cls_name, values in dim.per_class.items():
                if not values:
                    raise SchemaError(
                        f"dimension {dim.name!r} has an empty value list "
                        f"for class {cls_name!r}"
                    )
        else:
            if not dim.values:
                raise SchemaError(f"dimension {dim.name!r} has an empty value list")


def count_configurations(schema: AttributeSchema, class_name: str) -> int:
    """Number of distinct attribute configurations for one class.

    The product of the applicable value-list lengths over all dimensions;
    exact integer arithmetic, never an estimate.
    """
    schema.class_named(class_name)
    total = 1
    for dim in schema.dimensions:
        total *= len(dim.values_for(class_name))
    return total


_HEADER_KEYS = {
    "task": ("name", "persona"),
    "class": ("id", "name"),
    "dimension": ("name", "kind"),
}


def _parse_attrs(kind: str, rest: str, lineno: int) -> dict[str, str]:
    """Split ``key=value`` pairs where values may contain spaces.

    Each value extends to the start of the next known key for this header
    kind, so key order in the file does not matter.
    """
    known = _HEADER_KEYS[kind]
    pattern = re.compile(r"(?:^|\s)(" + "|".join(known) + r")=")
    hits = list(pattern.finditer(rest))
    if not hits:
        raise SchemaError(f"line {lineno}: [{kind}] header has no attributes")
    attrs: dict[str, str] = {}
    for i, hit in enumerate(hits):
        key = hit.group(1)
        end = hits[i + 1].start() if i + 1 < len(hits) else len(rest)
        if key in attrs:
            raise SchemaError(f"line {lineno}: duplicate attribute {key!r}")
        attrs[key] = rest[hit.end():end].strip()
    for key in known:
        if key not in attrs:
            raise SchemaError(f"line {lineno}: [{kind}] header missing {key!r}")
    return attrs


def _parse_value_line(rest: str, lineno: int) -> AttributeValue:
    text = rest
    fields: tuple[tuple[str, str], ...] = ()
    if " | " in rest:
        text, _, tail = rest.partition(" | ")
        pairs = []
        for token in tail.split():
            if "=" not in token:
                raise SchemaError(
                    f"line {lineno}: malformed field token {token!r} (want name=value)"
                )
            name, _, val = token.partition("=")
            pairs.append((name, val))
        fields = tuple(pairs)
    text = text.strip()
    if not text:
        raise SchemaError(f"line {lineno}: empty value text")
    return AttributeValue(text=text, fields=fields)


def parse_schema(text: str, source: str = "<string>") -> AttributeSchema:
    """Parse the plain-text schema format; errors carry line numbers."""
    task_name: str | None = None
    persona = ""
    classes: list[ClassLabel] = []
    dimensions: list[AttributeDimension] = []
    current_dim: AttributeDimension | None = None
    current_class: str | None = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        header = re.match(r"\[(\w+)\]\s*(.*)", line)
        if header:
            kind, rest = header.group(1), header.group(2)
            if kind not in _HEADER_KEYS:
                raise SchemaError(f"{source}:{lineno}: unknown header [{kind}]")
            attrs = _parse_attrs(kind, rest, lineno)
            if kind == "task":
                if task_name is not None:
                    raise SchemaError(f"{source}:{lineno}: duplicate [task] header")
                task_name = attrs["name"]
                persona = attrs["persona"]
            elif kind == "class":
                try:
                    class_id = int(attrs["id"])
                except ValueError:
                    raise SchemaError(
                        f"{source}:{lineno}: class id {attrs['id']!r} is not an integer"
                    ) from None
                classes.append(ClassLabel(id=class_id, name=attrs["name"]))
            else:
                if attrs["kind"] not in ("independent", "dependent"):
                    raise SchemaError(
                        f"{source}:{lineno}: dimension kind must be "
                        f"independent or dependent, got {attrs['kind']!r}"
                    )
                current_dim = AttributeDimension(
                    name=attrs["name"],
                    class_dependent=attrs["kind"] == "dependent",
                )
                current_class = None
                dimensions.append(current_dim)
            continue

        if line.startswith("class:"):
            if current_dim is None or not current_dim.class_dependent:
                raise SchemaError(
                    f"{source}:{lineno}: 'class:' outside a dependent dimension"
                )
            current_class = line[len("class:"):].strip()
            if not current_class:
                raise SchemaError(f"{source}:{lineno}: empty class sub-header")
            if current_class in current_dim.per_class:
                raise SchemaError(
                    f"{source}:{lineno}: duplicate class sub-header {current_class!r}"
                )
            current_dim.per_class[current_class] = []
            continue

        if line.startswith("value:"):
            if current_dim is None:
                raise SchemaError(f"{source}:{lineno}: 'value:' before any dimension")
            value = _parse_value_line(line[len("value:"):].strip(), lineno)
            if current_dim.class_dependent:
                if current_class is None:
                    raise SchemaError(
                        f"{source}:{lineno}: 'value:' in dependent dimension "
                        f"{current_dim.name!r} before any 'class:' sub-header"
                    )
                current_dim.per_class[current_class].append(value)
            else:
                current_dim.values.append(value)
            continue

        raise SchemaError(f"{source}:{lineno}: unrecognized line {line!r}")

    if task_name is None:
        raise SchemaError(f"{source}: missing [task] header")
    schema = AttributeSchema(
        task=task_name, persona=persona, classes=classes, dimensions=dimensions
    )
    validate(schema)
    return schema


def load_schema(path: str | Path) -> AttributeSchema:
    """Read and validate a schema file."""
    path = Path(path)
    return parse_schema(path.read_text(encoding="utf-8"), source=str(path))


def format_schema(schema: AttributeSchema) -> str:
    """Serialize back to the file format; load(format(s)) == s."""
    validate(schema)
    lines = [f"[task] name={schema.task} persona={schema.persona}"]
    for cls in schema.classes:
        lines.append(f"[class] id={cls.id} name={cls.name}")
    for dim in schema.dimensions:
        kind = "dependent" if dim.class_dependent else "independent"
        lines.append(f"[dimension] name={dim.name} kind={kind}")
        if dim.class_dependent:
            for cls in schema.classes:
                lines.append(f"class: {cls.name}")
                for value in dim.per_class[cls.name]:
                    lines.append(_format_value(value))
        else:
            for value in dim.values:
                lines.append(_format_value(value))
    return "\n".join(lines) + "\n"


def _format_value(value: AttributeValue) -> str:
    if value.fields:
        tail = " ".join(f"{k}={v}" for k, v in value.fields)
        return f"value: {value.text} | {tail}"
    return f"value: {value.text}"


def save_schema(schema: AttributeSchema, path: str | Path) -> None:
    Path(path).write_text(format_schema(schema), encoding="utf-8")


def builtin_schema_path(task: str) -> Path:
    """Path of a schema shipped with the package (nyt, amazon, reddit, ...)."""
    path = Path(__file__).parent / "data" / "schemas" / f"{task}.txt"
    if not path.exists():
        raise SchemaError(f"no built-in schema named {task!r}")
    return path


def load_builtin_schema(task: str) -> AttributeSchema:
    return load_schema(builtin_schema_path(task))

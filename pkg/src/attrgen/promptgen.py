"""Prompt rendering for the sim, attr, and meta generation modes."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

from .provider import GenerationParams, Provider
from .sampler import AttributeConfiguration

log = logging.getLogger(__name__)

MODES = ("sim", "attr", "meta")
META_QUESTION = "What does this task ask us to do?"

# {token} or {token:field}; tokens and fields use word characters and hyphens
_PLACEHOLDER = re.compile(r"\{([A-Za-z0-9_-]+)(?::([A-Za-z0-9_-]+))?\}")
_CLASS_TARGET = "class"
_SIMILAR_TARGETS = frozenset({"similar-classes", "similar-class"})


class TemplateError(ValueError):
    """Malformed template text or an unresolvable placeholder."""


def _check_braces(body: str, source: str) -> None:
    leftovers = _PLACEHOLDER.sub("", body)
    if "{" in leftovers or "}" in leftovers:
        raise TemplateError(f"{source}: unbalanced or malformed braces in body")


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt body with placeholders, plus how to resolve them.

    `aliases` maps placeholder tokens to either the reserved target
    "class", a similar-class target, or a dimension name.  A non-empty
    `persona` is prefixed to every rendering; the shipped templates
    embed their persona in the body instead.
    """

    mode: str
    body: str
    aliases: tuple[tuple[str, str], ...] = ()
    persona: str = ""
    source: str = "<template>"

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise TemplateError(f"{self.source}: unknown mode {self.mode!r}")
        _check_braces(self.body, self.source)

    def resolve_alias(self, token: str) -> str:
        for name, target in self.aliases:
            if name == token:
                return target
        return token

    def placeholders(self) -> list[tuple[str, str | None]]:
        """(token, field) occurrences in body order."""
        return [(m.group(1), m.group(2)) for m in _PLACEHOLDER.finditer(self.body)]


def parse_template(text: str, source: str = "<template>") -> PromptTemplate:
    lines = text.split("\n")
    try:
        split_at = lines.index("---")
    except ValueError:
        raise TemplateError(f"{source}: missing '---' separator") from None

    mode: str | None = None
    persona = ""
    aliases: list[tuple[str, str]] = []
    for number, raw in enumerate(lines[:split_at], start=1):
        line = raw.strip()
        if not line:
            continue
        key, colon, value = line.partition(":")
        key, value = key.strip(), value.strip()
        if not colon or not value:
            raise TemplateError(f"{source}:{number}: expected 'key: value'")
        if key == "mode":
            mode = value
        elif key == "persona":
            persona = value
        elif key == "alias":
            token, eq, target = value.partition("=")
            token, target = token.strip(), target.strip()
            if not eq or not token or not target:
                raise TemplateError(
                    f"{source}:{number}: alias needs 'token = target'"
                )
            aliases.append((token, target))
        else:
            raise TemplateError(f"{source}:{number}: unknown header key {key!r}")
    if mode is None:
        raise TemplateError(f"{source}: missing 'mode:' header")

    body = "\n".join(lines[split_at + 1 :])
    if body.endswith("\n"):
        body = body[:-1]
    return PromptTemplate(
        mode=mode, body=body, aliases=tuple(aliases), persona=persona, source=source
    )


def load_template(path: str | Path) -> PromptTemplate:
    path = Path(path)
    return parse_template(path.read_text(encoding="utf-8"), source=str(path))


def builtin_template_path(task: str, mode: str) -> Path:
    path = Path(__file__).parent / "data" / "templates" / f"{task}_{mode}.txt"
    if not path.exists():
        raise TemplateError(f"no built-in {mode!r} template for task {task!r}")
    return path


def load_builtin_template(task: str, mode: str) -> PromptTemplate:
    return load_template(builtin_template_path(task, mode))


def _normalize_token(token: str) -> str:
    return token.lower().replace("-", " ").replace("_", " ")


def _finish(template: PromptTemplate, text: str) -> str:
    if template.persona:
        return f"{template.persona} {text}"
    return text


def render_sim(template: PromptTemplate, class_name: str) -> str:
    """Substitute the class name; any other placeholder is an error."""
    if template.mode != "sim":
        raise TemplateError(f"render_sim needs a sim template, got {template.mode!r}")

    def resolve(match: re.Match[str]) -> str:
        token = match.group(1)
        if template.resolve_alias(token).lower() == _CLASS_TARGET:
            return class_name
        raise TemplateError(f"{template.source}: unresolved placeholder {token!r}")

    return _finish(template, _PLACEHOLDER.sub(resolve, template.body))


def render_attr(
    template: PromptTemplate,
    configuration: AttributeConfiguration,
    similar: list[str] | None = None,
    class_text: str | None = None,
) -> str:
    """Substitute every placeholder from the configuration's assignments.

    ``class_text`` overrides what the class placeholder expands to; multi-label
    prompts use it to list every class the example should carry.
    """
    if template.mode != "attr":
        raise TemplateError(f"render_attr needs an attr template, got {template.mode!r}")

    def resolve(match: re.Match[str]) -> str:
        token, field = match.group(1), match.group(2)
        target = template.resolve_alias(token)
        if target.lower() == _CLASS_TARGET:
            return class_text if class_text is not None else configuration.label.name
        if target.lower() in _SIMILAR_TARGETS:
            if not similar:
                raise TemplateError(
                    f"{template.source}: placeholder {token!r} needs a "
                    "similar-class list"
                )
            return ", ".join(similar)
        wanted = _normalize_token(target)
        for name, value in configuration.assignments:
            if name == target or name.lower() == wanted:
                if field is None:
                    return value.text
                try:
                    return value.field(field)
                except KeyError:
                    raise TemplateError(
                        f"{template.source}: placeholder {token!r}: dimension "
                        f"{name!r} value has no field {field!r}"
                    ) from None
        raise TemplateError(
            f"{template.source}: unresolved placeholder {token!r}: configuration "
            f"has no dimension matching {target!r}"
        )

    return _finish(template, _PLACEHOLDER.sub(resolve, template.body))


def render_meta(
    base_prompt: str,
    provider: Provider,
    params: GenerationParams | None = None,
) -> str:
    """Ask the provider what the base prompt's task is; prepend its answer.

    An empty answer degrades to the base prompt alone.
    """
    if not base_prompt.strip():
        raise ValueError("base prompt must be non-empty")
    if params is None:
        params = GenerationParams(max_tokens=256)
    result = provider.complete(f"{base_prompt}. {META_QUESTION}", params)
    description = result.text.strip()
    if not description:
        log.warning("empty task description from provider; using base prompt alone")
        return base_prompt
    return f"{description}\n\n{base_prompt}"

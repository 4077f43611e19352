"""Text-generation backends with retries, bounded fan-out, and cost metering.

Two implementations share the Provider base: ChatCompletionProvider speaks an
OpenAI-style chat-completions HTTP API; MockProvider replays an ordered rule
script so the whole pipeline can run offline and deterministically. Every
completed request updates a CostMeter, which can carry an armed spending cap.
"""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import requests

log = logging.getLogger(__name__)


class ProviderError(Exception):
    """Backend failure that is not worth retrying."""


class TransientError(ProviderError):
    """Retryable failure: timeout, rate limit, connection trouble, 5xx."""


class AuthenticationError(ProviderError):
    """Missing or rejected credential."""


class BudgetCapExceeded(RuntimeError):
    """Armed spending cap crossed. Raised after the meter was updated, so the
    overshooting request is already accounted for."""


def count_tokens(text: str) -> int:
    """Whitespace token count; the mock's stand-in for real tokenizer usage."""
    return len(text.split())


@dataclass(frozen=True)
class GenerationParams:
    """Sampling settings passed through to the backend."""

    max_tokens: int
    temperature: float = 1.0
    top_p: float = 1.0

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be positive, got {self.max_tokens}")
        if self.temperature < 0:
            raise ValueError(f"temperature must be non-negative, got {self.temperature}")
        if not 0 < self.top_p <= 1:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    prompt_tokens: int
    completion_tokens: int

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")


@dataclass
class CostMeter:
    """Accumulates token usage and prices it; counters never decrease.

    Prices are per 1000 tokens. When ``budget_cap`` is set, ``add_usage``
    raises BudgetCapExceeded once the running total crosses it (the update
    itself is kept: the caller already paid for the request).
    """

    price_per_1k_prompt_tokens: float = 0.0
    price_per_1k_completion_tokens: float = 0.0
    accumulated_prompt_tokens: int = 0
    accumulated_completion_tokens: int = 0
    examples_emitted: int = 0
    budget_cap: float | None = None
    _lock: threading.Lock = field(
        default_factory=threading.Lock, repr=False, compare=False
    )

    def add_usage(self, prompt_tokens: int, completion_tokens: int) -> None:
        if prompt_tokens < 0 or completion_tokens < 0:
            raise ValueError("token counts must be non-negative")
        with self._lock:
            self.accumulated_prompt_tokens += prompt_tokens
            self.accumulated_completion_tokens += completion_tokens
            total = self._total_locked()
        if self.budget_cap is not None and total > self.budget_cap:
            raise BudgetCapExceeded(
                f"spent {total:.6f} against cap {self.budget_cap:.6f}"
            )

    def count_example(self, n: int = 1) -> None:
        with self._lock:
            self.examples_emitted += n

    @property
    def total_cost(self) -> float:
        with self._lock:
            return self._total_locked()

    def _total_locked(self) -> float:
        return (
            self.accumulated_prompt_tokens * self.price_per_1k_prompt_tokens
            + self.accumulated_completion_tokens * self.price_per_1k_completion_tokens
        ) / 1000.0

    def snapshot(self) -> dict[str, float | int]:
        """Plain-dict view for logs and provenance headers."""
        with self._lock:
            return {
                "prompt_tokens": self.accumulated_prompt_tokens,
                "completion_tokens": self.accumulated_completion_tokens,
                "examples_emitted": self.examples_emitted,
                "total_cost": self._total_locked(),
            }


def cost_per_1k_examples(meter: CostMeter) -> float:
    """Average spend per thousand emitted examples; 0.0 before any emission."""
    if meter.examples_emitted == 0:
        return 0.0
    return meter.total_cost * 1000.0 / meter.examples_emitted


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff over transient failures only."""

    attempts: int = 3
    base_delay: float = 1.0
    jitter: float = 0.2

    def delay(self, attempt: int, rng: random.Random) -> float:
        """Pause before retry ``attempt`` (0-based), with symmetric jitter."""
        spread = rng.uniform(-self.jitter, self.jitter)
        return self.base_delay * (2**attempt) * (1.0 + spread)


class Provider:
    """Shared retry, metering, and fan-out behavior for all backends.

    Subclasses implement ``_complete_once``. ``sleeper`` and ``jitter_rng``
    exist so tests can observe backoff without waiting for it.
    """

    def __init__(
        self,
        meter: CostMeter | None = None,
        retry: RetryPolicy | None = None,
        sleeper: Callable[[float], None] = time.sleep,
        jitter_rng: random.Random | None = None,
    ) -> None:
        self.meter = meter if meter is not None else CostMeter()
        self.retry = retry if retry is not None else RetryPolicy()
        self._sleep = sleeper
        self._jitter_rng = jitter_rng if jitter_rng is not None else random.Random()
        self._jitter_lock = threading.Lock()

    def _complete_once(self, prompt: str, params: GenerationParams) -> CompletionResult:
        raise NotImplementedError

    def complete(self, prompt: str, params: GenerationParams) -> CompletionResult:
        """One completion, retried over transient failures, metered on success."""
        if not prompt:
            raise ValueError("empty prompt")
        attempt = 0
        while True:
            try:
                result = self._complete_once(prompt, params)
            except TransientError as exc:
                attempt += 1
                if attempt >= self.retry.attempts:
                    raise
                with self._jitter_lock:
                    pause = self.retry.delay(attempt - 1, self._jitter_rng)
                log.warning(
                    "transient backend error (%s); retrying in %.1fs", exc, pause
                )
                self._sleep(pause)
                continue
            self.meter.add_usage(result.prompt_tokens, result.completion_tokens)
            return result

    def complete_many(
        self,
        prompts: Sequence[str],
        params: GenerationParams,
        max_in_flight: int,
    ) -> list[CompletionResult | Exception]:
        """Completions aligned index-for-index with ``prompts``.

        At most ``max_in_flight`` requests are outstanding at once. A failing
        item leaves its exception in its slot; siblings are unaffected.
        """
        if max_in_flight < 1:
            raise ValueError(f"max_in_flight must be >= 1, got {max_in_flight}")
        results: list[CompletionResult | Exception] = [
            ProviderError("request never ran")
        ] * len(prompts)
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            futures = {
                pool.submit(self.complete, prompt, params): i
                for i, prompt in enumerate(prompts)
            }
            for future in as_completed(futures):
                i = futures[future]
                try:
                    results[i] = future.result()
                except Exception as exc:
                    results[i] = exc
        return results


@dataclass(frozen=True)
class MockRule:
    """One scripted behavior; prompts matching ``match`` get this outcome.

    ``anchored`` matches at the start of the prompt instead of anywhere.
    ``error`` ("transient" or "permanent") makes the rule raise instead of
    respond; with ``times`` set it raises only for its first ``times`` hits
    and then falls through to ``response``.
    """

    match: str
    response: str = ""
    anchored: bool = False
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    error: str | None = None
    times: int | None = None

    def __post_init__(self) -> None:
        if self.error not in (None, "transient", "permanent"):
            raise ValueError(f"error must be 'transient' or 'permanent', got {self.error!r}")
        if self.times is not None and self.error is None:
            raise ValueError("'times' only makes sense together with 'error'")

    def matches(self, prompt: str) -> bool:
        return prompt.startswith(self.match) if self.anchored else self.match in prompt


_SCRIPT_KEYS = frozenset(
    ("match", "response", "anchored", "prompt_tokens", "completion_tokens", "error", "times")
)


class MockProvider(Provider):
    """Deterministic scripted backend: first matching rule wins.

    With no matching rule the provider answers ``default_response`` if set and
    errors otherwise. Token counts default to whitespace counts of the prompt
    and response. All calls are recorded in ``prompts_seen``.
    """

    def __init__(
        self,
        rules: Iterable[MockRule] = (),
        default_response: str | None = None,
        **kwargs,
    ) -> None:
        super().__init__(**kwargs)
        self.rules = list(rules)
        self.default_response = default_response
        self.prompts_seen: list[str] = []
        self._hits: dict[int, int] = {}
        self._state_lock = threading.Lock()

    @classmethod
    def from_script(cls, path: str | Path, **kwargs) -> MockProvider:
        """Load a JSON rule list; each entry holds MockRule fields."""
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(data, list):
            raise ValueError(f"{path}: mock script must be a JSON list of rule objects")
        rules = []
        for i, entry in enumerate(data):
            if not isinstance(entry, dict):
                raise ValueError(f"{path}: rule {i} is not an object")
            unknown = sorted(set(entry) - _SCRIPT_KEYS)
            if unknown:
                raise ValueError(f"{path}: rule {i} has unknown keys {unknown}")
            if "match" not in entry:
                raise ValueError(f"{path}: rule {i} is missing 'match'")
            rules.append(MockRule(**entry))
        return cls(rules, **kwargs)

    def _complete_once(self, prompt: str, params: GenerationParams) -> CompletionResult:
        with self._state_lock:
            self.prompts_seen.append(prompt)
            rule = None
            for index, candidate in enumerate(self.rules):
                if not candidate.matches(prompt):
                    continue
                if candidate.error is not None:
                    hits = self._hits.get(index, 0)
                    if candidate.times is None or hits < candidate.times:
                        self._hits[index] = hits + 1
                        if candidate.error == "transient":
                            raise TransientError(
                                f"scripted transient failure for {candidate.match!r}"
                            )
                        raise ProviderError(
                            f"scripted permanent failure for {candidate.match!r}"
                        )
                rule = candidate
                break
        if rule is not None:
            prompt_tokens = (
                rule.prompt_tokens if rule.prompt_tokens is not None else count_tokens(prompt)
            )
            completion_tokens = (
                rule.completion_tokens
                if rule.completion_tokens is not None
                else count_tokens(rule.response)
            )
            return CompletionResult(
                text=rule.response,
                prompt_tokens=prompt_tokens,
                completion_tokens=completion_tokens,
            )
        if self.default_response is not None:
            return CompletionResult(
                text=self.default_response,
                prompt_tokens=count_tokens(prompt),
                completion_tokens=count_tokens(self.default_response),
            )
        raise ProviderError(f"no scripted rule matches prompt {prompt[:80]!r}")


class ChatCompletionProvider(Provider):
    """HTTP backend speaking the chat-completions wire format.

    The credential comes from ``api_key`` or the ATTRGEN_API_KEY environment
    variable; base URL and model id come from configuration.
    """

    def __init__(
        self,
        model: str,
        base_url: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        **kwargs,
    ) -> None:
        super().__init__(**kwargs)
        self.model = model
        self.base_url = base_url.rstrip("/")
        key = api_key if api_key is not None else os.environ.get("ATTRGEN_API_KEY", "")
        if not key:
            raise AuthenticationError(
                "no API key: pass api_key or set ATTRGEN_API_KEY"
            )
        self._headers = {"Authorization": f"Bearer {key}"}
        self.timeout = timeout
        self._session = requests.Session()

    def _complete_once(self, prompt: str, params: GenerationParams) -> CompletionResult:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        }
        try:
            response = self._session.post(
                f"{self.base_url}/chat/completions",
                json=body,
                headers=self._headers,
                timeout=self.timeout,
            )
        except (requests.Timeout, requests.ConnectionError) as exc:
            raise TransientError(str(exc)) from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientError(f"HTTP {response.status_code}")
        if response.status_code in (401, 403):
            raise AuthenticationError(f"HTTP {response.status_code}: {response.text[:200]}")
        if response.status_code != 200:
            raise ProviderError(f"HTTP {response.status_code}: {response.text[:200]}")
        data = response.json()
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProviderError(f"malformed backend response: {str(data)[:200]}") from None
        usage = data.get("usage") or {}
        return CompletionResult(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", count_tokens(prompt))),
            completion_tokens=int(usage.get("completion_tokens", count_tokens(text))),
        )

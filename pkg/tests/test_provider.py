"""Provider behavior: mock scripting, retries, fan-out, and the cost meter."""

import json
import random
import threading

import pytest
from hypothesis import given, strategies as st

from attrgen.provider import (
    AuthenticationError,
    BudgetCapExceeded,
    ChatCompletionProvider,
    CompletionResult,
    CostMeter,
    GenerationParams,
    MockProvider,
    MockRule,
    ProviderError,
    RetryPolicy,
    TransientError,
    cost_per_1k_examples,
    count_tokens,
)

PARAMS = GenerationParams(max_tokens=64)


def mock(*rules, **kwargs):
    kwargs.setdefault("sleeper", lambda s: None)
    return MockProvider(rules, **kwargs)


def test_params_defaults():
    assert PARAMS.temperature == 1.0
    assert PARAMS.top_p == 1.0


@pytest.mark.parametrize(
    "kwargs",
    [
        {"max_tokens": 0},
        {"max_tokens": 10, "temperature": -0.1},
        {"max_tokens": 10, "top_p": 0.0},
        {"max_tokens": 10, "top_p": 1.5},
    ],
)
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        GenerationParams(**kwargs)


def test_scripted_echo():
    provider = mock(
        MockRule(match="economy prompt", response="scripted news text",
                 prompt_tokens=12, completion_tokens=40)
    )
    result = provider.complete("an economy prompt here", PARAMS)
    assert result == CompletionResult(
        text="scripted news text", prompt_tokens=12, completion_tokens=40
    )


def test_empty_prompt_rejected():
    with pytest.raises(ValueError, match="empty prompt"):
        mock().complete("", PARAMS)


def test_first_matching_rule_wins():
    provider = mock(
        MockRule(match="news", response="first"),
        MockRule(match="economy news", response="second"),
    )
    assert provider.complete("economy news please", PARAMS).text == "first"


def test_anchored_match():
    rule = MockRule(match="Suppose", anchored=True, response="ok")
    provider = mock(rule)
    assert provider.complete("Suppose you are a writer", PARAMS).text == "ok"
    with pytest.raises(ProviderError, match="no scripted rule"):
        provider.complete("Well, Suppose otherwise", PARAMS)


def test_default_token_counts_are_whitespace_counts():
    provider = mock(MockRule(match="one", response="a b c d e"))
    result = provider.complete("one two three", PARAMS)
    assert result.prompt_tokens == 3
    assert result.completion_tokens == 5
    assert count_tokens("") == 0


def test_default_response_fallback():
    provider = mock(default_response="fallback")
    assert provider.complete("anything", PARAMS).text == "fallback"


def test_mock_determinism():
    def run():
        provider = mock(MockRule(match="x", response="same text"))
        return provider.complete("x marks it", PARAMS)

    assert run() == run()


def test_retry_then_success():
    sleeps = []
    provider = MockProvider(
        [MockRule(match="flaky", error="transient", times=2, response="recovered")],
        sleeper=sleeps.append,
        jitter_rng=random.Random(0),
    )
    result = provider.complete("flaky prompt", PARAMS)
    assert result.text == "recovered"
    assert len(sleeps) == 2
    # 1s then 2s nominal, jitter within +/-20%
    assert 0.8 <= sleeps[0] <= 1.2
    assert 1.6 <= sleeps[1] <= 2.4


def test_retry_exhaustion():
    sleeps = []
    provider = MockProvider(
        [MockRule(match="down", error="transient")],
        sleeper=sleeps.append,
    )
    with pytest.raises(TransientError):
        provider.complete("down for good", PARAMS)
    assert len(sleeps) == 2  # 3 attempts, 2 pauses
    assert provider.meter.total_cost == 0.0


def test_permanent_error_not_retried():
    sleeps = []
    provider = MockProvider(
        [MockRule(match="broken", error="permanent")],
        sleeper=sleeps.append,
    )
    with pytest.raises(ProviderError):
        provider.complete("broken thing", PARAMS)
    assert sleeps == []
    assert len(provider.prompts_seen) == 1


def test_rule_validation():
    with pytest.raises(ValueError, match="transient.*permanent"):
        MockRule(match="x", error="sometimes")
    with pytest.raises(ValueError, match="times"):
        MockRule(match="x", times=2)


def frozen_meter():
    return CostMeter(
        price_per_1k_prompt_tokens=0.001, price_per_1k_completion_tokens=0.002
    )


def test_meter_hand_summed_total():
    # 5 calls of (10, 20) tokens: 5 * (10*0.001 + 20*0.002) / 1000 = 0.00025
    meter = frozen_meter()
    provider = mock(
        MockRule(match="p", response="r", prompt_tokens=10, completion_tokens=20),
        meter=meter,
    )
    for _ in range(5):
        provider.complete("p", PARAMS)
    assert meter.total_cost == pytest.approx(0.00025, abs=1e-12)
    assert meter.accumulated_prompt_tokens == 50
    assert meter.accumulated_completion_tokens == 100


def test_cost_per_1k_examples_frozen():
    meter = CostMeter(price_per_1k_prompt_tokens=1.0)
    meter.add_usage(100, 0)  # cost 0.10
    meter.count_example(200)
    assert cost_per_1k_examples(meter) == pytest.approx(0.5)


def test_cost_per_1k_examples_zero_cases():
    meter = CostMeter()
    assert cost_per_1k_examples(meter) == 0.0
    meter.count_example(10)
    assert cost_per_1k_examples(meter) == 0.0


@given(
    st.lists(
        st.tuples(st.integers(0, 1000), st.integers(0, 1000)), max_size=20
    ),
    st.lists(
        st.tuples(st.integers(0, 1000), st.integers(0, 1000)), max_size=20
    ),
)
def test_meter_additivity(seq_a, seq_b):
    separate = 0.0
    for seq in (seq_a, seq_b):
        meter = frozen_meter()
        for pt, ct in seq:
            meter.add_usage(pt, ct)
        separate += meter.total_cost
    combined = frozen_meter()
    for pt, ct in seq_a + seq_b:
        combined.add_usage(pt, ct)
    assert combined.total_cost == pytest.approx(separate, abs=1e-12)


def test_budget_cap_fires_after_update():
    meter = CostMeter(price_per_1k_prompt_tokens=1.0, budget_cap=0.05)
    meter.add_usage(40, 0)  # 0.04, under cap
    with pytest.raises(BudgetCapExceeded):
        meter.add_usage(40, 0)
    # the overshooting request is still on the books
    assert meter.accumulated_prompt_tokens == 80
    assert meter.total_cost == pytest.approx(0.08)


def test_budget_cap_through_complete():
    meter = CostMeter(price_per_1k_prompt_tokens=1.0, budget_cap=0.01)
    provider = mock(
        MockRule(match="p", response="r", prompt_tokens=100, completion_tokens=0),
        meter=meter,
    )
    with pytest.raises(BudgetCapExceeded):
        provider.complete("p", PARAMS)


def test_complete_many_matches_sequential():
    def build():
        return mock(
            MockRule(match="even", response="E"),
            default_response="O",
        )

    prompts = [f"{'even' if i % 2 == 0 else 'odd'} {i}" for i in range(8)]
    sequential = [build().complete(p, PARAMS) for p in prompts]
    for max_in_flight in (1, 4):
        assert build().complete_many(prompts, PARAMS, max_in_flight) == sequential


def test_complete_many_isolates_failures():
    provider = mock(
        MockRule(match="bad", error="permanent"),
        default_response="fine",
    )
    prompts = [f"item {i}" for i in range(7)] + ["bad item"]
    results = provider.complete_many(prompts, PARAMS, max_in_flight=3)
    assert [r.text for r in results[:7]] == ["fine"] * 7
    assert isinstance(results[7], ProviderError)
    # meter saw exactly the 7 successes
    assert provider.meter.accumulated_completion_tokens == 7 * count_tokens("fine")


def test_complete_many_validates_limit():
    with pytest.raises(ValueError, match="max_in_flight"):
        mock().complete_many(["x"], PARAMS, max_in_flight=0)


def test_complete_many_respects_bound():
    active = 0
    peak = 0
    gate = threading.Lock()

    class Probe(MockProvider):
        def _complete_once(self, prompt, params):
            nonlocal active, peak
            with gate:
                active += 1
                peak = max(peak, active)
            try:
                return super()._complete_once(prompt, params)
            finally:
                with gate:
                    active -= 1

    provider = Probe(default_response="ok")
    provider.complete_many([f"p{i}" for i in range(12)], PARAMS, max_in_flight=3)
    assert peak <= 3


def test_from_script(tmp_path):
    script = tmp_path / "rules.json"
    script.write_text(
        json.dumps(
            [
                {"match": "economy", "response": "news", "prompt_tokens": 2,
                 "completion_tokens": 3},
                {"match": "", "response": "default"},
            ]
        )
    )
    provider = MockProvider.from_script(script)
    assert provider.complete("economy report", PARAMS).text == "news"
    assert provider.complete("whatever else", PARAMS).text == "default"


def test_from_script_rejects_unknown_keys(tmp_path):
    script = tmp_path / "rules.json"
    script.write_text(json.dumps([{"match": "x", "reply": "y"}]))
    with pytest.raises(ValueError, match="reply"):
        MockProvider.from_script(script)


def test_http_provider_requires_key(monkeypatch):
    monkeypatch.delenv("ATTRGEN_API_KEY", raising=False)
    with pytest.raises(AuthenticationError, match="ATTRGEN_API_KEY"):
        ChatCompletionProvider(model="m", base_url="https://api.example.com/v1")


class FakeResponse:
    def __init__(self, status_code, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        return self._payload


def http_provider(monkeypatch, responses):
    monkeypatch.setenv("ATTRGEN_API_KEY", "k")
    provider = ChatCompletionProvider(
        model="m",
        base_url="https://api.example.com/v1",
        sleeper=lambda s: None,
    )
    queue = list(responses)
    monkeypatch.setattr(
        provider._session, "post", lambda *a, **kw: queue.pop(0)
    )
    return provider


def test_http_provider_parses_completion(monkeypatch):
    payload = {
        "choices": [{"message": {"content": "generated text"}}],
        "usage": {"prompt_tokens": 9, "completion_tokens": 4},
    }
    provider = http_provider(monkeypatch, [FakeResponse(200, payload)])
    result = provider.complete("a prompt", PARAMS)
    assert result == CompletionResult("generated text", 9, 4)
    assert provider.meter.accumulated_prompt_tokens == 9


def test_http_provider_usage_fallback(monkeypatch):
    payload = {"choices": [{"message": {"content": "two words"}}]}
    provider = http_provider(monkeypatch, [FakeResponse(200, payload)])
    result = provider.complete("three word prompt", PARAMS)
    assert (result.prompt_tokens, result.completion_tokens) == (3, 2)


def test_http_provider_retries_rate_limit(monkeypatch):
    payload = {"choices": [{"message": {"content": "ok"}}]}
    provider = http_provider(
        monkeypatch,
        [FakeResponse(429), FakeResponse(503), FakeResponse(200, payload)],
    )
    assert provider.complete("p", PARAMS).text == "ok"


def test_http_provider_auth_error_is_permanent(monkeypatch):
    provider = http_provider(monkeypatch, [FakeResponse(401, text="denied")])
    with pytest.raises(AuthenticationError):
        provider.complete("p", PARAMS)


def test_http_provider_malformed_payload(monkeypatch):
    provider = http_provider(monkeypatch, [FakeResponse(200, {"choices": []})])
    with pytest.raises(ProviderError, match="malformed"):
        provider.complete("p", PARAMS)


def test_retry_policy_delay_bounds():
    policy = RetryPolicy()
    rng = random.Random(123)
    for attempt, (lo, hi) in enumerate([(0.8, 1.2), (1.6, 2.4), (3.2, 4.8)]):
        for _ in range(50):
            assert lo <= policy.delay(attempt, rng) <= hi

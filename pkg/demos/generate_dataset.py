"""Generate a small attribute-conditioned dataset offline.

Uses the built-in NYT schema with a scripted mock provider, so it runs
without network access or an API key. Swap in ChatCompletionProvider to
target a real endpoint.
"""

from pathlib import Path

from attrgen import (
    CostMeter,
    GenerationJob,
    GenerationParams,
    MockProvider,
    MockRule,
    cost_per_1k_examples,
    emit_dataset,
    generate_dataset,
    load_builtin_schema,
)

schema = load_builtin_schema("nyt")
job = GenerationJob(
    schema=schema,
    mode="attr",
    per_class_count=2,
    params=GenerationParams(max_tokens=128),
    seed=7,
)

provider = MockProvider(
    [MockRule(match="", response="City officials unveiled the revised budget today.")],
    meter=CostMeter(
        price_per_1k_prompt_tokens=0.5,
        price_per_1k_completion_tokens=1.5,
    ),
)

result = generate_dataset(job, provider)
out = Path("demo_nyt.jsonl")
emit_dataset(result.examples, out)

print(f"wrote {len(result.examples)} examples to {out}")
print(f"classes: {len(schema.classes)}, per class: {job.per_class_count}")
print(f"total cost: {result.meter['total_cost']:.4f}")
print(f"cost per 1k examples: {cost_per_1k_examples(provider.meter):.4f}")
print()
print("first example prompt:")
print(result.examples[0].provenance["prompt"])

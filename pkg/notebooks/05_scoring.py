"""
Scoring traces
==============

Four accuracies: the Yes/No decision, the tool name, the tool input and
the whole response.
"""

from viotbench import (
    CorruptionConfig, FormatBreakerBackend, GenConfig, canonical_registry, default_base,
    generate, render_report, run_batch, score, scripted_backend,
)

registry = canonical_registry()
world = default_base()
records = generate(world, registry, cfg=GenConfig(per_tool_count=30, pipeline_count=30, seed=2))


def evaluate(factory):
    results = run_batch(factory, registry, world, records, parallelism=4)
    return score(records, [r.trace for r in results])


# Replaying gold scores perfectly.
perfect = evaluate(lambda: scripted_backend(records, registry=registry, base=world))
print(perfect.as_tuple())

# A model that ignores the format scores zero everywhere.
print(evaluate(FormatBreakerBackend).as_tuple())

# With 30% of tool names swapped, tool accuracy sits near 0.7 and the
# whole-response score pays for it on every step of a pipeline.
noisy = evaluate(lambda: scripted_backend(records, CorruptionConfig(p_tool=0.3, rng_seed=1),
                                          registry=registry, base=world))
print(noisy.as_tuple())
print(render_report(noisy))

"""
Generating instruction data
===========================

Queries come from phrasing banks; gold steps and answers come from the
fixture world, so they are right by construction.
"""

from collections import Counter

from viotbench import GenConfig, canonical_registry, default_base, generate, split
from viotbench.dataset import sft_pairs

registry = canonical_registry()
world = default_base()

records = generate(world, registry, cfg=GenConfig(per_tool_count=20, pipeline_count=20, seed=0))
print(len(records), "records")
print(Counter(r.task for r in records).most_common(3))

r = records[0]
print(r.query.text, r.query.media_ref)
for s in r.gold_steps:
    print("  ", s.tool_name, "|", s.tool_input)
print("  ->", r.gold_final)

# 49:1 split, stratified so every task lands in validation.
train, val = split(records, (49, 1), seed=0)
print(len(train), len(val), sorted({v.task for v in val}))

# Held-out pool for testing uses other cities and other phrasings.
test = generate(world, registry, cfg=GenConfig(2, 2, seed=0, pool="test"))
print(test[0].query.text)

# Fine-tuning pairs: one per step
pairs = sft_pairs(r, registry, world)
print(len(pairs), "pairs; first target:")
print(pairs[0]["target"])

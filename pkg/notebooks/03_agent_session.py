"""
One question, start to finish
=============================

The agent builds a prompt, asks the backend for a step, runs the tool and
repeats until the backend answers.
"""

from viotbench import DemoBackend, Query, canonical_registry, demo_base, render_step, run_session
from viotbench.prompts import build_prompt, make_context

registry = canonical_registry()
demo = demo_base()

query = Query("q1", "Is anything unusual happening in Cairo?")
result = run_session(DemoBackend(registry, demo), registry, demo, query)
print(result.outcome.value)
for step in result.trace.steps:
    print(render_step(step.action, step.observation))
    print("---")

# The prompt the backend saw at the first step
print(build_prompt(make_context(registry.specs, demo.list_locations(), query)))

"""
The simulated camera network
============================

Tools answer from a fixture world instead of running vision models, so
every answer is known in advance.
"""

from viotbench import canonical_registry, default_base, demo_base, invoke

registry = canonical_registry()
for spec in registry.specs:
    print(f"{spec.name:26s} {spec.category:8s} {spec.input_shape}")

# Two pipelines chain tools.
for pipe in registry.pipelines.values():
    print(pipe.name, "=", " -> ".join(pipe.stages))

# The demo world has two cities.
demo = demo_base()
print(demo.list_locations())
print(invoke(registry, demo, "CrowdCounting", "Paris").text)
print(invoke(registry, demo, "FaceRecognition", "suspect_A.jpg, Cairo").text)
print(invoke(registry, demo, "FaceRecognition", "suspect_A.jpg, Paris").text)

# Mistakes come back as observations, not exceptions.
print(invoke(registry, demo, "FaceRecognition", "Cairo").text)
print(invoke(registry, demo, "Teleport", "Cairo").text)

# The default world indexes 125 cities.
world = default_base()
print(len(world), world.list_locations()[:5])

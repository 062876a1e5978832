"""Writing a search space, sampling it and checking what is active."""

import numpy as np

from spacetune import active_labels, evaluate, format_space, parse_space, sample_prior, validate_graph
from spacetune.searchspace import SpaceError

text = """
a = normal(0, 1)
b = choice(0, log(uniform(2, 10)), a)
"""
g = parse_space(text)
print(format_space(g))
print("labels:", sorted(g.labels))

rng = np.random.default_rng(0)
for _ in range(5):
    s = sample_prior(g, rng)
    print(dict(s.values), "->", dict(s.resolved))

# the third option reuses a, so a's sample is shared within a configuration
s = evaluate(g, {"a": 0.7, "b": 2})
print("b picks a:", s.resolved["b"])

# only the chosen branch's leaves are active
print(active_labels(g, {"b": 0}), active_labels(g, {"b": 1}))

# guards make a whole group of scalar statements conditional
layered = parse_space("""
depth = choice(0, 1, 2)
width1 = randint(8, 64) if depth in {1, 2}
width2 = randint(8, 64) if depth in {2}
lr = lognormal(-4, 1)
""")
for d in range(3):
    print("depth", d, "->", sorted(active_labels(layered, {"depth": d})))

counts = np.bincount([sample_prior(layered, rng).values["depth"] for _ in range(3000)])
print("depth frequencies:", counts / counts.sum())

try:
    parse_space("x = uniform(3, 1)\ny = normal(0, 1)")
except SpaceError as exc:
    print("rejected:", exc)
    for d in exc.diagnostics:
        print("  ", d)

print("diagnostics of a clean space:", validate_graph(g))

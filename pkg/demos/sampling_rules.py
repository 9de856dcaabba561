"""
Random block-selection rules
============================

Every rule gives each block a positive chance of being picked.  Compare the
exact inclusion probabilities with frequencies from seeded draws.
"""
import numpy as np

import hyflexa as hx

N = 10
rules = {
    "uniform E|S|=3": hx.Uniform(N, 3.0),
    "doubly uniform": hx.DoublyUniform(N, tuple(np.full(N, 1.0 / N))),
    "nonoverlapping": hx.NonoverlappingUniform.contiguous(N, 4),
    "nice tau=3": hx.Nice(N, 3),
    "sequential": hx.Sequential(N),
    "fully parallel": hx.FullyParallel(N),
}

rng = hx.make_rng(0)
for name, rule in rules.items():
    counts = np.zeros(N)
    sizes = []
    for _ in range(20_000):
        S = hx.draw(rule, rng)
        counts[S] += 1
        sizes.append(S.size)
    exact = np.array([hx.inclusion_probability(rule, i) for i in range(N)])
    print(f"{name:16s} P(i in S)={exact[0]:.3f}  observed {counts[0] / 20_000:.3f}  mean |S|={np.mean(sizes):.2f}")

# The greedy filter keeps the sampled blocks with large enough error bounds.
S = np.array([1, 4, 7])
E = {1: 0.8, 4: 0.05, 7: 0.5}
print("threshold 0.1 keeps", hx.greedy_subselect(S, E, hx.Threshold(0.1)))
print("rho 0.5 keeps      ", hx.greedy_subselect(S, E, hx.MinimalRho(0.5)))

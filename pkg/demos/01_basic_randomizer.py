"""The one-coordinate sign randomizer, its exact distribution, and an audit.

A user's input is a sign vector on the hypercube (or the zero input when
the user holds nothing).  The randomizer reveals a single uniformly chosen
coordinate, flipping its sign with probability 1/(e^eps + 1).  Despite the
brutal compression, scaling by c_eps sqrt(m) makes the report an unbiased
estimate of the whole input vector, and the privacy loss is exactly eps.
"""

import math

import numpy as np

from ldphist.core import c_eps, report_magnitude
from ldphist.randomizer import (
    audit_ldp,
    position_slice,
    randomize,
    randomizer_channel,
    report_distribution,
)

m, eps = 4, 1.0
rng = np.random.default_rng(0)

x = np.array([1, -1, 1, 1], dtype=np.int8)
print(f"input signs: {x},  report magnitude c_eps*sqrt(m) = {report_magnitude(eps, m):.4f}")

print("\na few sampled reports (position, sign):")
for _ in range(5):
    r = randomize(x, m, eps, rng)
    print(f"  ({r.position}, {r.sign:+d})")

probs = report_distribution(x, m, eps)
print("\nexact output distribution over (position, sign):")
for j in range(m):
    print(f"  position {j}: P[+] = {probs[2*j]:.4f}  P[-] = {probs[2*j+1]:.4f}")

expectation = c_eps(eps) * math.sqrt(m) * (probs[0::2] - probs[1::2])
print(f"\nclosed-form E[report vector] = {np.round(expectation, 6)}")
print(f"matches x / sqrt(m)          = {np.round(x / math.sqrt(m), 6)}")

inputs = [np.array([1 - 2 * ((v >> i) & 1) for i in range(m)], dtype=np.int8)
          for v in range(2**m)]
channel = randomizer_channel(inputs, m, eps)
audit = audit_ldp(channel)
print(f"\nexhaustive audit over all {2**m} inputs: eps_observed = {audit.eps_observed:.12f}"
      f" (target {eps})")
print(f"delta at eps_observed: {audit.delta_at(audit.eps_observed):.2e}")
for j in range(m):
    sliced = audit_ldp(position_slice(channel, j))
    print(f"  conditioned on position {j}: eps_observed = {sliced.eps_observed:.12f}")

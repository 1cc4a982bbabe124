"""Check the many-to-one identity in one environment: particles of the branching
system whose ancestral hitting times fall in boxes, against weighted single walks."""
import math

import numpy as np

from brwre import EnvDistribution, sample_environment
from brwre.env import constant_environment
from brwre.experiments import pilot_boxes, verify_many_to_one

rng = np.random.default_rng(3)
env = sample_environment(EnvDistribution.two_point(0.5, 0.1, 0.2), -64, 64, seed=11)
for n in (1, 2, 3):
    lo, hi = pilot_boxes(env, n, 3.0, 0.75, rng)
    r = verify_many_to_one(env, lo, hi, 3.0, 50_000, 200_000, rng)
    print(f"n={n}  branching {r['lhs']:.4f} +- {r['lhs_se']:.4f}   walk {r['rhs']:.4f} +- {r['rhs_se']:.4f}"
          f"   z = {r['z']:.2f}")

r = verify_many_to_one(constant_environment(0.2, -64, 64), [0.0], [0.0], 3.0, 50_000, 1000, rng)
print(f"no constraint, rate 0.2: {r['lhs']:.4f} vs e^0.6 = {math.exp(0.6):.4f}")

"""Solve the tilt for the default environment law, then build the centering
sequence m_k for one sampled environment and print a few levels."""
import sys

import numpy as np

from brwre import EnvDistribution, assemble_centering, centering_table, sample_environment, solve_tilt
from brwre.barrier import p_all_to_target

dist = EnvDistribution.two_point(0.5, 0.1, 0.2)
# fewer samples than the experiments use; enough for a look
samples = int(sys.argv[1]) if len(sys.argv) > 1 else 100_000
tilt = solve_tilt(dist, M=128, env_samples=samples)
print(f"eta_bar = {tilt.eta_bar:.6f}   v0 = {tilt.v0:.6f}   theta* = {tilt.theta_star:.6f}")

env = sample_environment(dist, -512, 200, seed=7)
n = 128
table = centering_table(env, tilt, n)
p, se, reps = p_all_to_target(table, y0=4, rel_se=0.05, seed=1)
cen = assemble_centering(table, p, tilt.theta_star)

print(f"\np_k from {reps} paths")
print("   k      K_k/theta*     W_k       p_k        m_k     k/v0")
for k in (8, 16, 32, 64, 128):
    print(f"{k:4d} {table.K[k] / tilt.theta_star:12.3f} {table.W[k]:9.3f} {p[k]:10.3e} {cen.m[k]:10.3f} "
          f"{k / tilt.v0:8.2f}")

# the log p_k correction grows like (3/2) log k / theta*
ks = np.array([16, 32, 64, 128])
slope = np.polyfit(np.log(ks), np.log(p[ks]), 1)[0]
print(f"\nlog-log slope of p_k: {slope:.2f}")

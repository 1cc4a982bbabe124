"""Run the branching random walk in a few environments and compare the first
hitting times of level n with the centering m_n."""
import numpy as np

from brwre import EnvDistribution, SimConfig, assemble_centering, centering_table, sample_environment, simulate_hitting
from brwre.barrier import p_all_to_target
from brwre.experiments import ExperimentConfig, get_tilt

cfg = ExperimentConfig()
tilt = get_tilt(cfg)  # about 40 s
dist = EnvDistribution.parse(cfg.dist)
levels = [32, 64, 128]

print("env   " + "".join(f"  H_{n:<4d} m_{n:<4d} res " for n in levels) + "   max pop")
for seed in range(6):
    env = sample_environment(dist, -512, 200, seed)
    table = centering_table(env, tilt, max(levels))
    p, _, _ = p_all_to_target(table, 4, 0.05, seed)
    cen = assemble_centering(table, p, tilt.theta_star)
    rec = simulate_hitting(env, max(levels), SimConfig(prune_window=24, seed=1000 + seed))
    cells = "".join(f"{rec.H[n]:7.1f}{cen.m[n]:7.1f}{rec.H[n] - cen.m[n]:6.1f} " for n in levels)
    print(f"{seed:3d}  {cells}  {rec.max_pop:9d}")

print("\nthe residual column should not spread out as n grows")

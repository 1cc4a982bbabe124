"""How much can pruning particles far behind the leader change H_n?

Runs the narrow and the doubled window on the same randomness at a small window,
where the gap is visible, and sets the observed gap against the catch-up bound."""
import numpy as np

from brwre import EnvDistribution, SimConfig, SimulationAborted, sample_environment, simulate_hitting
from brwre.brw import catch_up_bound, catch_up_table

n = 64
a_grid = np.linspace(0.0, 40.0, 161)
dist = EnvDistribution.two_point(0.5, 0.1, 0.2)
for window in (8, 10, 12):
    gaps, bounds = [], []
    for seed in range(15):
        env = sample_environment(dist, -512, n + 8, seed)
        try:
            rec = simulate_hitting(env, n, SimConfig(prune_window=window, seed=seed, coupled=True,
                                                     record_pruned=True))
        except SimulationAborted:
            continue
        r, g = catch_up_table(env, n, rec.H[n] + 1.0, 0.5)
        bounds.append(np.trapezoid(catch_up_bound(rec, env.x_min, r, g, a_grid), a_grid))
        gaps.append(rec.H[n] - rec.H_outer[n])
    print(f"window {window:3d} -> {2 * window:3d}: mean gap {np.mean(gaps):6.3f}   "
          f"mean bound {np.mean(bounds):6.3f}   ({len(gaps)} runs)")

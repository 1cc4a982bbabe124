import math

import numpy as np
import pytest

from brwre.brw import (NO_PRUNE, RunRecord, SimConfig, SimulationAborted, catch_up_bound, catch_up_table,
                       constrained_particle_counts, quantile_shift_bound, simulate_hitting, simulate_until)
from brwre.env import EnvDistribution, ParameterError, WindowError, constant_environment, sample_environment


def env_default(seed=1, right=80):
    return sample_environment(EnvDistribution.two_point(0.5, 0.1, 0.2), -512, right, seed)


def surviving(env, n, seeds, **kw):
    """Runs whose pruned system does not die out (narrow windows can lose everything early)."""
    out = []
    for s in seeds:
        try:
            out.append(simulate_hitting(env, n, SimConfig(seed=s, **kw)))
        except SimulationAborted as e:
            assert "died out" in str(e)
    return out


def test_yule_population_mean():
    # constant rate 0.2: E[N(t)] = exp(0.2 t)
    env = constant_environment(0.2, -64, 64)
    cfg = SimConfig(prune_window=NO_PRUNE)
    pops = []
    rng = np.random.default_rng(0)
    for _ in range(4000):
        pops.append(simulate_until(env, 5.0, cfg, rng=rng).pop_t[0])
    pops = np.array(pops)
    assert abs(pops.mean() - math.e) < 3 * pops.std() / math.sqrt(pops.size)


def test_time_zero():
    env = env_default()
    rec = simulate_until(env, 0.0, SimConfig(prune_window=24, seed=3))
    assert rec.M_t == [0] and rec.N0_t == [1] and rec.pop_t == [1]


def test_determinism_and_seed_dependence():
    env = env_default()
    a = simulate_hitting(env, 30, SimConfig(prune_window=16, seed=5))
    b = simulate_hitting(env, 30, SimConfig(prune_window=16, seed=5))
    c = simulate_hitting(env, 30, SimConfig(prune_window=16, seed=6))
    assert a == b
    assert a.H != c.H


def test_hitting_times_increase():
    rec = simulate_hitting(env_default(), 40, SimConfig(prune_window=16, seed=2))
    H = rec.H_bold
    assert H[0] == 0.0 and np.all(np.diff(H) > 0) and rec.max_reached >= 40


def test_record_roundtrip(tmp_path):
    rec = simulate_until(env_default(), 20.0, SimConfig(prune_window=16, seed=1, record_pruned=True),
                         t_grid=[5.0, 10.0, 20.0], n_target=10)
    p = tmp_path / "run.json"
    rec.save(p)
    assert RunRecord.load(p) == rec
    assert len(rec.M_t) == 3 and rec.M_t[-1] <= rec.max_reached


def test_unreached_level_is_none_on_disk(tmp_path):
    rec = simulate_until(env_default(), 1.0, SimConfig(prune_window=16, seed=1), n_target=0)
    rec.H.append(math.inf)
    assert rec.to_dict()["H"][-1] is None
    assert RunRecord.from_dict(rec.to_dict()).H_bold[-1] == math.inf


def test_coupled_wider_system_is_never_slower():
    env = env_default(4, right=400)
    rec = surviving(env, 40, range(9, 30), prune_window=10, coupled=True)[0]
    H, Ho = np.array(rec.H), np.array(rec.H_outer)
    assert np.all(Ho <= H + 1e-12)
    assert rec.outer_window == 20


def test_coupled_matches_uncoupled_narrow_system():
    # the narrow half of a coupled run is distributed as an ordinary pruned run
    env = env_default(7, right=400)
    a = [r.H[20] for r in surviving(env, 20, range(300), prune_window=10)]
    b = [r.H[20] for r in surviving(env, 20, range(1000, 1300), prune_window=10, coupled=True)]
    assert len(a) > 200 and len(b) > 200
    se = math.hypot(np.std(a) / math.sqrt(len(a)), np.std(b) / math.sqrt(len(b)))
    assert abs(np.mean(a) - np.mean(b)) < 3.5 * se


def test_pruned_log_accounts_for_every_pruned_particle():
    rec = surviving(env_default(), 40, range(20), prune_window=8, record_pruned=True)[0]
    assert rec.pruned_inner > 0
    assert sum(rec.prune_log["count"]) == rec.pruned_inner
    assert max(rec.prune_log["site"]) <= rec.max_reached - 8


def test_environment_must_cover_prune_window():
    env = sample_environment(EnvDistribution.two_point(0.5, 0.1, 0.2), -10, 50, 1)
    with pytest.raises(WindowError):
        simulate_hitting(env, 20, SimConfig(prune_window=24))
    with pytest.raises(WindowError):
        simulate_hitting(env_default(right=30), 40, SimConfig(prune_window=24))


def test_population_cap_aborts_with_partial_record():
    with pytest.raises(SimulationAborted) as e:
        simulate_until(env_default(), 60.0, SimConfig(prune_window=NO_PRUNE, pop_cap=200, seed=1))
    rec = e.value.record
    assert rec.status == "population cap exceeded" and rec.max_pop >= 200


def test_extinction_of_pruned_system_aborts():
    # a window of one site loses the whole population quickly
    env = env_default(3, right=400)
    with pytest.raises(SimulationAborted, match="died out"):
        for s in range(50):
            simulate_hitting(env, 60, SimConfig(prune_window=1, seed=s))


def test_bad_config():
    with pytest.raises(ParameterError):
        SimConfig(prune_window=0)
    with pytest.raises(ParameterError):
        simulate_until(env_default(), 5.0, SimConfig(), t_grid=[6.0])


def test_catch_up_table_trivial_limits():
    env = constant_environment(0.0 + 1e-9, -200, 20)
    r, g = catch_up_table(env, 10, 5.0, 0.25)
    assert np.all(g[:, 0] == 0.0)
    # monotone in r and in the distance to n
    assert np.all(np.diff(g, axis=1) >= -1e-12)
    assert np.all(np.diff(g[:, -1]) >= -1e-12)


def test_catch_up_table_matches_single_walk_without_branching():
    # with xi ~ 0, g(n-1, r) is P[H_1 <= r] for a rate-1 walk: at large r it tends to 1
    env = constant_environment(1e-12, -2000, 5)
    r, g = catch_up_table(env, 1, 400.0, 4.0)
    # P[H_1 > r] ~ sqrt(2 / (pi r))
    assert 1 - g[0 - env.x_min, -1] == pytest.approx(math.sqrt(2 / (math.pi * 400)), rel=0.1)


def test_bound_dominates_coupled_gap():
    env = env_default(11)
    gaps, bounds = [], []
    a_grid = np.linspace(0.0, 40.0, 161)
    for rec in surviving(env, 40, range(30), prune_window=8, coupled=True, record_pruned=True):
        r, g = catch_up_table(env, 40, rec.H[40] + 1.0, 0.5)
        b = catch_up_bound(rec, env.x_min, r, g, a_grid)
        assert np.all(np.diff(b) <= 1e-12) and b.max() <= 1.0
        gaps.append(rec.H[40] - rec.H_outer[40])
        bounds.append(np.trapezoid(b, a_grid))
    assert np.mean(gaps) <= np.mean(bounds)


def test_quantile_shift_bound_zero_without_pruning():
    a_grid = np.linspace(0, 10, 11)
    H = np.arange(50.0)
    out = quantile_shift_bound(H, [np.zeros(11)] * 50, a_grid)
    assert out == {0.1: 0.0, 0.9: 0.0}
    full = quantile_shift_bound(H, [np.ones(11)] * 50, a_grid)
    assert full[0.1] > 0


def test_many_to_one_left_side_unconstrained():
    env = constant_environment(0.2, -64, 64)
    counts = constrained_particle_counts(env, 2.0, [0.0], [0.0], 20000, np.random.default_rng(1))
    assert abs(counts.mean() - math.exp(0.4)) < 3 * counts.std() / math.sqrt(counts.size)


def test_unpruned_and_wide_window_agree_in_law():
    from scipy.stats import ks_2samp

    env = env_default(13, right=60)
    # counts are kept per site, so a huge cap costs time only
    a = [simulate_hitting(env, 32, SimConfig(prune_window=NO_PRUNE, seed=s, pop_cap=10**9)).H[32]
         for s in range(200)]
    b = [simulate_hitting(env, 32, SimConfig(prune_window=40, seed=500 + s, pop_cap=10**9)).H[32]
         for s in range(200)]
    assert ks_2samp(a, b).pvalue > 0.01

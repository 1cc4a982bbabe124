"""Acceptance suite.  Each test prints one PASS/FAIL line in the terminal summary.

The tightness runs (criteria 8 and 9) share one set of 200 replicates and take
most of the suite's time, roughly 45 minutes on one core.
"""
import filecmp
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from brwre.barrier import (BarrierEvent, BarrierProfile, GaussLaw, estimate_barrier_prob_gauss,
                           estimate_barrier_prob_grid, p_n_event)
from brwre.env import EnvDistribution, constant_environment, sample_environment
from brwre.experiments import (ENV_LEFT, ExperimentConfig, replicate_seeds, run_barrier_ratio, run_experiment,
                               run_mt1, run_pn_decay, run_prune_check, run_tightness)
from brwre.tilt import centering_table, h_transform_rates, mean_log_mgf, solve_tilt, tilted_profile
from brwre.walker import mc_phi_oracle, sample_tau

BANDS = json.loads((Path(__file__).parent / "fixtures" / "tightness_bands.json").read_text())
PHI_HALF = 0.3819660113  # (3 - sqrt 5) / 2


@pytest.fixture(scope="module")
def tilt_file(default_tilt, tmp_path_factory):
    p = tmp_path_factory.mktemp("tilt") / "tilt.json"
    default_tilt.save(p)
    return str(p)


@pytest.fixture(scope="module")
def base_cfg(tilt_file):
    return dict(tilt_path=tilt_file)


def test_c01_closed_form_tilt(criterion):
    t0 = time.perf_counter()
    env = constant_environment(0.2, -400, 8)
    prof = tilted_profile(env, -0.5, 4)
    L, dL = float(prof.L[0]), float(prof.mean_tau[0])
    a = 1.5
    closed_L, closed_dL = math.log(a - math.sqrt(a * a - 1)), 1 / math.sqrt(a * a - 1)
    h = 1e-6
    d = EnvDistribution.two_point(1.0, 0.1, 0.2)
    fd = (mean_log_mgf(d, -0.5 + h, 64, 2)[0] - mean_log_mgf(d, -0.5 - h, 64, 2)[0]) / (2 * h)
    dt = time.perf_counter() - t0
    ok = (abs(L + 0.9624236501) <= 1e-9 and abs(dL - 0.8944271910) <= 1e-6 and abs(L - closed_L) <= 1e-9
          and abs(dL - closed_dL) <= 1e-6 and abs(fd - dL) <= 1e-6 and dt < 1.0)
    criterion(1, ok, f"L={L:.10f} L'={dL:.10f} fd={fd:.10f} ({dt:.2f}s)")
    assert ok


def test_c02_mc_oracle(criterion):
    t0 = time.perf_counter()
    env = constant_environment(0.2, -4000, 8)
    est = mc_phi_oracle(env, -0.5, 1, 1_000_000, np.random.default_rng(np.random.SeedSequence([2, 0xAC])))
    dt = time.perf_counter() - t0
    z = abs(est.mean - PHI_HALF) / est.se
    ok = z <= 3 and dt < 30
    criterion(2, ok, f"phi_1={est.mean:.6f} se={est.se:.2g} z={z:.2f} truncated={est.truncated} "
                     f"bias<={est.bias_bound:.1e} ({dt:.1f}s)")
    assert ok


def test_c03_tilt_closure(criterion):
    from scipy.optimize import brentq

    sol = solve_tilt(EnvDistribution.two_point(1.0, 0.1, 0.2), M=512, env_samples=4)
    theta = brentq(lambda th: th * math.sinh(th) - math.cosh(th) + 1 - 0.2, 1e-9, 10)
    v = math.sinh(theta)
    ok = abs(sol.residual) < 1e-8 and abs(sol.v0 - v) < 1e-6 and sol.argmax_ok
    criterion(3, ok, f"residual={sol.residual:.1e} v0={sol.v0:.9f} oracle={v:.9f} argmax_ok={sol.argmax_ok}")
    assert ok


def test_c04_h_transform_law(criterion, default_tilt):
    env = sample_environment(EnvDistribution.two_point(0.5, 0.1, 0.2), ENV_LEFT, 1100,
                             replicate_seeds(20240611, 0)[0])
    prof = tilted_profile(env, default_tilt.eta_bar, 1100)
    rng = np.random.default_rng(np.random.SeedSequence([4, 0xAC]))
    x = rng.integers(prof.first, prof.n, 1000)
    r, l = h_transform_rates(prof, x)
    rate_err = float(np.max(np.abs(r + l - (1 - prof.potential(x)))))
    zs = []
    for k in (1, 64, 700):
        tau = sample_tau(env, default_tilt, prof, k, rng, size=1_000_000)
        m, v = prof.mean_tau[k - 1], prof.var_tau[k - 1]
        c = tau - tau.mean()
        zs.append(abs(tau.mean() - m) / math.sqrt(v / tau.size))
        zs.append(abs(c.var() - v) / math.sqrt((np.mean(c**4) - v * v) / tau.size))
    ok = rate_err <= 1e-12 and max(zs) <= 3
    criterion(4, ok, f"rate identity err={rate_err:.1e}; mean/var z at k=1,64,700: "
                     + " ".join(f"{z:.2f}" for z in zs))
    assert ok


def test_c05_bridge_correction(criterion, default_tilt):
    law = GaussLaw(np.array([0.0, 0.5, 0.5]))
    ev = BarrierEvent(1.0, BarrierProfile.flat(2), (1.0, 1.0))
    one = estimate_barrier_prob_gauss(law, ev, 1_000_000, 5, "pinned")
    exact = 1 - math.exp(-2)
    z1 = abs(one.p_hat - exact) / one.se

    env = sample_environment(EnvDistribution.two_point(0.5, 0.1, 0.2), ENV_LEFT, 80,
                             replicate_seeds(20240611, 0)[0])
    tab = centering_table(env, default_tilt, 64)
    law, ev = p_n_event(tab, 4)
    bridge = estimate_barrier_prob_gauss(law, ev, 1_000_000, 51, "integrated")
    grid = estimate_barrier_prob_grid(law, ev, 1_000_000, 52, substeps=128)
    z2 = abs(bridge.p_hat - grid.p_hat) / math.hypot(bridge.se, grid.se)
    ok = z1 <= 3 and z2 <= 3
    criterion(5, ok, f"segment {one.p_hat:.6f} vs {exact:.6f} (z={z1:.2f}); p_64 bridge {bridge.p_hat:.4e} "
                     f"grid(1/128) {grid.p_hat:.4e} (z={z2:.2f})")
    assert ok


def test_c06_many_to_one(criterion, base_cfg):
    t0 = time.perf_counter()
    res = run_mt1(ExperimentConfig(kind="mt1", **base_cfg))
    dt = time.perf_counter() - t0
    yule = res.rows[0]
    z_exact = abs(yule["lhs"] - yule["exact"]) / yule["lhs_se"]
    ok = res.passed and z_exact <= 3 and dt < 300
    criterion(6, ok, "z=" + " ".join(f"{r['z']:.2f}" for r in res.rows)
              + f"; Yule vs e^(0.6): z={z_exact:.2f} ({dt:.0f}s)")
    assert ok


def test_c07_pn_decay(criterion, base_cfg):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(kind="pn-decay", n_list=[32, 64, 128, 256, 512], replicates=20, pn_rel_se=0.2,
                           **base_cfg)
    res = run_pn_decay(cfg)
    dt = time.perf_counter() - t0
    ok = res.passed and dt < 600
    criterion(7, ok, f"max/min of |ln p_n|/ln n = {res.summary['ratio']:.3f}; "
                     f"slope {res.summary['slope']:.3f} ({dt:.0f}s)")
    assert ok


@pytest.fixture(scope="module")
def tightness(base_cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("tight")
    cfg = ExperimentConfig(kind="tightness", iqr_band=BANDS["iqr_band"], drift_k=BANDS["drift_k"],
                           check_pair=BANDS["check_pair"], left_tail_C=BANDS["left_tail_C"], **base_cfg)
    t0 = time.perf_counter()
    res = run_tightness(cfg)
    dt = time.perf_counter() - t0
    for k, r in res.items():
        r.write(out / f"tightness_{k}.csv")
    return res, dt


def _tight_detail(r):
    c = r.checks
    return (f"IQR ratio {c['iqr_ratio']['value']:.3f} (band {c['iqr_ratio']['band']}, "
            f"se {c['iqr_ratio']['bootstrap_se']:.2f}); median drift {c['median_drift']['value']:.2f} "
            f"(3 se = {3 * c['median_drift']['bootstrap_se']:.2f}); failed runs {r.summary['failures']['failed']}")


def test_c08_tightness_hitting(criterion, tightness):
    res, dt = tightness
    r = res["H"]
    ok = r.passed and dt < 3600
    criterion(8, ok, _tight_detail(r) + f" ({dt / 60:.0f} min shared with 9)")
    assert ok


def test_c09_tightness_max(criterion, tightness):
    res, dt = tightness
    r = res["M"]
    ok = r.passed and dt < 3600
    criterion(9, ok, _tight_detail(r) + f"; min q01 {r.checks['left_tail']['value']:.1f}")
    assert ok


def test_c10_barrier_ratio(criterion, base_cfg):
    res = run_barrier_ratio(ExperimentConfig(kind="barrier-ratio", n_list=[128, 256], **base_cfg))
    c = res.checks["slope_agreement"]
    ok = res.passed
    criterion(10, ok, f"slopes {c['slopes'][0]:.3f} +- {c['ses'][0]:.3f} (n=128), {c['slopes'][1]:.3f} +- "
                      f"{c['ses'][1]:.3f} (n=256); ratios positive: {res.checks['ratios_positive']['pass']}")
    assert ok


def test_c11_determinism(criterion, base_cfg, tmp_path):
    paths = []
    for workers in (1, 2, 1):
        p = tmp_path / f"run_w{workers}_{len(paths)}.csv"
        cfg = ExperimentConfig(kind="tightness-h", n_list=[32, 64], check_pair=[32, 64], replicates=6,
                               bootstrap=200, workers=workers, output=str(p), **base_cfg)
        run_experiment(cfg)
        paths.append(p)
    same = all(filecmp.cmp(paths[0], q, shallow=False) for q in paths[1:])
    same_summary = all(filecmp.cmp(f"{paths[0]}.summary.json", f"{q}.summary.json", shallow=False)
                       for q in paths[1:])
    ok = same and same_summary
    criterion(11, ok, f"rows identical: {same}, summaries identical: {same_summary} (workers 1, 2, 1)")
    assert ok


def test_c12_pruning_soundness(criterion, base_cfg):
    res = run_prune_check(ExperimentConfig(kind="prune-check", replicates=200, prune_validate_reps=100,
                                           **base_cfg))
    s = res.summary
    b = s["shift_bound"]
    v = s["validation"]
    ok = res.passed
    criterion(12, ok, f"shift bound at window 24, n=64: q10 {b['q10']:.3f}, q90 {b['q90']:.3f} (< 0.1); "
                      f"check at window {v['window']}: mean gap {v['mean_gap']:.2f} <= bound {v['mean_gap_bound']:.2f}")
    assert ok

import math

import numpy as np
import pytest

from brwre.barrier import (BarrierEvent, BarrierProfile, GaussLaw, assemble_centering, banana_down, banana_up,
                           choose_delta, estimate_barrier_prob_gauss, estimate_barrier_prob_grid, estimate_p_all,
                           estimate_p_n, killed_segment_mass, m_profile, p_all_to_target, profile_t_ny)
from brwre.env import ParameterError
from brwre.tilt import CenteringTable


def synthetic_table(n, seed=0):
    """A table with the texture of a real one: positive variances, wandering W."""
    rng = np.random.default_rng(seed)
    xi2 = np.concatenate([[0.0], rng.uniform(1.5, 3.0, n)])
    W = np.concatenate([[0.0], np.cumsum(rng.normal(0, 0.3, n))])
    K = np.concatenate([[0.0], np.cumsum(rng.uniform(0.5, 0.7, n))])
    return CenteringTable(n, K, W, xi2, np.cumsum(xi2), np.full(n + 1, 1.8), 0.3, -0.1)


def test_banana_hand_value_and_shape():
    xi2 = np.ones(10)
    up = banana_up(9, 0.1, xi2)
    assert up.values[1] == pytest.approx(-0.1 * (2 ** (1 / 6) - 1), rel=1e-12)
    assert up.values[0] == 0.0 and up.values[-1] == 0.0
    np.testing.assert_allclose(banana_down(9, 0.1, xi2).values, -up.values)
    # symmetric for constant variance
    np.testing.assert_allclose(up.values, up.values[::-1], atol=1e-15)
    assert np.all(up.values[1:-1] < 0)


def test_banana_rejects_short_horizon():
    with pytest.raises(ParameterError):
        banana_up(2, 0.1, np.ones(3))


def test_t_ny_profile_reduces_to_K_over_theta_when_p_is_one():
    tab = synthetic_table(20)
    prof = profile_t_ny(tab, 1.0, tab.theta_star, y=0.0)
    np.testing.assert_allclose(prof.values, tab.K / tab.theta_star)
    shifted = profile_t_ny(tab, 0.01, tab.theta_star, y=2.0, x=0.5)
    expect = tab.K / tab.theta_star - 1.5 - tab.sigma2 / (tab.theta_star * tab.sigma2[-1]) * math.log(0.01)
    np.testing.assert_allclose(shifted.values, expect)
    assert m_profile(tab, 1.0, tab.theta_star).values.max() == 0.0


def test_choose_delta_gives_increasing_profiles():
    tab = synthetic_table(64, 3)
    d = choose_delta(tab, 1e-3, tab.theta_star)
    for f in (banana_up, banana_down):
        assert np.all(np.diff(profile_t_ny(tab, 1e-3, tab.theta_star, 0.0, 0.0, f(64, d, tab.xi2)).values) > 0)


def test_absent_barrier_gives_one():
    law = GaussLaw(np.concatenate([[0.0], np.ones(10)]))
    ev = BarrierEvent(0.0, BarrierProfile.flat(10, -1e9))
    for mode in ("indicator", "integrated"):
        est = estimate_barrier_prob_gauss(law, ev, 1000, 0, mode)
        assert est.p_hat == pytest.approx(1.0, abs=1e-12)


def test_killed_segment_mass_matches_reflection():
    # driftless, unit variance, start 1: P[min > 0, end in [0, inf)] = 1 - 2 P[N < -1]
    from scipy.stats import norm
    m = killed_segment_mass(np.array([1.0]), 0.0, 1.0, 0.0, math.inf)
    assert m[0] == pytest.approx(1 - 2 * norm.cdf(-1.0), rel=1e-12)


def test_pinned_single_segment_survival():
    law = GaussLaw(np.array([0.0, 0.5, 0.5]))
    ev = BarrierEvent(1.0, BarrierProfile.flat(2), (1.0, 1.0))
    est = estimate_barrier_prob_gauss(law, ev, 200_000, 4, "pinned")
    assert abs(est.p_hat - (1 - math.exp(-2))) < 3 * est.se


def test_endpoint_modes_agree():
    tab = synthetic_table(24, 5)
    law = GaussLaw(tab.xi2)
    ev = BarrierEvent(4.0, BarrierProfile(tab.W), (3.0, 4.0))
    a = estimate_barrier_prob_gauss(law, ev, 200_000, 1, "indicator")
    b = estimate_barrier_prob_gauss(law, ev, 200_000, 2, "integrated")
    assert b.se < a.se
    assert abs(a.p_hat - b.p_hat) < 3 * math.hypot(a.se, b.se)


def test_grid_oracle_and_shift():
    tab = synthetic_table(16, 6)
    law = GaussLaw(tab.xi2)
    ev = BarrierEvent(4.0, BarrierProfile(tab.W), (3.0, 4.0))
    ref = estimate_barrier_prob_gauss(law, ev, 400_000, 1, "integrated")
    raw = estimate_barrier_prob_grid(law, ev, 400_000, 2, 16, shift=False)
    fixed = estimate_barrier_prob_grid(law, ev, 400_000, 2, 16)
    comb = math.hypot(ref.se, fixed.se)
    assert raw.p_hat - ref.p_hat > 3 * comb  # coarse monitoring overstates survival
    assert abs(fixed.p_hat - ref.p_hat) < 3 * comb


def test_grid_richardson_extrapolation():
    # leading bias is proportional to substeps^-1/2, so 2 p(4m) - p(m) removes it
    tab = synthetic_table(12, 7)
    law = GaussLaw(tab.xi2)
    ev = BarrierEvent(4.0, BarrierProfile(tab.W), (3.0, 4.0))
    ref = estimate_barrier_prob_gauss(law, ev, 400_000, 1, "integrated")
    p8 = estimate_barrier_prob_grid(law, ev, 400_000, 3, 8, shift=False)
    p32 = estimate_barrier_prob_grid(law, ev, 400_000, 4, 32, shift=False)
    rich = 2 * p32.p_hat - p8.p_hat
    se = math.hypot(2 * p32.se, p8.se)
    assert abs(rich - ref.p_hat) < 3 * math.hypot(se, ref.se) + 0.02 * ref.p_hat


def test_p_all_matches_single_horizon():
    tab = synthetic_table(40, 8)
    p, se = estimate_p_all(tab, 4, 200_000, 0)
    assert p[0] == 1.0
    for k in (10, 40):
        one = estimate_p_n(tab, 4, k, 200_000, 1)
        assert abs(one.p_hat - p[k]) < 3 * math.hypot(one.se, se[k])


def test_p_all_to_target_meets_precision():
    tab = synthetic_table(40, 9)
    p, se, reps = p_all_to_target(tab, 4, 0.05, 0, pilot=5000)
    assert se[40] / p[40] <= 0.05


def test_y0_must_exceed_e_plus_one():
    with pytest.raises(ParameterError):
        estimate_p_n(synthetic_table(5), 3)


def test_centering_inverse_lookup():
    tab = synthetic_table(30, 10)
    p = np.exp(-0.05 * np.arange(31))
    cen = assemble_centering(tab, p, tab.theta_star)
    np.testing.assert_allclose(cen.m, (tab.K + 0.05 * np.arange(31)) / tab.theta_star)
    for t in (0.0, cen.m[5], cen.m[5] + 1e-9, 0.5 * (cen.m[20] + cen.m[21])):
        k = int(cen.m_tilde(t))
        assert cen.m[k] < t or k == 0
        assert k == 30 or cen.m[k + 1] >= t
    with pytest.raises(ValueError):
        cen.m_tilde(cen.m[-1] + 1)


def test_centering_with_p_one_is_K_over_theta():
    tab = synthetic_table(10)
    cen = assemble_centering(tab, np.ones(11), tab.theta_star)
    np.testing.assert_allclose(cen.m, tab.K / tab.theta_star)


def test_centering_rejects_zero_probability():
    tab = synthetic_table(5)
    p = np.ones(6)
    p[3] = 0.0
    with pytest.raises(ParameterError, match="p_hat\\[3\\]"):
        assemble_centering(tab, p, tab.theta_star)

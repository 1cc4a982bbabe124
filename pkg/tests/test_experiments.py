import json
import math

import numpy as np
import pytest

from brwre.env import EnvDistribution, ParameterError, constant_environment, sample_environment
from brwre.experiments import (EmpiricalDistribution, ExperimentConfig, emit_results, load_results,
                               pilot_boxes, quantile, replicate_seeds, verify_many_to_one)


def test_quantile_convention():
    assert quantile(np.array([0.0, 1, 2, 3]), 0.25) == 0.75
    assert quantile(np.array([3.0, 1, 2]), 0.5) == 2.0
    d = EmpiricalDistribution(np.array([2.0, 0.0, 1.0]))
    assert d.n_samples == 3 and d.quantile(0.0) == 0.0 and d.quantile(1.0) == 2.0
    with pytest.raises(ParameterError):
        quantile(np.arange(3.0), 1.5)
    with pytest.raises(ParameterError):
        EmpiricalDistribution(np.array([]))


@pytest.mark.parametrize("fmt", ["csv", "jsonl"])
def test_results_roundtrip(tmp_path, fmt):
    rows = [{"n": 32, "replicate": 0, "residual": 0.1 + 0.2, "flag": True, "name": "a"},
            {"n": 64, "replicate": 1, "residual": -1e-300, "flag": False, "name": "b"}]
    p = tmp_path / f"r.{fmt}"
    emit_results(rows, fmt, p)
    assert load_results(p, fmt) == rows


def test_replicate_seeds_are_stable_and_distinct():
    a = replicate_seeds(20240611, 0)
    assert a == replicate_seeds(20240611, 0)
    assert len(set(a)) == 3 and a != replicate_seeds(20240611, 1)
    assert all(0 <= s < 2**63 for s in a)


def test_config_validation(tmp_path):
    with pytest.raises(ParameterError):
        ExperimentConfig(kind="nope")
    with pytest.raises(ParameterError):
        ExperimentConfig(n_list=[64, 32])
    with pytest.raises(ParameterError):
        ExperimentConfig(replicates=1)
    with pytest.raises(ParameterError):
        ExperimentConfig.from_dict({"kind": "mt1", "bogus": 1})
    cfg = ExperimentConfig(kind="mt1", replicates=7)
    p = tmp_path / "c.json"
    cfg.save(p)
    assert ExperimentConfig.load(p) == cfg
    assert json.loads(p.read_text())["replicates"] == 7


def test_many_to_one_empty_box_is_zero():
    env = constant_environment(0.2, -64, 64)
    r = verify_many_to_one(env, [0.0, 2.0], [0.0, 1.0], 2.0, 10, 10, np.random.default_rng(0))
    assert r["lhs"] == 0.0 and r["rhs"] == 0.0


def test_many_to_one_yule_rhs_exact():
    env = constant_environment(0.2, -64, 64)
    r = verify_many_to_one(env, [0.0], [0.0], 2.0, 20000, 1000, np.random.default_rng(1))
    assert r["rhs"] == pytest.approx(math.exp(0.4), rel=1e-12)
    assert r["z"] <= 3


def test_many_to_one_random_environment():
    env = sample_environment(EnvDistribution.two_point(0.5, 0.1, 0.2), -64, 64, 5)
    rng = np.random.default_rng(2)
    lo, hi = pilot_boxes(env, 2, 3.0, 0.75, rng)
    assert lo[0] == hi[0] == 0.0 and np.all(lo <= hi)
    r = verify_many_to_one(env, lo, hi, 3.0, 40000, 100000, rng)
    assert r["z"] <= 3.5 and r["lhs"] > 0


def test_many_to_one_guards():
    env = constant_environment(0.2, -64, 64)
    with pytest.raises(ParameterError):
        verify_many_to_one(env, np.zeros(6), np.ones(6), 2.0, 10, 10, np.random.default_rng(0))
    with pytest.raises(ParameterError):
        verify_many_to_one(constant_environment(0.2, -10, 10), [0.0], [0.0], 2.0, 10, 10,
                           np.random.default_rng(0))

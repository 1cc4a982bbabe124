import json

import pytest

from brwre.brw import RunRecord
from brwre.cli import main
from brwre.env import load_environment
from brwre.tilt import CenteringTable, TiltSolution


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen-env", "--dist", "two_point:0.5,0.1,0.2", "--x-min", "-512", "--x-max", "200",
                 "--seed", "3", "--out", str(d / "env.json")]) == 0
    assert main(["tilt", "--dist", "two_point:1.0,0.1,0.2", "--M", "512", "--env-samples", "4",
                 "--out", str(d / "tilt.json")]) == 0
    return d


def test_pipeline(workdir, capsys):
    d = workdir
    env = load_environment(d / "env.json")
    assert env.x_min == -512 and env.seed == 3
    tilt = TiltSolution.load(d / "tilt.json")
    assert "v0=" in capsys.readouterr().out or tilt.v0 > 0
    assert main(["centering", "--env", str(d / "env.json"), "--tilt", str(d / "tilt.json"), "--n", "32",
                 "--out", str(d / "tab.json")]) == 0
    assert CenteringTable.load(d / "tab.json").n == 32
    assert main(["pn", "--table", str(d / "tab.json"), "--all", "--reps", "5000", "--out", str(d / "pn.json")]) == 0
    pn = json.loads((d / "pn.json").read_text())
    assert len(pn["p_hat"]) == 33 and pn["p_hat"][0] == 1.0
    assert main(["pn", "--table", str(d / "tab.json"), "--n", "16", "--reps", "5000",
                 "--out", str(d / "p16.json")]) == 0
    assert 0 < json.loads((d / "p16.json").read_text())["p_hat"] < 1
    assert main(["centering-assemble", "--table", str(d / "tab.json"), "--pn", str(d / "pn.json"),
                 "--out", str(d / "m.csv")]) == 0
    assert (d / "m.csv").read_text().splitlines()[0] == "k,K_k,W_k,p_hat_k,m_k"


def test_simulate(workdir):
    d = workdir
    out = d / "run.json"
    assert main(["simulate", "--env", str(d / "env.json"), "--n", "30", "--prune", "24", "--seed", "5",
                 "--out", str(out)]) == 0
    rec = RunRecord.load(out)
    assert rec.n_target == 30 and rec.prune_window == 24
    assert main(["simulate", "--env", str(d / "env.json"), "--t-end", "20", "--t-grid", "5,10,20",
                 "--seed", "5", "--out", str(out)]) == 0
    assert len(RunRecord.load(out).M_t) == 3
    assert main(["simulate", "--env", str(d / "env.json"), "--seed", "5", "--out", str(out)]) == 2


def test_simulate_abort_writes_partial_record(workdir):
    d = workdir
    out = d / "abort.json"
    assert main(["simulate", "--env", str(d / "env.json"), "--t-end", "80", "--prune", "inf",
                 "--pop-cap", "100", "--seed", "1", "--out", str(out)]) == 2
    assert RunRecord.load(out).status == "population cap exceeded"


def test_rw_barrier(workdir):
    d = workdir
    (d / "prof.json").write_text(json.dumps({"values": [-1e9] * 11}))
    env = ["--env", str(d / "env.json"), "--tilt", str(d / "tilt.json")]
    assert main(["rw-barrier", *env, "--profile", str(d / "prof.json"), "--y", "0", "--reps", "200",
                 "--out", str(d / "rw.json")]) == 0
    assert json.loads((d / "rw.json").read_text())["p_hat"] == 1.0


def test_experiment_exit_code(workdir, capsys):
    d = workdir
    cfg = d / "mt1.json"
    cfg.write_text(json.dumps({"mt1_cases": 1, "mt1_reps_brw": 2000, "mt1_reps_rw": 2000}))
    code = main(["experiment", "mt1", "--config", str(cfg), "--out", str(d / "mt1.csv")])
    out = capsys.readouterr().out
    assert "mt1:z_max:" in out
    assert code == (0 if "PASS" in out else 1)
    assert (d / "mt1.csv").exists() and (d / "mt1.csv.summary.json").exists()


def test_bad_inputs_exit_2(workdir, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["centering", "--env", str(bad), "--tilt", str(workdir / "tilt.json"), "--n", "5",
                 "--out", str(tmp_path / "x.json")]) == 2
    assert main(["gen-env", "--dist", "gamma:1", "--seed", "1", "--out", str(tmp_path / "e.json")]) == 2
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"unknown_key": 1}))
    assert main(["experiment", "mt1", "--config", str(cfg)]) == 2

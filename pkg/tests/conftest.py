import pytest

from brwre.experiments import ExperimentConfig
from brwre.tilt import solve_tilt


@pytest.fixture(scope="session")
def default_tilt():
    """Tilt for the default distribution at the experiment settings (about 40 s)."""
    cfg = ExperimentConfig()
    return solve_tilt(cfg.distribution, M=cfg.tilt_M, env_samples=cfg.tilt_env_samples, seed=cfg.tilt_seed)



_LINES = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for the terminal summary."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(number, ok, detail=""):
        lines.append((number, f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)

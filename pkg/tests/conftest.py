import pytest

from zeroflux.model import make_builtin
from zeroflux.solver import SolverConfig, run


@pytest.fixture(scope="session")
def sed_traj():
    """Batch-sedimentation run shared by the entropy and acceptance tests (n=400, t_end=1)."""
    problem = make_builtin("batch_sedimentation")
    return run(problem, SolverConfig.uniform(1.0, 51), 400)


@pytest.fixture(scope="session")
def heat_traj():
    problem = make_builtin("heat")
    return run(problem, SolverConfig.uniform(1.0, 41), 100)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import pytest

from atomcpd.harness import run_exp2, run_experiment

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def exp2_50():
    """Fifty seeds of the sparse-blocks experiment (shared by several tests)."""
    return run_exp2(seed=2024, trials=50)


@pytest.fixture(scope="session")
def rates_sparse_200():
    """Rate-verification run shared by the recovery-rate and reconstruction criteria."""
    return run_experiment("rates", trials=200, seed=7, family="sparse", n=500, p_or_d=200, r=1.5, sparsity=5)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import pytest

from ckn_varcrit import ProblemParams, disk_mesh_level, solve_lambda1, solve_mu2

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def vparams():
    """Dirichlet Laplacian on the unit disk with a cubic nonlinearity."""
    return ProblemParams(p=2.0, a=0.0, b=0.0, c=2.0, q=4.0, mode="validation")


@pytest.fixture(scope="session")
def pparams():
    return ProblemParams(p=1.5, a=0.2, b=0.2, c=0.5, q=3.0, mode="paper")


@pytest.fixture(scope="session")
def mesh3():
    return disk_mesh_level(1.0, 3, 1.0)


@pytest.fixture(scope="session")
def mesh4():
    return disk_mesh_level(1.0, 4, 1.0)


@pytest.fixture(scope="session")
def graded3():
    return disk_mesh_level(1.0, 3, 2.0)


@pytest.fixture(scope="session")
def eig3(vparams, mesh3):
    e1 = solve_lambda1(vparams, mesh3)
    e2, loop = solve_mu2(vparams, mesh3, e1)
    return e1, e2, loop


@pytest.fixture(scope="session")
def eig4(vparams, mesh4):
    e1 = solve_lambda1(vparams, mesh4)
    e2, loop = solve_mu2(vparams, mesh4, e1)
    return e1, e2, loop

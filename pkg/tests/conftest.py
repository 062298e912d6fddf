import math

import pytest
from hypothesis import settings

from sturm_osc.problem import BoundaryCondition, Problem, sine_problem
from sturm_osc.spectrum import compute_spectrum

settings.register_profile("default", deadline=None)
settings.load_profile("default")

SINE_TEXT = """\
interval = [0, 3.141592653589793]
K = "1"
G = "1"
L = "1"
bc_left = dirichlet
bc_right = dirichlet
"""


@pytest.fixture(scope="session")
def sine():
    return sine_problem()


@pytest.fixture(scope="session")
def sine_spec():
    return compute_spectrum(sine_problem(), 20)


@pytest.fixture(scope="session")
def neumann():
    n = BoundaryCondition.neumann()
    return sine_problem(n, n)


@pytest.fixture(scope="session")
def neumann_spec(neumann):
    return compute_spectrum(neumann, 6)


@pytest.fixture(scope="session")
def bumpy():
    """Variable coefficients, Robin left end, Dirichlet right end."""
    return Problem.from_strings(
        0.0,
        1.0,
        "1+0.3*sin(5*x+1)",
        "1+0.2*cos(3*x)",
        "1+0.1*x",
        BoundaryCondition.robin(0.7),
        BoundaryCondition.dirichlet(),
    )


@pytest.fixture(scope="session")
def bumpy_spec(bumpy):
    return compute_spectrum(bumpy, 8)


@pytest.fixture
def sine_file(tmp_path):
    path = tmp_path / "sine.toml"
    path.write_text(SINE_TEXT)
    return path


HALF_PI = math.pi / 2


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

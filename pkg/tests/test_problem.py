import math

import numpy as np
import pytest

from sturm_osc.errors import MissingKey, NegativeL, PositivityViolation, ProblemError, ProblemFileError
from sturm_osc.problem import (
    WEAK_MARGIN,
    BoundaryCondition,
    Problem,
    Regularity,
    dump_problem,
    load_problem,
    parse_problem,
    validate,
)

from .conftest import SINE_TEXT


def test_constants_are_valid(sine):
    rep = validate(sine)
    assert rep.shift == 0.0
    assert rep.min_K == rep.min_G == rep.min_L == 1.0


def test_negative_l_strong():
    with pytest.raises(NegativeL):
        validate(Problem.from_strings(0, math.pi, L="-1"))


def test_negative_l_weak_shift():
    p = Problem.from_strings(0, math.pi, L="-1", regularity="weak")
    rep = validate(p)
    # dense scan oracle: min of -L/G is 1 everywhere
    dense = np.linspace(0, math.pi, 100_001)
    assert rep.shift == pytest.approx(np.max(1.0 / np.ones_like(dense)) + WEAK_MARGIN, abs=0)


def test_weak_shift_varying():
    p = Problem.from_strings(0, 2, G="1+x", L="x-1", regularity="weak")
    rep = validate(p, grid_points=4097)
    x = np.linspace(0, 2, 4097)
    assert rep.shift == pytest.approx(-np.min((x - 1) / (1 + x)) + WEAK_MARGIN)


def test_strong_problem_accepted_weak_with_zero_shift(bumpy):
    weak = Problem(bumpy.alpha, bumpy.beta, bumpy.K, bumpy.G, bumpy.L, bumpy.bc_left, bumpy.bc_right, "weak")
    assert validate(weak).shift == 0.0


@pytest.mark.parametrize("name, field", [("K", "K"), ("G", "G")])
def test_positivity(name, field):
    kwargs = {field: "x - 1"}
    with pytest.raises(PositivityViolation) as info:
        validate(Problem.from_strings(0, 2, **kwargs))
    assert info.value.name == name


def test_validate_is_deterministic(bumpy):
    assert validate(bumpy, 512) == validate(bumpy, 512)


def test_small_grid_rejected(sine):
    with pytest.raises(ProblemError):
        validate(sine, 32)


def test_degenerate_interval():
    with pytest.raises(ProblemError):
        Problem.from_strings(0, 1e-9)


def test_boundary_conditions():
    assert BoundaryCondition.dirichlet().is_dirichlet
    assert not BoundaryCondition.robin(2.0).is_dirichlet
    with pytest.raises(ProblemError):
        BoundaryCondition.robin(-1.0)
    with pytest.raises(ProblemError):
        BoundaryCondition(float("nan"))


def test_load_canonical(sine_file):
    p = load_problem(sine_file)
    assert (p.alpha, p.beta) == (0.0, math.pi)
    assert p.bc_left.is_dirichlet and p.bc_right.is_dirichlet
    assert p.regularity is Regularity.STRONG


def test_missing_g():
    text = "\n".join(line for line in SINE_TEXT.splitlines() if not line.startswith("G"))
    with pytest.raises(MissingKey) as info:
        parse_problem(text)
    assert info.value.key == "G"


def test_negative_robin_rejected_with_line():
    text = SINE_TEXT.replace("bc_left = dirichlet", "bc_left = robin −1")
    with pytest.raises(ProblemFileError) as info:
        parse_problem(text)
    assert info.value.line == 5


@pytest.mark.parametrize(
    "patch",
    [
        ("K = \"1\"", "K = \"1 +\""),
        ("interval = [0, 3.141592653589793]", "interval = 0..3"),
        ("bc_right = dirichlet", "bc_right = periodic"),
        ("L = \"1\"", "L = \"1\"\nL = \"2\""),
        ("L = \"1\"", "L = \"1\"\nM = \"2\""),
    ],
)
def test_bad_files(patch):
    with pytest.raises(ProblemFileError):
        parse_problem(SINE_TEXT.replace(*patch))


def test_comments_quotes_and_robin():
    text = (
        "# a problem\ninterval = [0, 1]  # unit\nK = 1 + x\nG = '2'\nL = \"1\"\n"
        "bc_left = neumann\nbc_right = robin 1.5\nregularity = weak\n"
    )
    p = parse_problem(text)
    assert p.bc_left.h == 0.0 and p.bc_right.h == 1.5
    assert p.regularity is Regularity.WEAK


def test_dump_round_trip(bumpy):
    assert parse_problem(dump_problem(bumpy)) == bumpy


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_problem(tmp_path / "absent.toml")

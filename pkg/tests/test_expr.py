
import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from sturm_osc.errors import ExprDomainError, ExprSyntaxError, UnknownIdentifier
from sturm_osc.expr import (
    FUNCTIONS,
    BinOp,
    Call,
    Neg,
    Num,
    X,
    derivatives,
    differentiate,
    evaluate,
    parse,
    taylor,
    to_text,
)


def test_literal():
    assert parse("1") == Num(1.0)
    assert evaluate(parse("1"), 7.0) == 1.0


def test_sum_with_function():
    assert evaluate(parse("1 + 0.1*sin(x)"), 0.0) == 1.0


@pytest.mark.parametrize(
    "src, offset",
    [("sin(", 4), ("2x", 1), ("", 0), ("1 +", 3), ("(x", 2), ("x)", 1), ("1 ** 2", 3), ("3 $ 4", 2)],
)
def test_syntax_errors_carry_offsets(src, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse(src)
    assert info.value.offset == offset


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier) as info:
        parse("1 + foo(x)")
    assert info.value.offset == 4
    with pytest.raises(UnknownIdentifier):
        parse("y")


def test_precedence_and_associativity():
    assert evaluate(parse("2^3^2"), 0.0) == 512.0
    assert evaluate(parse("1 - 2 - 3"), 0.0) == -4.0
    assert evaluate(parse("8 / 4 / 2"), 0.0) == 1.0
    assert evaluate(parse("1 + 2*3"), 0.0) == 7.0
    assert evaluate(parse("2^-1"), 0.0) == 0.5
    assert evaluate(parse("-x^2"), 3.0) == 9.0  # unary minus binds first
    assert evaluate(parse("−x"), 2.0) == -2.0
    assert evaluate(parse("1.5e2"), 0.0) == 150.0


def test_evaluate_examples():
    assert evaluate(parse("x^2"), 3.0) == 9.0
    assert evaluate(parse("exp(0)"), 123.0) == 1.0


@pytest.mark.parametrize("src, x", [("1/x", 0.0), ("log(x)", -1.0), ("sqrt(x)", -1.0), ("exp(x)", 1000.0)])
def test_domain_errors(src, x):
    with pytest.raises(ExprDomainError):
        evaluate(parse(src), x)


def test_vector_evaluation():
    x = np.linspace(0.0, 1.0, 5)
    np.testing.assert_allclose(evaluate(parse("x^2 + 1"), x), x**2 + 1)
    with pytest.raises(ExprDomainError):
        evaluate(parse("1/x"), x)


def test_derivative_examples():
    assert evaluate(differentiate(parse("x^2")), 3.0) == pytest.approx(6.0)
    assert evaluate(differentiate(parse("sin(x)")), 0.0) == pytest.approx(1.0)
    assert evaluate(differentiate(parse("1")), 5.0) == 0.0


def test_taylor_matches_mpmath():
    src = "exp(sin(x))*sqrt(1+x^2)/(2+tanh(x)) - log(3+cos(x))^1.5"
    e = parse(src)
    x0 = 0.37

    def f(t):
        return mpmath.exp(mpmath.sin(t)) * mpmath.sqrt(1 + t**2) / (2 + mpmath.tanh(t)) - mpmath.log(
            3 + mpmath.cos(t)
        ) ** 1.5

    mpmath.mp.dps = 40
    ref = mpmath.taylor(f, mpmath.mpf(x0), 6)
    got = taylor(e, x0, 6)
    for k in range(7):
        assert got[k] == pytest.approx(float(ref[k]), rel=1e-10, abs=1e-13)


def test_derivatives_integer_power():
    d = derivatives(parse("(1+x)^5"), 1.0, 6)
    expected = [32, 80, 160, 240, 240, 120, 0]
    np.testing.assert_allclose(d, expected, rtol=1e-12, atol=1e-10)


# --- random trees --------------------------------------------------------------

leaves = st.one_of(
    st.just(X),
    st.floats(min_value=-3, max_value=3, allow_nan=False).map(lambda v: Num(round(v, 3))),
)


def _extend(children):
    return st.one_of(
        st.builds(Neg, children),
        st.builds(BinOp, st.sampled_from("+-*/"), children, children),
        st.builds(BinOp, st.just("^"), children, st.integers(0, 4).map(lambda n: Num(float(n)))),
        st.builds(Call, st.sampled_from(FUNCTIONS), children),
    )


def _depth(e):
    if isinstance(e, (Num,)) or e is X:
        return 0
    if isinstance(e, Neg):
        return 1 + _depth(e.arg)
    if isinstance(e, Call):
        return 1 + _depth(e.arg)
    if isinstance(e, BinOp):
        return 1 + max(_depth(e.left), _depth(e.right))
    return 0


trees = st.recursive(leaves, _extend, max_leaves=12).filter(lambda e: _depth(e) <= 6)


def fd_check(e, x, h=1e-5):
    """Return (exact, centred difference) or None where the tree is not smooth at x."""
    try:
        xs = np.array([x - 2e-3, x - h, x, x + h, x + 2e-3])
        vals = evaluate(e, xs)
        exact = float(evaluate(differentiate(e), x))
        jets = np.asarray(derivatives(e, np.array([x - h, x, x + h]), 3))
    except ExprDomainError:
        return None
    bounded = np.all(np.abs(vals) <= 1e6) and np.all(np.abs(jets) <= 1e6)
    if not bounded:  # also rejects nan
        return None
    # a kink inside the stencil shows up as a derivative jump the jets cannot explain
    jump = jets[1, 2] - jets[1, 0] - 2 * h * jets[2, 1]
    if abs(jump) > 1e-6 * (1 + abs(exact)):
        return None
    return exact, (vals[3] - vals[1]) / (2 * h)


@settings(max_examples=1000)
@given(trees, st.floats(min_value=-2.0, max_value=2.0))
def test_random_tree_derivative_vs_finite_difference(e, x):
    out = fd_check(e, x)
    assume(out is not None)
    exact, fd = out
    assert abs(exact - fd) <= 1e-5 * (1 + abs(exact))


@settings(max_examples=300)
@given(trees)
def test_parse_print_parse_idempotent(e):
    once = parse(to_text(e))
    assert parse(to_text(once)) == once
    assert to_text(once) == to_text(e)


@settings(max_examples=300)
@given(trees, st.floats(min_value=-2.0, max_value=2.0))
def test_printed_tree_evaluates_identically(e, x):
    try:
        a = evaluate(e, x)
    except ExprDomainError:
        return
    assert evaluate(parse(to_text(e)), x) == a

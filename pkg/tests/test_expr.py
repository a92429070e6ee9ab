import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from periodica.expr import Expression, ExpressionError, state_function, time_function


@pytest.mark.parametrize("src, value", [
    ("1 + 2 * 3", 7.0),
    ("2 ^ 3 ^ 2", 512.0),
    ("-2 ^ 2", -4.0),
    ("sin(pi / 2) + cos(0) + exp(0)", 3.0),
    ("(1 + 2) / 4", 0.75),
    ("e", math.e),
])
def test_constant_expressions(src, value):
    assert Expression(src)(t=0.0) == pytest.approx(value)


def test_time_function_vectorises():
    fn = time_function("sin(2*pi*t)")
    t = np.linspace(0, 1, 5)
    np.testing.assert_allclose(fn(t), np.sin(2 * np.pi * t), atol=1e-15)
    assert time_function("3")(t).shape == t.shape


def test_state_function_aliases_x_in_1d():
    X = np.array([[1.0], [2.0]])
    np.testing.assert_allclose(state_function("-x^3 + x_1", 1)(0.0, X), [0.0, -6.0])
    X2 = np.array([[1.0, 2.0]])
    np.testing.assert_allclose(state_function("x_1 * x_2 + t", 2)(0.5, X2), [2.5])


@pytest.mark.parametrize("src", [
    "__import__('os')", "x.real", "lambda: 1", "[1]", "foo(1)", "sin(1, 2)", "y + 1", "", "1 +", "True",
])
def test_rejected(src):
    with pytest.raises(ExpressionError):
        Expression(src, ("t", "x"))


def test_missing_variable():
    with pytest.raises(ExpressionError):
        Expression("t + 1")()


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_arithmetic_matches_python(a, b):
    got = Expression("a * b - a / (abs(b) + 1)", ("a", "b"))(a=a, b=b)
    assert got == pytest.approx(a * b - a / (abs(b) + 1), rel=1e-12, abs=1e-12)

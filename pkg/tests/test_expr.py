import numpy as np
import pytest

from mokit.errors import ExpressionError
from mokit.expr import compile_expr


def test_arithmetic_and_caret_power():
    f = compile_expr("2 + x^2")
    np.testing.assert_allclose(f(np.array([0.0, 0.5, 1.0])), [2.0, 2.25, 3.0])


def test_constant_expression_broadcasts():
    f = compile_expr("3")
    assert f.is_constant
    np.testing.assert_array_equal(f(np.zeros(4)), [3.0] * 4)


def test_two_dimensional_coordinates():
    f = compile_expr("x*y + 1")
    pts = np.array([[0.5, 0.5], [1.0, 2.0]])
    np.testing.assert_allclose(f(pts), [1.25, 3.0])


def test_conditionals_and_indicator():
    f = compile_expr("ind((x > 0.3) and (x < 0.6))")
    np.testing.assert_array_equal(f(np.array([0.2, 0.4, 0.7])), [0.0, 1.0, 0.0])
    g = compile_expr("1 if x < 0.5 else 2")
    np.testing.assert_array_equal(g(np.array([0.1, 0.9])), [1.0, 2.0])
    h = compile_expr("where(x >= 0, 2, 4)")
    np.testing.assert_array_equal(h(np.array([-0.5, 0.5])), [4.0, 2.0])


def test_functions():
    f = compile_expr("exp(log(x)) + sqrt(abs(-x)) + min(x, 0) + max(x, 0)")
    np.testing.assert_allclose(f(np.array([4.0])), [4 + 2 + 0 + 4])


def test_s_variable_only_when_allowed():
    f = compile_expr("x + s", ("x", "y", "s"))
    np.testing.assert_allclose(f(np.array([1.0]), 2.0), [3.0])
    with pytest.raises(ExpressionError):
        compile_expr("x + s")


@pytest.mark.parametrize("src", [
    "__import__('os')", "x.real", "[1, 2]", "lambda: 1", "foo(x)", "z + 1", "x +",
    "open('f')",
])
def test_rejects_outside_grammar(src):
    with pytest.raises(ExpressionError):
        compile_expr(src)

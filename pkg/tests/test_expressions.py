"""
Unit tests for the coefficient expression language.
"""

import math
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from jetlab.errors import EvalError, ExpressionSyntaxError, InvalidCoefficient
from jetlab.expressions import (
    Coefficient, MatrixCoefficient, jet_environment, parse_expression, tokenize,
)
from jetlab.models import Domain, GridFunction

ENV = {"x1": 0.7, "x2": -1.3}


def _leaf():
    numbers = st.floats(min_value=-5, max_value=5, allow_nan=False).map(
        lambda v: (repr(abs(v)), lambda env, v=abs(v): v))
    names = st.sampled_from(sorted(ENV)).map(lambda name: (name, lambda env, name=name: env[name]))
    return st.one_of(numbers, names)


def _extend(children):
    binary = st.tuples(st.sampled_from(["+", "-", "*"]), children, children).map(
        lambda t: (f"({t[1][0]} {t[0]} {t[2][0]})",
                   {"+": lambda env, a=t[1][1], b=t[2][1]: a(env) + b(env),
                    "-": lambda env, a=t[1][1], b=t[2][1]: a(env) - b(env),
                    "*": lambda env, a=t[1][1], b=t[2][1]: a(env) * b(env)}[t[0]]))
    unary = st.tuples(st.sampled_from(["sin", "cos", "abs", "-"]), children).map(
        lambda t: (f"{t[0]}({t[1][0]})" if t[0] != "-" else f"-({t[1][0]})",
                   {"sin": lambda env, a=t[1][1]: math.sin(a(env)),
                    "cos": lambda env, a=t[1][1]: math.cos(a(env)),
                    "abs": lambda env, a=t[1][1]: abs(a(env)),
                    "-": lambda env, a=t[1][1]: -a(env)}[t[0]]))
    extrema = st.tuples(st.sampled_from(["min", "max"]), children, children).map(
        lambda t: (f"{t[0]}({t[1][0]}, {t[2][0]})",
                   {"min": lambda env, a=t[1][1], b=t[2][1]: min(a(env), b(env)),
                    "max": lambda env, a=t[1][1], b=t[2][1]: max(a(env), b(env))}[t[0]]))
    return st.one_of(binary, unary, extrema)


EXPRESSIONS = st.recursive(_leaf(), _extend, max_leaves=12)


class TestParser(unittest.TestCase):
    """Test parsing and evaluation."""

    def test_polynomial(self):
        """Test x1^2 + x2^2 at (1, 2) is 5."""
        self.assertEqual(float(parse_expression("x1^2 + x2^2")(x1=1.0, x2=2.0)), 5.0)

    def test_max_of_gradient(self):
        """Test max(p1, 0) at p = (-3, 7) is 0."""
        self.assertEqual(float(parse_expression("max(p1, 0)")(p1=-3.0, p2=7.0)), 0.0)

    def test_invalid_token_position(self):
        """Test 'det-like' fails at column 4 expecting '('."""
        with self.assertRaises(ExpressionSyntaxError) as ctx:
            parse_expression("det-like")
        self.assertEqual(ctx.exception.line, 1)
        self.assertEqual(ctx.exception.col, 4)
        self.assertEqual(ctx.exception.expected, ["("])

    def test_unknown_function(self):
        """Test an unknown function call reports its head position."""
        with self.assertRaises(ExpressionSyntaxError) as ctx:
            parse_expression("1 + det(x1)")
        self.assertEqual(ctx.exception.col, 5)
        self.assertIn("sqrt", ctx.exception.expected)

    def test_syntax_errors(self):
        """Test unbalanced input and bad characters."""
        for source in ("(x1 + 2", "x1 +", "x1 $ 2", "sin(x1, x2)", "max(x1)", ""):
            with self.assertRaises(ExpressionSyntaxError, msg=source):
                parse_expression(source)

    def test_multiline_positions(self):
        """Test positions are tracked across lines."""
        tokens = tokenize("x1 +\n  x2")
        self.assertEqual((tokens[2].line, tokens[2].col), (2, 3))
        with self.assertRaises(ExpressionSyntaxError) as ctx:
            parse_expression("x1 +\n  )")
        self.assertEqual((ctx.exception.line, ctx.exception.col), (2, 3))

    def test_precedence(self):
        """Test ^ binds tighter than unary minus and is right-associative."""
        self.assertEqual(float(parse_expression("-2^2")()), -4.0)
        self.assertEqual(float(parse_expression("2^3^2")()), 512.0)
        self.assertEqual(float(parse_expression("1 - 2 - 3")()), -4.0)
        self.assertEqual(float(parse_expression("8 / 4 / 2")()), 1.0)

    def test_evaluation_errors(self):
        """Test division by zero, sqrt of a negative and unbound variables."""
        with self.assertRaises(EvalError):
            parse_expression("1 / (x1 - x1)")(x1=2.0)
        with self.assertRaises(EvalError):
            parse_expression("sqrt(x1)")(x1=-1.0)
        with self.assertRaises(EvalError):
            parse_expression("x1 + x2")(x1=1.0)

    def test_vectorized(self):
        """Test evaluation broadcasts over arrays."""
        values = parse_expression("exp(x1) * cos(x2)")(x1=np.zeros(3), x2=np.array([0.0, np.pi, 0.0]))
        np.testing.assert_allclose(values, [1.0, -1.0, 1.0])

    @settings(max_examples=1000, deadline=None)
    @given(EXPRESSIONS)
    def test_print_parse_fixpoint(self, case):
        """Test parse(print(parse(s))) prints identically."""
        source, _ = case
        printed = parse_expression(source).to_source()
        self.assertEqual(parse_expression(printed).to_source(), printed)

    @settings(max_examples=1000, deadline=None)
    @given(EXPRESSIONS)
    def test_agrees_with_recursive_oracle(self, case):
        """Test the numpy evaluator against a plain recursive float evaluator."""
        source, oracle = case
        expected = oracle(ENV)
        value = float(parse_expression(source).evaluate(ENV))
        self.assertTrue(math.isclose(value, expected, rel_tol=1e-12, abs_tol=1e-12),
                        f"{source}: {value} != {expected}")


class TestCoefficients(unittest.TestCase):
    """Test coefficient fields."""

    def test_number_and_string(self):
        """Test constant and expression coefficients."""
        x = np.array([[1.0, 2.0], [0.0, 0.5]])
        np.testing.assert_allclose(Coefficient.parse(3, 2)(x), [3.0, 3.0])
        f = Coefficient.parse("1 + x1 * x2", 2)
        np.testing.assert_allclose(f(x), [3.0, 1.0])
        self.assertTrue(f.depends_on_x)
        self.assertFalse(Coefficient.parse(1.5, 2).depends_on_x)

    def test_variable_outside_dimension(self):
        """Test x3 is refused in dimension 2."""
        with self.assertRaises(InvalidCoefficient):
            Coefficient.parse("x3", 2)

    def test_gradient_coefficient(self):
        """Test g(p) coefficients read the gradient slot."""
        g = Coefficient.parse("max(p1, 0)", 2)
        np.testing.assert_allclose(g(p=np.array([[-3.0, 7.0], [2.0, 0.0]])), [0.0, 2.0])

    def test_grid_coefficient_interpolates(self):
        """Test a GridFunction coefficient is multilinear between nodes."""
        domain = Domain.unit(2, 0.5)
        grid = GridFunction.from_function(domain, lambda x: x[..., 0] + 2 * x[..., 1])
        c = Coefficient.parse(grid, 2)
        self.assertAlmostEqual(float(c(np.array([0.25, 0.75]))), 1.75)

    def test_matrix_coefficient(self):
        """Test matrix fields are symmetric and broadcast."""
        M = MatrixCoefficient.parse([["x1", 1], [1, 0]], 2)
        values = M(np.array([[2.0, 0.0], [3.0, 1.0]]))
        self.assertEqual(values.shape, (2, 2, 2))
        self.assertEqual(values[1, 0, 0], 3.0)
        np.testing.assert_array_equal(values, np.swapaxes(values, -1, -2))
        np.testing.assert_array_equal(MatrixCoefficient.parse(None, 2)(np.zeros(2)), np.zeros((2, 2)))
        with self.assertRaises(InvalidCoefficient):
            MatrixCoefficient.parse([[1, 0]], 2)

    def test_jet_environment(self):
        """Test environment binding names."""
        env = jet_environment(np.array([1.0, 2.0]), np.array([3.0, 4.0]), np.array(5.0))
        self.assertEqual(sorted(env), ["p1", "p2", "r", "x1", "x2"])


if __name__ == '__main__':
    unittest.main()

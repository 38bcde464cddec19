import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridopt import (
    ActionSet,
    ExprError,
    NumericalError,
    UsageError,
    dirac,
    evaluate,
    mixture,
    parse,
    to_source,
    variables,
)
from hybridopt.expr import Binary, Call, MomentOf, Num, Unary, Var


class TestGrammar:
    def test_moment_and_unary(self):
        node = parse("-x1 + 0.5*mu_m(1,0)")
        assert node == Binary(
            "+",
            Unary("-", Var("x1")),
            Binary("*", Num(0.5), MomentOf("mu", 1, 0)),
        )

    def test_power_right_associative(self):
        assert evaluate(parse("2^3^2"), {}) == 512.0

    def test_unary_binds_below_power(self):
        assert evaluate(parse("-2^2"), {}) == -4.0

    def test_syntax_error_position(self):
        with pytest.raises(ExprError) as err:
            parse("x1 +")
        assert err.value.column == 5

    def test_unknown_identifier(self):
        with pytest.raises(ExprError, match="unknown identifier"):
            parse("x1 + bogus")

    def test_unknown_function(self):
        with pytest.raises(ExprError, match="unknown function"):
            parse("tan(x1)")

    def test_arity_mismatch(self):
        with pytest.raises(ExprError, match="exactly 1 argument"):
            parse("exp(x1, x2)")
        with pytest.raises(ExprError, match="exactly 2 arguments"):
            parse("min(x1)")

    def test_moment_args_must_be_integer_literals(self):
        with pytest.raises(ExprError, match="integer literal"):
            parse("mu_m(x1, 0)")
        with pytest.raises(ExprError, match="integer literal"):
            parse("mu_m(1.5, 0)")

    def test_variables(self):
        node = parse("t + x2*i + nu_m(2,0)")
        assert variables(node) == {"t", "x2", "i", "nu"}


class TestEvaluate:
    def test_square(self):
        assert evaluate(parse("x1*x1"), {"x": np.array([3.0])}) == 9.0

    def test_moment(self, unit_interval):
        m = mixture([dirac(unit_interval, [0.0]), dirac(unit_interval, [1.0])], [0.5, 0.5])
        assert evaluate(parse("mu_m(1,0)"), {"mu": m}) == 0.5

    def test_exp(self):
        assert evaluate(parse("exp(-t)"), {"t": 1.0}) == 0.36787944117144233

    def test_min_max_abs_sqrt(self):
        env = {"x": np.array([-2.0, 3.0])}
        assert evaluate(parse("min(x1, x2)"), env) == -2.0
        assert evaluate(parse("max(abs(x1), sqrt(x2 + 1))"), env) == 2.0

    def test_vectorized(self):
        out = evaluate(parse("x1 + i"), {"x": np.array([[1.0], [2.0]]), "i": np.array([1.0, 2.0])})
        assert out.tolist() == [2.0, 4.0]

    def test_division_by_zero(self):
        with pytest.raises(NumericalError, match="division by zero"):
            evaluate(parse("1/(x1 - 1)"), {"x": np.array([1.0])})

    def test_log_domain(self):
        with pytest.raises(NumericalError, match="log"):
            evaluate(parse("log(x1)"), {"x": np.array([-1.0])})

    def test_sqrt_domain(self):
        with pytest.raises(NumericalError, match="sqrt"):
            evaluate(parse("sqrt(x1)"), {"x": np.array([-1.0])})

    def test_missing_variable(self):
        with pytest.raises(UsageError, match="references 't'"):
            evaluate(parse("t + 1"), {})

    def test_moment_free_ignores_measures(self, unit_interval):
        node = parse("x1 + t")
        env = {"x": np.array([1.0]), "t": 2.0}
        with_measure = dict(env, mu=dirac(unit_interval, [0.3]))
        assert evaluate(node, env) == evaluate(node, with_measure) == 3.0


def _leaf():
    return st.one_of(
        st.floats(min_value=0.0, max_value=100.0, allow_nan=False).map(Num),
        st.sampled_from(["t", "i", "x1", "x2"]).map(Var),
        st.tuples(st.sampled_from(["mu", "nu"]), st.integers(0, 3), st.integers(0, 1)).map(
            lambda v: MomentOf(*v)
        ),
    )


def _node(children):
    return st.one_of(
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda v: Binary(*v)),
        children.map(lambda c: Unary("-", c)),
        st.tuples(st.sampled_from(["exp", "sin", "cos", "abs"]), children).map(
            lambda v: Call(v[0], (v[1],))
        ),
        st.tuples(st.sampled_from(["min", "max"]), children, children).map(
            lambda v: Call(v[0], (v[1], v[2]))
        ),
    )


class TestRoundTrip:
    @settings(max_examples=200, deadline=None)
    @given(st.recursive(_leaf(), _node, max_leaves=20))
    def test_print_parse_fixed_point(self, node):
        printed = to_source(node)
        reparsed = parse(printed)
        assert reparsed == node
        assert to_source(reparsed) == printed

    def test_examples(self):
        for src in ["-x1 + 0.5*mu_m(1, 0)", "2.0^3.0^2.0", "min(x1, max(t, i))", "-(x1 + 1.0)"]:
            assert to_source(parse(src)) == src

import math

import numpy as np
import pytest

from simbarrier import expr as ex
from simbarrier.interval import Interval

from conftest import rand_expr


class TestParse:
    def test_grammar_forced_structure(self):
        e = ex.parse("-sin(x) - y", ["x", "y"])
        assert e == ex.Sub(ex.Neg(ex.Sin(ex.Var(0))), ex.Var(1))

    def test_power_plus_constant(self):
        e = ex.parse("x^2 + 1", ["x"])
        assert e == ex.Add(ex.Pow(ex.Var(0), 2), ex.Const(1.0))

    def test_incomplete_expression_reports_position(self):
        with pytest.raises(ex.ParseError) as err:
            ex.parse("x +", ["x"])
        assert err.value.position == 3

    def test_unknown_identifier(self):
        with pytest.raises(ex.ParseError, match="unknown identifier"):
            ex.parse("x + q", ["x"])

    def test_negative_exponent_rejected(self):
        with pytest.raises(ex.ParseError):
            ex.parse("x^y", ["x", "y"])

    def test_precedence(self):
        vars_ = ["x", "y"]
        assert ex.evaluate(ex.parse("2 + 3*4", vars_), [0, 0]) == 14
        assert ex.evaluate(ex.parse("-x^2", vars_), [3, 0]) == -9
        assert ex.evaluate(ex.parse("2*3 - 4/2", vars_), [0, 0]) == 4
        assert ex.evaluate(ex.parse("1.5e2 + 1", vars_), [0, 0]) == 151.0

    def test_parse_print_parse_idempotent(self, rng):
        # parse of printed text is a fixed point of print-then-parse
        vars_ = ["x", "y", "z"]
        for _ in range(300):
            e = rand_expr(rng, 3, 4)
            parsed = ex.parse(ex.to_text(e, vars_), vars_)
            text = ex.to_text(parsed, vars_)
            assert ex.parse(text, vars_) == parsed
            assert ex.to_text(ex.parse(text, vars_), vars_) == text


class TestEvaluate:
    def test_trivial_values(self):
        assert ex.evaluate(ex.parse("sin(x)", ["x"]), [0.0]) == 0.0
        assert ex.evaluate(ex.parse("ln(x^2 + 1)", ["x"]), [0.0]) == 0.0
        pend = ex.parse("-sin(x) - y", ["x", "y"])
        assert ex.evaluate(pend, [0.0, 0.0]) == 0.0

    def test_domain_errors_raise(self):
        with pytest.raises(ex.DomainError):
            ex.evaluate(ex.parse("ln(x)", ["x"]), [-1.0])
        with pytest.raises(ex.DomainError):
            ex.evaluate(ex.parse("1/x", ["x"]), [0.0])
        with pytest.raises(ex.DomainError):
            ex.evaluate(ex.parse("sqrt(x)", ["x"]), [-4.0])

    def test_compiled_matches_tree_walk(self, rng):
        for _ in range(200):
            e = rand_expr(rng, 2, 4)
            fn = ex.compile_expr(e)
            pt = list(rng.uniform(-1.5, 1.5, 2))
            want = ex.evaluate(e, pt)
            assert fn(pt) == pytest.approx(want, rel=1e-12, abs=1e-12)


class TestDifferentiate:
    @pytest.mark.parametrize("text,var,point,expected", [
        ("sin(x)", 0, [0.7], math.cos(0.7)),
        ("x^2*y", 0, [3.0, 5.0], 30.0),
        ("ln(x^2 + 1)", 0, [2.0], 4.0 / 5.0),
    ])
    def test_calculus_identities(self, text, var, point, expected):
        vars_ = ["x", "y"][: len(point)]
        d = ex.differentiate(ex.parse(text, vars_), var)
        assert ex.evaluate(d, point) == pytest.approx(expected, rel=1e-12)

    def test_sin_derivative_shape(self):
        d = ex.differentiate(ex.parse("sin(x)", ["x"]), 0)
        assert d == ex.Cos(ex.Var(0))

    def test_matches_central_differences(self, rng):
        # 1000 random expressions, the gradient-correctness bound
        h = 1e-5
        checked = 0
        for _ in range(1000):
            e = rand_expr(rng, 2, 3)
            var = int(rng.integers(2))
            d = ex.differentiate(e, var)
            pt = rng.uniform(-1.0, 1.0, 2)
            lo = pt.copy()
            hi = pt.copy()
            lo[var] -= h
            hi[var] += h
            f_hi = ex.evaluate(e, hi)
            f_lo = ex.evaluate(e, lo)
            sym = ex.evaluate(d, pt)
            if max(abs(f_hi), abs(f_lo), abs(sym)) > 1e3:
                continue  # wild third derivatives break the h^2 estimate
            cd = (f_hi - f_lo) / (2 * h)
            assert abs(sym - cd) <= 1e-5 * (1.0 + abs(sym))
            checked += 1
        assert checked >= 900


class TestIntervalEval:
    def test_square_enclosure(self):
        r = ex.interval_eval(ex.parse("x^2", ["x"]), [Interval(-2, 1)])
        assert r.lo <= 0.0 and r.hi >= 4.0
        assert r.hi - r.lo <= 4.0 + 1e-9

    def test_dependency_is_naive(self):
        r = ex.interval_eval(ex.parse("x - x", ["x"]), [Interval(0, 1)])
        assert r.lo <= -1.0 and r.hi >= 1.0
        assert r.hi - r.lo <= 2.0 + 1e-9

    def test_sine_range(self):
        r = ex.interval_eval(ex.parse("sin(x)", ["x"]), [Interval(0, math.pi)])
        assert r.lo <= 0.0 and r.hi >= 1.0

    def test_singularity_returns_undefined(self):
        assert ex.interval_eval(ex.parse("ln(x)", ["x"]), [Interval(-1, 1)]) is None
        assert ex.interval_eval(ex.parse("1/x", ["x"]), [Interval(-1, 1)]) is None

    def test_soundness_1000_random_triples(self, rng):
        for _ in range(1000):
            e = rand_expr(rng, 2, 4)
            center = rng.uniform(-2, 2, 2)
            half = rng.uniform(0, 0.5, 2)
            box = [Interval(c - w, c + w) for c, w in zip(center, half)]
            enc = ex.interval_eval(e, box)
            assert enc is not None  # generator keeps expressions total
            pt = [rng.uniform(b.lo, b.hi) for b in box]
            assert ex.evaluate(e, pt) in enc

    def test_inclusion_monotonicity(self, rng):
        for _ in range(300):
            e = rand_expr(rng, 2, 4)
            center = rng.uniform(-2, 2, 2)
            half = rng.uniform(0.01, 0.4, 2)
            grow = rng.uniform(0, 0.5, 2)
            inner = [Interval(c - w, c + w) for c, w in zip(center, half)]
            outer = [Interval(b.lo - g, b.hi + g) for b, g in zip(inner, grow)]
            enc_in = ex.interval_eval(e, inner)
            enc_out = ex.interval_eval(e, outer)
            assert enc_out.contains_interval(enc_in)


def test_negated_is_involution():
    e = ex.parse("sin(x) + 1", ["x"])
    assert ex.negated(ex.negated(e)) == e


def test_variables_of():
    e = ex.parse("x*z + sin(y)", ["x", "y", "z"])
    assert ex.variables_of(e) == {0, 1, 2}

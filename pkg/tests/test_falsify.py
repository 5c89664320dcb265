import math

import numpy as np
import pytest

from simbarrier import benchmarks, expr as ex, falsify, model
from simbarrier.falsify import (
    FalsifyConfig,
    find_counterexample,
    min_initial,
    min_reset,
    min_transversality,
    min_unsafe,
    minimize_box,
    segment_margin,
)
from simbarrier.model import Box, ModeDef, Problem, ResetRule, Template

from conftest import line_problem, linear_template_1d, sawtooth_problem


def composition_with_linear_barrier():
    prob = model.load_problem(benchmarks.composition())
    tmpl = model.make_template([[[0, 0, 0], [1, 0, 0]]], 3, 1)
    p = np.array([0.12774317671, -1.0])
    return prob, tmpl, p


class TestMinimizeBox:
    def test_quadratic_reaches_interior_minimum(self, rng):
        lo = np.array([-2.0, -2.0])
        hi = np.array([2.0, 2.0])
        target = np.array([0.7, -0.3])
        f = lambda z: float(np.sum((z - target) ** 2))
        g = lambda z: 2.0 * (z - target)
        z, fz = minimize_box(f, g, lo, hi, np.array([-1.5, 1.5]))
        assert np.allclose(z, target, atol=1e-6)
        assert fz <= 1e-10

    def test_descent_is_monotone(self, rng):
        # every run ends at an objective no worse than its start
        for _ in range(25):
            a = rng.uniform(0.5, 3.0, 3)
            b = rng.uniform(-1, 1, 3)
            f = lambda z: float(a @ (z - b) ** 2 + math.sin(z[0]))
            g = lambda z: 2 * a * (z - b) + np.array([math.cos(z[0]), 0, 0])
            z0 = rng.uniform(-1, 1, 3)
            lo = np.full(3, -1.5)
            hi = np.full(3, 1.5)
            z, fz = minimize_box(f, g, lo, hi, z0)
            assert fz <= f(np.clip(z0, lo, hi)) + 1e-12

    def test_multistart_coverage(self, rng):
        # a known global minimum inside the box is reached by at least one
        # of 16 seeded starts
        target = np.array([0.9, -0.9])
        f = lambda z: float(np.sum((z - target) ** 2))
        g = lambda z: 2.0 * (z - target)
        lo = np.full(2, -1.0)
        hi = np.full(2, 1.0)
        hits = 0
        for _ in range(16):
            z0 = rng.uniform(-1, 1, 2)
            z, fz = minimize_box(f, g, lo, hi, z0)
            if np.linalg.norm(z - target) <= 1e-4:
                hits += 1
        assert hits >= 1


class TestSignSearches:
    def test_initial_closed_form(self):
        prob, tmpl, p = composition_with_linear_barrier()
        (mode, x), value = min_initial(prob, tmpl, p, starts=8, seed=0)
        assert value == pytest.approx(8.87225682329, abs=1e-8)
        assert x[0] == pytest.approx(9.0, abs=1e-8)

    def test_unsafe_closed_form(self):
        prob, tmpl, p = composition_with_linear_barrier()
        (mode, x), value = min_unsafe(prob, tmpl, p, starts=8, seed=0)
        assert value == pytest.approx(9.12774317671, abs=1e-8)
        assert x[0] == pytest.approx(-9.0, abs=1e-8)

    def test_zero_template_gives_zero(self):
        prob, tmpl, _ = composition_with_linear_barrier()
        p0 = np.zeros(tmpl.size)
        _, v_init = min_initial(prob, tmpl, p0, starts=4, seed=0)
        _, v_unsafe = min_unsafe(prob, tmpl, p0, starts=4, seed=0)
        assert v_init == 0.0 and v_unsafe == 0.0

    def test_interior_peak_found_with_grid_oracle(self):
        # V = -(x - c)^2 has -V minimal (zero) at c inside the initial box
        prob = line_problem("1", omega=(-5.0, 5.0), init=(-1.0, 1.0),
                            unsafe=(4.0, 4.5))
        tmpl = Template((((0,), (1,), (2,)),))
        c = 0.25
        p = np.array([-c * c, 2 * c, -1.0])  # -(x - c)^2 expanded
        grid = np.arange(-1.0, 1.0 + 1e-9, 1e-4)
        oracle = min(-(-(g - c) ** 2) for g in grid)
        (mode, x), value = min_initial(prob, tmpl, p, starts=8, seed=1)
        assert value == pytest.approx(oracle, abs=1e-8)
        assert x[0] == pytest.approx(c, abs=1e-5)


class TestTransversality:
    def test_aligned_field(self):
        prob = line_problem("1", omega=(-1.0, 1.0))
        tmpl = linear_template_1d()
        p = np.array([0.0, 1.0])  # V = x, flow +1: worst drift value -1
        (mode, x), d, value = min_transversality(prob, tmpl, p, starts=8, seed=0)
        assert value == pytest.approx(-1.0, abs=1e-8)
        assert abs(model.template_value(tmpl, p, mode, x)) <= 1e-6 * 2

    def test_anti_aligned_field(self):
        prob = line_problem("-1", omega=(-1.0, 1.0))
        tmpl = linear_template_1d()
        p = np.array([0.0, 1.0])
        _, _, value = min_transversality(prob, tmpl, p, starts=8, seed=0)
        assert value == pytest.approx(1.0, abs=1e-8)

    def test_pendulum_horizontal_level_set_with_grid_oracle(self):
        prob = model.load_problem(benchmarks.pendulum())
        tmpl = Template((((0, 0), (0, 1)),))
        p = np.array([-8.9, 1.0])  # V = y - 8.9

        def normalized_drift(x):
            f = np.array([8.9, -math.sin(x) - 8.9])
            g = np.array([0.0, 1.0])
            return -float(g @ f) / np.linalg.norm(f)

        grid = np.arange(-10.0, 10.0 + 1e-9, 1e-3)
        oracle = min(normalized_drift(x) for x in grid)
        assert oracle > 0  # the flow never crosses upward
        _, _, value = min_transversality(prob, tmpl, p, starts=12, seed=0)
        assert value > 0
        assert value >= oracle - 1e-6

    def test_constant_gradient_free_template_fails_cleanly(self):
        prob = line_problem("1")
        tmpl = Template((((0,),),))
        pt, d, value = min_transversality(prob, tmpl, np.array([1.0]),
                                          starts=4, seed=0)
        assert pt is None and value == math.inf


class TestReset:
    def _problem(self):
        return sawtooth_problem()

    def test_no_resets_is_vacuous(self):
        prob = line_problem("1")
        _, value = min_reset(prob, linear_template_1d(), np.array([0.0, 1.0]),
                             starts=4, seed=0)
        assert value == math.inf

    def test_point_guard_values(self):
        prob = self._problem()
        tmpl = linear_template_1d()
        # V = x - 0.5: max(V(1), -V(0)) = max(0.5, 0.5) = 0.5
        _, value = min_reset(prob, tmpl, np.array([-0.5, 1.0]), starts=4, seed=0)
        assert value == pytest.approx(0.5, abs=1e-12)
        # V = x - 2: max(-1, 2) = 2
        _, value = min_reset(prob, tmpl, np.array([-2.0, 1.0]), starts=4, seed=0)
        assert value == pytest.approx(2.0, abs=1e-12)
        # V = -x + 0.5: max(-0.5, -0.5) = -0.5, a violation
        _, value = min_reset(prob, tmpl, np.array([0.5, -1.0]), starts=4, seed=0)
        assert value == pytest.approx(-0.5, abs=1e-12)


class TestFindCounterexample:
    def test_none_when_all_conditions_hold(self):
        prob, tmpl, p = composition_with_linear_barrier()
        assert find_counterexample(prob, tmpl, p,
                                   FalsifyConfig(starts=8, seed=0)) is None

    def test_transversality_violation_builds_long_segment(self):
        prob = line_problem("1", omega=(-1.0, 1.0), init=(-0.9, -0.8),
                            unsafe=(0.8, 0.9))
        tmpl = linear_template_1d()
        p = np.array([0.0, 1.0])  # V = x increases along the flow
        res = find_counterexample(prob, tmpl, p,
                                  FalsifyConfig(starts=8, seed=0, t_max=50.0))
        assert res is not None and res.kind == "transversality"
        seg = res.segment
        assert seg.s[0] == pytest.approx(-1.1, abs=1e-5)
        assert seg.sp[0] == pytest.approx(1.1, abs=1e-5)
        assert segment_margin(prob, tmpl, p, seg) <= 0.0

    def test_initial_violation_hard_row(self):
        # V = x + 0.5 exceeds 1 on the initial box, a worse violation than
        # the normalized drift can ever be
        prob = line_problem("1", omega=(-1.0, 1.0), init=(0.5, 0.75),
                            unsafe=(0.8, 0.9))
        tmpl = linear_template_1d()
        p = np.array([0.5, 1.0])
        res = find_counterexample(prob, tmpl, p,
                                  FalsifyConfig(starts=8, seed=0))
        assert res is not None and res.kind == "initial"
        v_at_start = model.template_value(tmpl, p, res.segment.s_mode,
                                          res.segment.s)
        assert v_at_start >= 0.0
        assert res.segment.s_in_initial
        assert segment_margin(prob, tmpl, p, res.segment) <= 0.0

    def test_reset_violation(self):
        # V = 0.5 - x: negative at the guard, positive at the reset target,
        # and the other three conditions hold on these regions
        prob = sawtooth_problem(init=(0.6, 0.7), unsafe=(-1.8, -1.5))
        tmpl = linear_template_1d()
        p = np.array([0.5, -1.0])
        res = find_counterexample(prob, tmpl, p,
                                  FalsifyConfig(starts=8, seed=0))
        assert res is not None and res.kind == "reset"
        assert segment_margin(prob, tmpl, p, res.segment) <= 0.0

    def test_determinism(self):
        prob = line_problem("1", omega=(-1.0, 1.0), init=(-0.25, 0.25),
                            unsafe=(0.8, 0.9))
        tmpl = linear_template_1d()
        p = np.array([0.5, 1.0])
        cfg = FalsifyConfig(starts=8, seed=123)
        a = find_counterexample(prob, tmpl, p, cfg)
        b = find_counterexample(prob, tmpl, p, cfg)
        assert a.kind == b.kind
        assert np.array_equal(a.x, b.x)
        assert a.value == b.value
        assert a.segment == b.segment

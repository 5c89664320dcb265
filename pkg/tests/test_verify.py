import math

import numpy as np
import pytest

from simbarrier import benchmarks, expr as ex, model
from simbarrier.model import Box, ModeDef, Problem, Template
from simbarrier.verify import VerdictStatus, VerifyConfig, verify

from conftest import line_problem, linear_template_1d, sawtooth_problem


def composition_with_published_barrier():
    prob = model.load_problem(benchmarks.composition())
    tmpl = model.make_template([[[0, 0, 0], [1, 0, 0]]], 3, 1)
    p = np.array([0.12774317671, -1.0])
    return prob, tmpl, p


class TestVerified:
    def test_published_composition_barrier(self):
        prob, tmpl, p = composition_with_published_barrier()
        verdict = verify(prob, tmpl, p)
        assert verdict.status is VerdictStatus.VERIFIED
        assert not verdict.unresolved

    def test_statistical_cross_check(self, rng):
        # 1e5 samples per condition find no violation of a verified result
        prob, tmpl, p = composition_with_published_barrier()
        assert verify(prob, tmpl, p).status is VerdictStatus.VERIFIED
        n = 100_000
        mode, ibox = prob.initial[0]
        lo, hi = np.asarray(ibox.lo), np.asarray(ibox.hi)
        pts = lo + rng.random((n, 3)) * (hi - lo)
        assert np.all(0.12774317671 - pts[:, 0] < 0)
        mode, ubox = prob.unsafe[0]
        lo, hi = np.asarray(ubox.lo), np.asarray(ubox.hi)
        pts = lo + rng.random((n, 3)) * (hi - lo)
        assert np.all(0.12774317671 - pts[:, 0] > 0)
        # drift on the zero level set: project x1 onto the plane
        omega = prob.modes[0].omega
        lo, hi = np.asarray(omega.lo), np.asarray(omega.hi)
        pts = lo + rng.random((n, 3)) * (hi - lo)
        pts[:, 0] = 0.12774317671
        # dV/dt = -dx1/dt = -1 everywhere, by the flow definition
        flow0 = ex.compile_expr(prob.modes[0].flow[0])
        drift = np.array([-flow0(list(x)) for x in pts[:100]])
        assert np.all(drift < 0)

    def test_splitting_instance_with_volume_bookkeeping(self):
        # V = x^2 - 0.25 with flow -x: zero set at +-0.5, drift -2 x^2 < 0
        # there; proving it forces splits around the level set
        prob = line_problem("-x", omega=(-1.0, 1.0), init=(-0.1, 0.1),
                            unsafe=(0.8, 0.9))
        tmpl = Template((((0,), (2,)),))
        p = np.array([-0.25, 1.0])
        verdict = verify(prob, tmpl, p)
        assert verdict.status is VerdictStatus.VERIFIED
        rep3 = verdict.reports[3]
        assert rep3.boxes_split > 0
        assert rep3.volume_covered == pytest.approx(rep3.region_volume,
                                                    rel=1e-9)
        for cond in (1, 2):
            rep = verdict.reports[cond]
            assert rep.volume_covered == pytest.approx(rep.region_volume,
                                                       rel=1e-9)

    def test_reset_condition_proved(self):
        # V = -0.5 - x: negative at the guard x = 1 and still negative at
        # the reset target 0; drift is -1 on the whole zero set
        prob = sawtooth_problem(init=(0.6, 0.7), unsafe=(-1.8, -1.5))
        tmpl = linear_template_1d()
        p = np.array([-0.5, -1.0])
        verdict = verify(prob, tmpl, p)
        assert verdict.reports[4].boxes_verified >= 1
        assert verdict.status is VerdictStatus.VERIFIED


class TestRefuted:
    def test_constant_negative_certificate_fails_on_unsafe(self):
        prob = model.load_problem(benchmarks.pendulum())
        tmpl = Template((((0, 0),),))
        verdict = verify(prob, tmpl, np.array([-1.0]))
        assert verdict.status is VerdictStatus.REFUTED
        assert verdict.condition == 2
        mode, x, _ = verdict.witness
        assert prob.in_unsafe(mode, x)
        # witness replay by plain evaluation
        assert model.template_value(tmpl, np.array([-1.0]), mode, x) <= 0.0

    def test_drift_violation_witness_replay(self):
        prob = line_problem("1", omega=(-1.0, 1.0), init=(-0.9, -0.8),
                            unsafe=(0.8, 0.9))
        tmpl = linear_template_1d()
        p = np.array([0.0, 1.0])  # V = x: zero at 0, drift +1 there
        verdict = verify(prob, tmpl, p)
        assert verdict.status is VerdictStatus.REFUTED
        assert verdict.condition == 3
        mode, x, d = verdict.witness
        assert abs(model.template_value(tmpl, p, mode, x)) <= 1e-9
        g = model.template_grad_x(tmpl, p, mode, x)
        flow = [ex.compile_expr(f) for f in prob.modes[mode].flow]
        f = np.array([fn(list(x) + list(d)) for fn in flow])
        assert float(g @ f) > 0.0

    def test_initial_sign_violation(self):
        prob = line_problem("1", omega=(-1.0, 1.0), init=(0.2, 0.4),
                            unsafe=(0.8, 0.9))
        tmpl = linear_template_1d()
        p = np.array([0.0, 1.0])  # V = x > 0 on the initial box
        verdict = verify(prob, tmpl, p)
        assert verdict.status is VerdictStatus.REFUTED
        assert verdict.condition == 1

    def test_reset_condition_refuted(self):
        prob = sawtooth_problem(init=(0.6, 0.7), unsafe=(-1.8, -1.5))
        tmpl = linear_template_1d()
        p = np.array([0.5, -1.0])  # V = 0.5 - x: V(1) < 0 but V(0) > 0
        verdict = verify(prob, tmpl, p)
        assert verdict.status is VerdictStatus.REFUTED
        assert verdict.condition == 4


class TestUnknown:
    def test_tangent_zero_set_gives_unknown(self):
        # V = x^3 with flow -x: drift -3x^4 <= 0 touches zero exactly on the
        # level set, so strict verification must give up around the origin
        prob = line_problem("-x", omega=(-1.0, 1.0), init=(-0.9, -0.8),
                            unsafe=(0.8, 0.9))
        tmpl = Template((((0,), (3,)),))
        p = np.array([0.0, 1.0])
        verdict = verify(prob, tmpl, p)
        assert verdict.status is VerdictStatus.UNKNOWN
        assert verdict.condition == 3
        assert verdict.unresolved
        assert all(b.lo[0] <= 0.0 <= b.hi[0] or
                   min(abs(b.lo[0]), abs(b.hi[0])) < 0.01
                   for b in verdict.unresolved)
        assert verdict.min_width_reached <= 2 * 1e-4 * 2.0

    def test_domain_error_never_verifies(self):
        # ln(x) is undefined on part of the state space; the certificate
        # cannot be proved there even though it looks fine numerically
        prob = Problem(
            ("x",), (), None,
            (ModeDef("m", Box((-1.0,), (1.0,)),
                     (ex.parse("ln(x^2)", ["x"]),)),),
            (), ((0, Box((-0.9,), (-0.8,))),), ((0, Box((0.8,), (0.9,))),))
        tmpl = linear_template_1d()
        p = np.array([0.0, 1.0])  # zero set at 0 where ln(x^2) blows up
        verdict = verify(prob, tmpl, p)
        assert verdict.status is not VerdictStatus.VERIFIED


class TestMonotoneEffort:
    def test_finer_width_never_flips_verified_to_refuted(self):
        prob, tmpl, p = composition_with_published_barrier()
        for frac in (1e-2, 1e-3, 1e-4):
            verdict = verify(prob, tmpl, p, VerifyConfig(min_width_frac=frac))
            assert verdict.status is VerdictStatus.VERIFIED

    def test_unknown_can_resolve_with_effort(self):
        # coarse splitting gives up; finer splitting proves the instance
        prob = line_problem("-x", omega=(-1.0, 1.0), init=(-0.1, 0.1),
                            unsafe=(0.8, 0.9))
        tmpl = Template((((0,), (2,)),))
        p = np.array([-0.25, 1.0])
        coarse = verify(prob, tmpl, p, VerifyConfig(min_width_frac=0.4))
        fine = verify(prob, tmpl, p, VerifyConfig(min_width_frac=1e-4))
        assert coarse.status in (VerdictStatus.UNKNOWN, VerdictStatus.VERIFIED)
        assert fine.status is VerdictStatus.VERIFIED

"""Counter-example point search and segment construction.

Four objectives are minimized by multi-start projected gradient descent
with analytic gradients: certificate sign on the initial boxes, on the
unsafe boxes, the normalized drift on the certificate's zero level set,
and the reset condition on guard boxes.  A negative minimum yields a
counter-example point, which is extended to a simulation segment through
the forward/backward drift rides; the segment is checked to actually
refute the candidate before it is returned.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import chebyshev, expr as ex, model, sim
from .model import Box, Problem, Segment, Template

_PENALTIES = (1e2, 1e3, 1e4, 1e5, 1e6)
_LEVEL_BAND = 1e-6
_NORM_FLOOR = 1e-12


class RefutationError(RuntimeError):
    """A constructed segment failed to refute the candidate it came from.

    Indicates an event-localization or level-set landing fault; the caller
    should abort rather than loop on a non-progressing constraint system.
    """


@dataclass
class FalsifyConfig:
    starts: int = 16
    seed: int = 0
    eps_ce: float = 1e-9
    bloat_factor: float = 1.1
    t_max: float = 100.0
    rtol: float = sim.DEFAULT_RTOL
    atol: float = sim.DEFAULT_ATOL
    max_iters: int = 200
    grad_tol: float = 1e-8


@dataclass
class CtrxplResult:
    kind: str                     # initial | unsafe | transversality | reset
    mode: int
    x: np.ndarray
    d: np.ndarray | None
    value: float
    segment: Segment | None = None
    search_time: float = 0.0
    sim_time: float = 0.0


def minimize_box(f: Callable[[np.ndarray], float],
                 grad: Callable[[np.ndarray], np.ndarray],
                 lo: np.ndarray, hi: np.ndarray, z0: np.ndarray,
                 max_iters: int = 200, tol: float = 1e-8) -> tuple[np.ndarray, float]:
    """Projected gradient descent with Armijo backtracking on a box.

    Monotone by construction: every accepted step decreases f.
    """
    z = np.clip(z0, lo, hi)
    fz = f(z)
    step = 1.0
    for _ in range(max_iters):
        g = grad(z)
        if not np.all(np.isfinite(g)):
            break
        if np.linalg.norm(z - np.clip(z - g, lo, hi)) <= tol:
            break
        alpha = step
        accepted = False
        for _ in range(60):
            zn = np.clip(z - alpha * g, lo, hi)
            dz = zn - z
            if not np.any(dz):
                break
            fn = f(zn)
            if math.isfinite(fn) and fn <= fz + 1e-4 * float(g @ dz):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        z, fz = zn, fn
        step = min(2.0 * alpha, 1e3)
    return z, fz


def _pick_region(regions: Sequence[tuple[int, Box]],
                 rng: np.random.Generator) -> tuple[int, Box]:
    return regions[int(rng.integers(len(regions)))]


def _best(candidates):
    """Deterministic min-reduction by (value, insertion order)."""
    best = None
    for cand in candidates:
        if best is None or cand[0] < best[0]:
            best = cand
    return best


def min_initial(prob: Problem, tmpl: Template, p: np.ndarray,
                starts: int = 16, seed: int = 0,
                cfg: FalsifyConfig | None = None):
    """Minimize -V over the initial boxes; returns ((mode, x), value)."""
    return _min_sign(prob, tmpl, p, prob.initial, -1.0, starts, seed, cfg)


def min_unsafe(prob: Problem, tmpl: Template, p: np.ndarray,
               starts: int = 16, seed: int = 0,
               cfg: FalsifyConfig | None = None):
    """Minimize V over the unsafe boxes; returns ((mode, x), value)."""
    return _min_sign(prob, tmpl, p, prob.unsafe, 1.0, starts, seed, cfg)


def _min_sign(prob, tmpl, p, regions, sign, starts, seed, cfg):
    cfg = cfg or FalsifyConfig()
    rng = np.random.default_rng(seed)
    results = []
    for _ in range(starts):
        mode, box = _pick_region(regions, rng)
        lo = np.asarray(box.lo)
        hi = np.asarray(box.hi)
        f = lambda x, _m=mode: sign * model.template_value(tmpl, p, _m, x)
        g = lambda x, _m=mode: sign * model.template_grad_x(tmpl, p, _m, x)
        x, fx = minimize_box(f, g, lo, hi, box.sample(rng),
                             cfg.max_iters, cfg.grad_tol)
        results.append((fx, mode, x))
    fx, mode, x = _best(results)
    return (mode, x), fx


class _ModeGeometry:
    """Compiled flow, Jacobians, and drift pieces for one mode."""

    def __init__(self, prob: Problem, tmpl: Template, p: np.ndarray, mode: int):
        self.mode = mode
        self.n = prob.dim
        self.l = prob.n_dist
        mdef = prob.modes[mode]
        total = self.n + self.l
        self.flow = sim.compile_flow(mdef, total)
        self.jac_x = [[ex.compile_expr(ex.differentiate(f, j))
                       for j in range(self.n)] for f in mdef.flow]
        self.jac_d = [[ex.compile_expr(ex.differentiate(f, self.n + j))
                       for j in range(self.l)] for f in mdef.flow]
        self.tmpl = tmpl
        self.p = p

    def value(self, x):
        return model.template_value(self.tmpl, self.p, self.mode, x)

    def grad_v(self, x):
        return model.template_grad_x(self.tmpl, self.p, self.mode, x)

    def hess_v(self, x):
        return model.template_hess_x(self.tmpl, self.p, self.mode, x)

    def f(self, x, d):
        return self.flow(list(x) + list(d))

    def jx(self, x, d):
        vals = list(x) + list(d)
        return np.array([[fn(vals) for fn in row] for row in self.jac_x])

    def jd(self, x, d):
        vals = list(x) + list(d)
        return np.array([[fn(vals) for fn in row] for row in self.jac_d])


def _drift_objective(geo: _ModeGeometry):
    """Normalized drift -(grad V / |grad V|) . (f / |f|) and its gradient
    in (x, d); points with a vanishing factor are treated as +inf."""
    n = geo.n

    def value(z):
        x, d = z[:n], z[n:]
        gv = geo.grad_v(x)
        try:
            fv = geo.f(x, d)
        except (ValueError, ZeroDivisionError, OverflowError):
            return math.inf  # flow undefined here
        ng, nf = np.linalg.norm(gv), np.linalg.norm(fv)
        if ng < _NORM_FLOOR or nf < _NORM_FLOOR:
            return math.inf
        return -float(gv @ fv) / (ng * nf)

    def gradient(z):
        x, d = z[:n], z[n:]
        gv = geo.grad_v(x)
        try:
            fv = geo.f(x, d)
        except (ValueError, ZeroDivisionError, OverflowError):
            return np.zeros_like(z)
        ng, nf = np.linalg.norm(gv), np.linalg.norm(fv)
        if ng < _NORM_FLOOR or nf < _NORM_FLOOR:
            return np.zeros_like(z)
        u = gv / ng
        w = fv / nf
        pu_w = w - u * float(u @ w)
        pw_u = u - w * float(w @ u)
        gx = -(geo.hess_v(x) @ pu_w / ng + geo.jx(x, d).T @ pw_u / nf)
        if geo.l:
            gd = -(geo.jd(x, d).T @ pw_u / nf)
            return np.concatenate([gx, gd])
        return gx

    return value, gradient


def _land_on_level_set(geo: _ModeGeometry, x: np.ndarray,
                       lo: np.ndarray, hi: np.ndarray,
                       band: float, max_steps: int = 25) -> np.ndarray | None:
    """Newton steps along grad V to |V| <= band, staying in the box."""
    for _ in range(max_steps):
        v = geo.value(x)
        if abs(v) <= band:
            return x
        g = geo.grad_v(x)
        n2 = float(g @ g)
        if n2 < _NORM_FLOOR:
            return None
        x = np.clip(x - (v / n2) * g, lo, hi)
    return x if abs(geo.value(x)) <= band else None


def min_transversality(prob: Problem, tmpl: Template, p: np.ndarray,
                       starts: int = 16, seed: int = 0,
                       cfg: FalsifyConfig | None = None):
    """Minimize the normalized drift over the certificate's zero level set
    and the disturbance box.

    Returns ((mode, x), d, value); value is +inf when no start reaches the
    level set (no zero-level point found).
    """
    cfg = cfg or FalsifyConfig()
    rng = np.random.default_rng(seed)
    band = _LEVEL_BAND * (1.0 + float(np.linalg.norm(p)))
    geos = {}
    results = []
    for _ in range(starts):
        mode = int(rng.integers(len(prob.modes)))
        if mode not in geos:
            geos[mode] = _ModeGeometry(prob, tmpl, p, mode)
        geo = geos[mode]
        omega = prob.modes[mode].omega
        lo_x = np.asarray(omega.lo)
        hi_x = np.asarray(omega.hi)
        if prob.dist_box is not None:
            lo = np.concatenate([lo_x, prob.dist_box.lo])
            hi = np.concatenate([hi_x, prob.dist_box.hi])
            z0 = np.concatenate([omega.sample(rng), prob.dist_box.sample(rng)])
        else:
            lo, hi = lo_x, hi_x
            z0 = omega.sample(rng)
        fval, fgrad = _drift_objective(geo)
        z = z0
        for mu in _PENALTIES:
            pen = lambda w, _mu=mu: fval(w) + _mu * geo.value(w[:geo.n]) ** 2
            peng = lambda w, _mu=mu: _penalty_grad(geo, fgrad, w, _mu)
            z, _ = minimize_box(pen, peng, lo, hi, z,
                                cfg.max_iters, cfg.grad_tol)
        x = _land_on_level_set(geo, z[:geo.n], lo_x, hi_x, band)
        if x is None:
            continue
        d = z[geo.n:]
        z_final = np.concatenate([x, d]) if geo.l else x
        results.append((fval(z_final), mode, x, d))
    if not results:
        return None, None, math.inf
    value, mode, x, d = _best(results)
    return (mode, x), d, value


def _penalty_grad(geo: _ModeGeometry, fgrad, z, mu):
    g = fgrad(z).copy()
    x = z[:geo.n]
    g[:geo.n] += 2.0 * mu * geo.value(x) * geo.grad_v(x)
    return g


def min_reset(prob: Problem, tmpl: Template, p: np.ndarray,
              starts: int = 16, seed: int = 0,
              cfg: FalsifyConfig | None = None):
    """Minimize max(V(x), -V(r(x))) over guard boxes.

    Returns ((rule_index, x), value); +inf when the problem has no resets.
    """
    cfg = cfg or FalsifyConfig()
    if not prob.resets:
        return None, math.inf
    rng = np.random.default_rng(seed)
    jac_cache = {}
    results = []
    for _ in range(starts):
        idx = int(rng.integers(len(prob.resets)))
        rule = prob.resets[idx]
        if idx not in jac_cache:
            jac_cache[idx] = [[ex.compile_expr(ex.differentiate(f, j))
                               for j in range(prob.dim)] for f in rule.fwd]
        jac = jac_cache[idx]

        def f(x, _r=rule):
            try:
                rx = [ex.evaluate(m, x) for m in _r.fwd]
            except ex.DomainError:
                return math.inf
            return max(model.template_value(tmpl, p, _r.source, x),
                       -model.template_value(tmpl, p, _r.target, rx))

        def g(x, _r=rule, _j=jac):
            try:
                rx = [ex.evaluate(m, x) for m in _r.fwd]
            except ex.DomainError:
                return np.zeros(len(x))
            v1 = model.template_value(tmpl, p, _r.source, x)
            v2 = -model.template_value(tmpl, p, _r.target, rx)
            if v1 >= v2:
                return model.template_grad_x(tmpl, p, _r.source, x)
            jr = np.array([[fn(list(x)) for fn in row] for row in _j])
            return -(jr.T @ model.template_grad_x(tmpl, p, _r.target, rx))

        lo = np.asarray(rule.guard.lo)
        hi = np.asarray(rule.guard.hi)
        x, fx = minimize_box(f, g, lo, hi, rule.guard.sample(rng),
                             cfg.max_iters, cfg.grad_tol)
        results.append((fx, idx, x))
    fx, idx, x = _best(results)
    return (idx, x), fx


def segment_margin(prob: Problem, tmpl: Template, p: np.ndarray,
                   seg: Segment) -> float:
    """Worst normalized margin of p on the rows of one segment."""
    rows = chebyshev.build([seg], tmpl, prob)
    return chebyshev.margin(rows, p)


def find_counterexample(prob: Problem, tmpl: Template, p: np.ndarray,
                        cfg: FalsifyConfig | None = None) -> CtrxplResult | None:
    """Run the four searches; construct and validate a refuting segment
    for the worst violation, or report none when all minima clear -eps."""
    cfg = cfg or FalsifyConfig()
    rng = np.random.default_rng(cfg.seed)
    seeds = [int(rng.integers(2 ** 63)) for _ in range(4)]

    t0 = time.perf_counter()
    (mi_pt, mi_val) = min_initial(prob, tmpl, p, cfg.starts, seeds[0], cfg)
    (mu_pt, mu_val) = min_unsafe(prob, tmpl, p, cfg.starts, seeds[1], cfg)
    nontrivial = any(any(any(e != 0 for e in m) for m in block)
                     for block in tmpl.monomials)
    if nontrivial:
        mt_pt, mt_d, mt_val = min_transversality(prob, tmpl, p, cfg.starts,
                                                 seeds[2], cfg)
    else:
        mt_pt, mt_d, mt_val = None, None, math.inf
    mr_pt, mr_val = min_reset(prob, tmpl, p, cfg.starts, seeds[3], cfg)
    search_time = time.perf_counter() - t0

    cases = [
        ("initial", mi_val, mi_pt, None),
        ("unsafe", mu_val, mu_pt, None),
        ("transversality", mt_val, mt_pt, mt_d),
        ("reset", mr_val, mr_pt, None),
    ]
    v = min(val for _, val, _, _ in cases)
    if v >= -cfg.eps_ce:
        return None
    for kind, value, payload, dist in cases:  # tie-break: declaration order
        if value == v:
            break

    ride = dict(bloat_factor=cfg.bloat_factor, t_max=cfg.t_max,
                rtol=cfg.rtol, atol=cfg.atol)
    t1 = time.perf_counter()
    if kind == "initial":
        mode, x = payload
        end = sim.omega(prob, tmpl, p, (mode, x), **ride)
        seg = Segment.classify(prob, mode, x, end[0], end[1])
    elif kind == "unsafe":
        mode, x = payload
        begin = sim.alpha(prob, tmpl, p, (mode, x), **ride)
        seg = Segment.classify(prob, begin[0], begin[1], mode, x)
    elif kind == "transversality":
        mode, x = payload
        begin = sim.alpha(prob, tmpl, p, (mode, x), **ride)
        end = sim.omega(prob, tmpl, p, (mode, x), **ride)
        seg = Segment.classify(prob, begin[0], begin[1], end[0], end[1])
    else:
        idx, x = payload
        rule = prob.resets[idx]
        rx = [ex.evaluate(m, x) for m in rule.fwd]
        begin = sim.alpha(prob, tmpl, p, (rule.source, x), **ride)
        end = sim.omega(prob, tmpl, p, (rule.target, rx), **ride)
        seg = Segment.classify(prob, begin[0], begin[1], end[0], end[1])
        mode = rule.source
    sim_time = time.perf_counter() - t1

    new_margin = segment_margin(prob, tmpl, p, seg)
    if new_margin > 0.0:
        raise RefutationError(
            f"{kind} counter-example (value {value:.3e}) produced a segment "
            f"with margin {new_margin:.3e} > 0; event localization or "
            "level-set landing is off")

    if kind == "reset":
        x_arr = np.asarray(x)
    else:
        x_arr = np.asarray(payload[1])
    return CtrxplResult(kind, mode, x_arr, dist, value, seg,
                        search_time, sim_time)

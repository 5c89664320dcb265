"""Numerical simulation of hybrid flows.

An embedded Dormand-Prince 4(5) integrator with adaptive step control
drives all trajectories.  Events (guard entry, drift sign changes, exit
from the bloated state space) are localized by bisection on the accepted
step.  Reset rules are applied as early as possible; runs that jump
repeatedly without time progress stop with a livelock verdict.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from . import model
from .model import Box, ModeDef, Problem, Segment, Template

EVENT_TIME_TOL = 1e-9
DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10
MAX_RESETS = 100

_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])
_DP_ERR = _DP_B5 - _DP_B4


class StopReason(enum.Enum):
    HORIZON = "horizon"
    LEFT_BLOAT = "left-bloated-state-space"
    EVENT = "event"
    LIVELOCK = "livelock"
    FAILURE = "integration-failure"


@dataclass(frozen=True)
class Trajectory:
    start_mode: int
    start: tuple[float, ...]
    end_mode: int
    end: tuple[float, ...]
    time: float
    reason: StopReason
    resets: int = 0
    event_index: int | None = None


class _StepError(Exception):
    pass


def compile_flow(mode: ModeDef, n_total: int) -> Callable[[Sequence[float]], np.ndarray]:
    """Compile a mode's flow into f(state + disturbance values) -> array."""
    fns = [ex.compile_expr(e) for e in mode.flow]

    def rhs(vals: Sequence[float]) -> np.ndarray:
        return np.array([f(vals) for f in fns])

    return rhs


def _rk_step(f, x: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """One Dormand-Prince step: 5th order solution and error estimate."""
    k = np.empty((7, x.size))
    try:
        k[0] = f(x)
        for i in range(1, 7):
            xi = x + h * np.dot(_DP_A[i], k[:i])
            k[i] = f(xi)
    except (ValueError, ZeroDivisionError, OverflowError) as err:
        raise _StepError(str(err)) from None
    x5 = x + h * np.dot(_DP_B5, k)
    err = h * np.dot(_DP_ERR, k)
    if not np.all(np.isfinite(x5)):
        raise _StepError("non-finite state")
    return x5, err


def _box_gap(box: Box, x: Sequence[float]) -> float:
    """<= 0 inside the box, > 0 outside; continuous in x."""
    gap = -math.inf
    for lo, v, hi in zip(box.lo, x, box.hi):
        gap = max(gap, lo - v, v - hi)
    return gap


def _crossed(direction: int, g0: float, g1: float) -> bool:
    if direction < 0:
        return g0 > 0.0 >= g1
    if direction > 0:
        return g0 <= 0.0 < g1
    return (g0 > 0.0 >= g1) or (g0 <= 0.0 < g1)


def _bisect(rhs, x_left: np.ndarray, h: float, g, g_left: float,
            direction: int) -> tuple[float, np.ndarray]:
    """Localize the crossing inside (0, h]; returns the endpoint on the
    crossed side (so guard events land inside the guard)."""
    lo, x_lo = 0.0, x_left
    hi = h
    x_hi = _rk_step(rhs, x_left, h)[0]
    crossed_from_left = lambda gm: _crossed(direction, g_left, gm)
    while hi - lo > EVENT_TIME_TOL:
        mid = 0.5 * (lo + hi)
        x_mid = _rk_step(rhs, x_lo, mid - lo)[0]
        if crossed_from_left(g(x_mid)):
            hi, x_hi = mid, x_mid
        else:
            lo, x_lo = mid, x_mid
    if direction > 0:
        # exit events report the last point still inside
        return lo, x_lo
    return hi, x_hi


def integrate(mode: ModeDef, x0: Sequence[float],
              dpolicy: Callable[[np.ndarray], np.ndarray],
              horizon: float,
              events: Sequence[tuple[Callable, int]] = (),
              bloated: Box | None = None,
              rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
              mode_index: int = 0) -> Trajectory:
    """Integrate one continuous mode until the horizon, an event crossing,
    or exit from the bloated box, whichever comes first.

    Disturbance inputs are piecewise constant: dpolicy is re-evaluated at
    each accepted step.  Event functions take (state, disturbance).
    """
    x = np.asarray(x0, dtype=float)
    start = tuple(x)
    if dpolicy is None:
        dpolicy = lambda _z: np.empty(0)
    if bloated is not None and _box_gap(bloated, x) > 0.0:
        return Trajectory(mode_index, start, mode_index, start, 0.0,
                          StopReason.LEFT_BLOAT)
    if horizon <= 0.0:
        return Trajectory(mode_index, start, mode_index, start, 0.0,
                          StopReason.HORIZON)

    flow = compile_flow(mode, len(mode.flow) + dpolicy(x).size)
    t = 0.0
    d = dpolicy(x)

    def rhs_at(d_now):
        if len(d_now):
            d_list = list(d_now)
            return lambda z: flow(list(z) + d_list)
        return lambda z: flow(z)

    rhs = rhs_at(d)

    # internal event table: user events first, bloat exit last
    table: list[tuple[Callable, int]] = [(g, direction) for g, direction in events]
    bloat_slot = None
    if bloated is not None:
        table.append((lambda z, _d: _box_gap(bloated, z), 1))
        bloat_slot = len(table) - 1

    g_prev = [g(x, d) for g, _ in table]

    f0 = rhs(x)
    h = min(horizon, max(1e-8, 0.01 * (1.0 + float(np.linalg.norm(x)))
                         / (1.0 + float(np.linalg.norm(f0)))))

    while True:
        h = min(h, horizon - t)
        try:
            x_new, err = _rk_step(rhs, x, h)
        except _StepError:
            h *= 0.5
            if h < 1e-13 * (1.0 + abs(t)):
                return Trajectory(mode_index, start, mode_index, tuple(x), t,
                                  StopReason.FAILURE)
            continue
        scale = atol + rtol * np.maximum(np.abs(x), np.abs(x_new))
        err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
        if err_norm > 1.0:
            h *= max(0.2, 0.9 * err_norm ** -0.2)
            if h < 1e-13 * (1.0 + abs(t)):
                return Trajectory(mode_index, start, mode_index, tuple(x), t,
                                  StopReason.FAILURE)
            continue

        # accepted step: localize the earliest event crossing, if any
        earliest = None
        for idx, (g, direction) in enumerate(table):
            g_new = g(x_new, d)
            if _crossed(direction, g_prev[idx], g_new):
                tau, x_loc = _bisect(rhs, x, h, lambda z, _g=g: _g(z, d),
                                     g_prev[idx], direction)
                if earliest is None or tau < earliest[0]:
                    earliest = (tau, idx, x_loc)
        if earliest is not None:
            tau, idx, x_loc = earliest
            t += tau
            if idx == bloat_slot:
                return Trajectory(mode_index, start, mode_index, tuple(x_loc),
                                  t, StopReason.LEFT_BLOAT)
            return Trajectory(mode_index, start, mode_index, tuple(x_loc), t,
                              StopReason.EVENT, event_index=idx)

        t += h
        x = x_new
        if t >= horizon * (1.0 - 1e-14):
            return Trajectory(mode_index, start, mode_index, tuple(x), t,
                              StopReason.HORIZON)
        d = dpolicy(x)
        rhs = rhs_at(d)
        g_prev = [g(x, d) for g, _ in table]
        growth = 5.0 if err_norm == 0.0 else min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
        h *= growth


def _contains_tol(box: Box, x: Sequence[float], tol: float = 1e-7) -> bool:
    return all(lo - tol * (1.0 + abs(v)) <= v <= hi + tol * (1.0 + abs(v))
               for lo, v, hi in zip(box.lo, x, box.hi))


def _guard_events(prob: Problem, mode: int):
    """Event functions announcing guard contact for each reset out of a mode.

    Guards with zero-width dimensions cannot be detected through the box
    membership gap (it never changes sign), so each degenerate dimension
    contributes a plane-crossing event instead; membership is re-checked
    at the localized point.
    """
    events = []
    owners = []
    for rule in prob.mode_resets(mode):
        degenerate = [i for i, (lo, hi) in enumerate(zip(rule.guard.lo, rule.guard.hi))
                      if lo == hi]
        if degenerate:
            for i in degenerate:
                c = rule.guard.lo[i]
                events.append((lambda z, _d, _i=i, _c=c: z[_i] - _c, 0))
                owners.append(rule)
        else:
            events.append((lambda z, _d, _b=rule.guard: _box_gap(_b, z), -1))
            owners.append(rule)
    return events, owners


def flow_hybrid(prob: Problem, start: tuple[int, Sequence[float]],
                dpolicy: Callable[[int, np.ndarray], np.ndarray] | None,
                horizon: float, *, bloat_factor: float = 1.1,
                extra_event: tuple[Callable, int] | None = None,
                rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                max_resets: int = MAX_RESETS) -> Trajectory:
    """Follow the hybrid flow: continuous phases alternating with resets.

    Resets fire as early as possible, including at time zero when the start
    point already sits on a guard.  ``extra_event`` is an additional stop
    condition (g(mode, x, d), direction) evaluated in the current mode.
    """
    start_mode, x0 = start
    mode = start_mode
    x = np.asarray(x0, dtype=float)
    t = 0.0
    resets = 0
    streak = 0

    if dpolicy is None:
        dpolicy = lambda _m, _x: np.empty(0)

    while True:
        # apply any reset whose guard contains the current point
        fired = False
        for rule in prob.mode_resets(mode):
            if _contains_tol(rule.guard, x):
                x = np.array([ex.evaluate(f, x) for f in rule.fwd])
                mode = rule.target
                resets += 1
                streak += 1
                if streak > max_resets:
                    return Trajectory(start_mode, tuple(np.asarray(x0, float)),
                                      mode, tuple(x), t, StopReason.LIVELOCK,
                                      resets)
                fired = True
                break
        if fired:
            continue
        streak = 0

        if t >= horizon * (1.0 - 1e-14) or horizon == 0.0:
            return Trajectory(start_mode, tuple(np.asarray(x0, float)), mode,
                              tuple(x), t, StopReason.HORIZON, resets)

        mdef = prob.modes[mode]
        bloated = model.bloat(mdef.omega, bloat_factor)
        guard_events, owners = _guard_events(prob, mode)
        events = list(guard_events)
        extra_slot = None
        if extra_event is not None:
            g, direction = extra_event
            events.append((lambda z, d, _m=mode, _g=g: _g(_m, z, d), direction))
            extra_slot = len(events) - 1

        traj = integrate(mdef, x, lambda z, _m=mode: dpolicy(_m, z),
                         horizon - t, events, bloated, rtol, atol, mode)
        t += traj.time
        x = np.asarray(traj.end)

        if traj.reason is StopReason.EVENT:
            if extra_slot is not None and traj.event_index == extra_slot:
                return Trajectory(start_mode, tuple(np.asarray(x0, float)),
                                  mode, tuple(x), t, StopReason.EVENT, resets,
                                  traj.event_index)
            rule = owners[traj.event_index]
            if not _contains_tol(rule.guard, x):
                # degenerate-dimension plane crossed outside the guard box;
                # resume the continuous phase from the localized point
                continue
            continue  # reset handled by the membership check at loop top
        return Trajectory(start_mode, tuple(np.asarray(x0, float)), mode,
                          tuple(x), t, traj.reason, resets)


def reverse(prob: Problem) -> Problem:
    """Time-reversed problem: negated flows, inverted resets, swapped
    initial and unsafe regions."""
    for i, rule in enumerate(prob.resets):
        if not rule.invertible:
            raise ValueError(
                f"reset {i} has no declared inverse; backward simulation "
                "requires invertible resets")
    modes = tuple(
        ModeDef(m.name, m.omega, tuple(ex.negated(e) for e in m.flow))
        for m in prob.modes)
    resets = tuple(
        model.ResetRule(source=r.target, guard=r.image, target=r.source,
                        fwd=r.inv, inv=r.fwd, image=r.guard)
        for r in prob.resets)
    return Problem(prob.state_vars, prob.dist_vars, prob.dist_box, modes,
                   resets, initial=prob.unsafe, unsafe=prob.initial)


def _select_vertices(box: Box, cap: int,
                     rng: np.random.Generator) -> list[tuple[float, ...]]:
    n = box.dim
    if n <= 30 and 2 ** n <= cap:
        return model.vertices(box)
    chosen: dict[tuple[float, ...], None] = {}
    attempts = 0
    while len(chosen) < cap and attempts < 20 * cap:
        bits = rng.integers(0, 2, size=n)
        v = tuple(box.hi[i] if bits[i] else box.lo[i] for i in range(n))
        chosen[v] = None
        attempts += 1
    return list(chosen)


def _midpoint_policy(prob: Problem):
    if prob.dist_box is None:
        return None
    d_mid = np.asarray(prob.dist_box.midpoint())
    return lambda _m, _x: d_mid


def init_segments(prob: Problem, sigma: float, vertex_cap: int = 256,
                  seed: int = 0, *, bloat_factor: float = 1.1,
                  rtol: float = DEFAULT_RTOL,
                  atol: float = DEFAULT_ATOL) -> list[Segment]:
    """Bootstrap segments: fixed-length forward runs from initial-box
    vertices and backward runs from unsafe-box vertices."""
    rng = np.random.default_rng(seed)
    dpol = _midpoint_policy(prob)
    segments: list[Segment] = []

    for mode, box in prob.initial:
        for v in _select_vertices(box, vertex_cap, rng):
            traj = flow_hybrid(prob, (mode, v), dpol, sigma,
                               bloat_factor=bloat_factor, rtol=rtol, atol=atol)
            segments.append(Segment.classify(prob, mode, v,
                                             traj.end_mode, traj.end))

    rev = reverse(prob)
    rev_dpol = _midpoint_policy(rev)
    for mode, box in prob.unsafe:
        for v in _select_vertices(box, vertex_cap, rng):
            traj = flow_hybrid(rev, (mode, v), rev_dpol, sigma,
                               bloat_factor=bloat_factor, rtol=rtol, atol=atol)
            segments.append(Segment.classify(prob, traj.end_mode, traj.end,
                                             mode, v))
    return segments


def _dist_vertices(prob: Problem) -> list[np.ndarray]:
    if prob.dist_box is None:
        return [np.empty(0)]
    return [np.asarray(v) for v in model.vertices(prob.dist_box)]


def _drift_ride(prob_dyn: Problem, tmpl: Template, p: np.ndarray,
                start: tuple[int, Sequence[float]], orient: float,
                pick_max: bool, *, bloat_factor: float, t_max: float,
                rtol: float, atol: float) -> tuple[int, tuple[float, ...]]:
    """Shared core of the forward/backward counter-example endpoints.

    Integrates prob_dyn while the certificate drift, measured in the
    original forward orientation, stays positive; stops at the first
    drift zero, bloated-box exit, or the hard time cap.
    """
    d_verts = _dist_vertices(prob_dyn)
    flows = {}

    def flow_of(m: int):
        if m not in flows:
            flows[m] = compile_flow(prob_dyn.modes[m], prob_dyn.dim + prob_dyn.n_dist)
        return flows[m]

    def drift(m: int, x: np.ndarray, d: np.ndarray) -> float:
        g = model.template_grad_x(tmpl, p, m, x)
        f = flow_of(m)(list(x) + list(d))
        return orient * float(np.dot(g, f))

    def dpolicy(m: int, x: np.ndarray) -> np.ndarray:
        best = None
        for d in d_verts:
            v = drift(m, x, d)
            if best is None or (pick_max and v > best[0]) or \
                    (not pick_max and v < best[0]):
                best = (v, d)
        return best[1]

    mode, x0 = start
    x0 = np.asarray(x0, dtype=float)
    d0 = dpolicy(mode, x0)
    if drift(mode, x0, d0) < 0.0:
        return mode, tuple(x0)

    traj = flow_hybrid(prob_dyn, (mode, x0), dpolicy, t_max,
                       bloat_factor=bloat_factor,
                       extra_event=(drift, -1), rtol=rtol, atol=atol)
    return traj.end_mode, traj.end


def omega(prob: Problem, tmpl: Template, p: np.ndarray,
          start: tuple[int, Sequence[float]], *, bloat_factor: float = 1.1,
          t_max: float = 100.0, rtol: float = DEFAULT_RTOL,
          atol: float = DEFAULT_ATOL) -> tuple[int, tuple[float, ...]]:
    """Forward endpoint: ride the flow while the certificate increases,
    choosing disturbances that maximize the increase."""
    return _drift_ride(prob, tmpl, p, start, orient=1.0, pick_max=True,
                       bloat_factor=bloat_factor, t_max=t_max,
                       rtol=rtol, atol=atol)


def alpha(prob: Problem, tmpl: Template, p: np.ndarray,
          start: tuple[int, Sequence[float]], *, bloat_factor: float = 1.1,
          t_max: float = 100.0, rtol: float = DEFAULT_RTOL,
          atol: float = DEFAULT_ATOL) -> tuple[int, tuple[float, ...]]:
    """Backward start point: ride the reversed flow while the certificate
    decreases in backward time, choosing disturbances that minimize the
    forward-orientation drift."""
    rev = reverse(prob)
    return _drift_ride(rev, tmpl, p, start, orient=-1.0, pick_max=False,
                       bloat_factor=bloat_factor, t_max=t_max,
                       rtol=rtol, atol=atol)

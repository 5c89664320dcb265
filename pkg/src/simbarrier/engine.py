"""Counter-example-guided refinement loop.

Bootstrap segments seed the sampled constraint; the loop alternates
max-margin candidate computation and counter-example search, growing the
segment set by exactly one refuting segment per round, and optionally
hands the surviving candidate to the rigorous verifier.  A refuted
verification feeds its witness point back into the loop as a fresh
counter-example.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from . import chebyshev, expr as ex, falsify, sim
from . import verify as rigor
from .model import Problem, Segment, Template


class RunStatus(enum.Enum):
    BARRIER_FOUND = "BarrierFound"
    NO_CANDIDATE = "NoCandidate"
    ITERATION_LIMIT = "IterationLimit"


@dataclass
class RunConfig:
    sigma: float = 0.5
    bloat_factor: float = 1.1
    vertex_cap: int = 256
    starts: int = 16
    max_iterations: int = 50
    delta_min: float = 1e-6
    eps_ce: float = 1e-9
    seed: int = 0
    verify: bool = True
    rtol: float = sim.DEFAULT_RTOL
    atol: float = sim.DEFAULT_ATOL
    min_width_frac: float = 1e-4
    t_max: float | None = None  # defaults to 100 * sigma

    def __post_init__(self):
        if self.sigma < 0 or self.bloat_factor < 1 or self.max_iterations < 1:
            raise ValueError("invalid run configuration")

    @property
    def ride_horizon(self) -> float:
        return self.t_max if self.t_max is not None else 100.0 * self.sigma


@dataclass
class IterationRecord:
    index: int
    delta: float
    p: np.ndarray
    kind: str | None = None          # counter-example kind, if one was found
    segment: Segment | None = None
    segment_margin: float | None = None


@dataclass
class RunReport:
    status: RunStatus
    p: np.ndarray | None = None
    delta: float | None = None
    verdict: rigor.Verdict | None = None
    iterations: int = 0
    segment_count: int = 0
    timings: dict[str, float] = field(default_factory=dict)
    log: list[IterationRecord] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    total_time: float = 0.0


def _witness_segment(prob: Problem, tmpl: Template, p: np.ndarray,
                     verdict: rigor.Verdict, cfg: RunConfig) -> Segment:
    """Turn a refutation witness into a counter-example segment."""
    mode, x, _d = verdict.witness
    ride = dict(bloat_factor=cfg.bloat_factor, t_max=cfg.ride_horizon,
                rtol=cfg.rtol, atol=cfg.atol)
    cond = verdict.condition
    if cond == 1:
        end = sim.omega(prob, tmpl, p, (mode, x), **ride)
        return Segment.classify(prob, mode, x, end[0], end[1])
    if cond == 2:
        begin = sim.alpha(prob, tmpl, p, (mode, x), **ride)
        return Segment.classify(prob, begin[0], begin[1], mode, x)
    if cond == 3:
        begin = sim.alpha(prob, tmpl, p, (mode, x), **ride)
        end = sim.omega(prob, tmpl, p, (mode, x), **ride)
        return Segment.classify(prob, begin[0], begin[1], end[0], end[1])
    rules = prob.mode_resets(mode)
    rule = next((r for r in rules if r.guard.contains(x)), rules[0])
    rx = [ex.evaluate(f, x) for f in rule.fwd]
    begin = sim.alpha(prob, tmpl, p, (mode, x), **ride)
    end = sim.omega(prob, tmpl, p, (rule.target, rx), **ride)
    return Segment.classify(prob, begin[0], begin[1], end[0], end[1])


def run(prob: Problem, tmpl: Template, cfg: RunConfig | None = None) -> RunReport:
    """Synthesize a certificate, refining on counter-examples."""
    cfg = cfg or RunConfig()
    timings = {"simulation": 0.0, "candidate": 0.0,
               "counterexample": 0.0, "verification": 0.0}
    report = RunReport(RunStatus.ITERATION_LIMIT, timings=timings)
    rng = np.random.default_rng(cfg.seed)
    t_start = time.perf_counter()

    t0 = time.perf_counter()
    segments = sim.init_segments(prob, cfg.sigma, cfg.vertex_cap,
                                 int(rng.integers(2 ** 63)),
                                 bloat_factor=cfg.bloat_factor,
                                 rtol=cfg.rtol, atol=cfg.atol)
    timings["simulation"] += time.perf_counter() - t0

    warm = None
    for it in range(1, cfg.max_iterations + 1):
        report.iterations = it

        t0 = time.perf_counter()
        constraint = chebyshev.build(segments, tmpl, prob)
        cand = chebyshev.solve(constraint, cfg.delta_min, warm)
        timings["candidate"] += time.perf_counter() - t0
        if cand is None:
            report.status = RunStatus.NO_CANDIDATE
            break
        warm = cand.p
        record = IterationRecord(it, cand.delta, cand.p)
        report.log.append(record)

        fcfg = falsify.FalsifyConfig(
            starts=cfg.starts, seed=int(rng.integers(2 ** 63)),
            eps_ce=cfg.eps_ce, bloat_factor=cfg.bloat_factor,
            t_max=cfg.ride_horizon, rtol=cfg.rtol, atol=cfg.atol)
        t0 = time.perf_counter()
        ce = falsify.find_counterexample(prob, tmpl, cand.p, fcfg)
        elapsed = time.perf_counter() - t0
        if ce is not None:
            timings["counterexample"] += ce.search_time
            timings["simulation"] += ce.sim_time
        else:
            timings["counterexample"] += elapsed

        if ce is not None:
            record.kind = ce.kind
            record.segment = ce.segment
            record.segment_margin = falsify.segment_margin(
                prob, tmpl, cand.p, ce.segment)
            if record.segment_margin > 0.0:
                raise falsify.RefutationError(
                    "added segment does not refute the current candidate")
            segments.append(ce.segment)
            continue

        if cfg.verify:
            t0 = time.perf_counter()
            verdict = rigor.verify(
                prob, tmpl, cand.p,
                rigor.VerifyConfig(min_width_frac=cfg.min_width_frac))
            timings["verification"] += time.perf_counter() - t0
            if verdict.status is rigor.VerdictStatus.REFUTED:
                t0 = time.perf_counter()
                seg = _witness_segment(prob, tmpl, cand.p, verdict, cfg)
                timings["simulation"] += time.perf_counter() - t0
                m = falsify.segment_margin(prob, tmpl, cand.p, seg)
                if m > 0.0:
                    raise falsify.RefutationError(
                        "verification witness segment does not refute the "
                        "candidate")
                record.kind = f"verify-refuted-{verdict.condition}"
                record.segment = seg
                record.segment_margin = m
                segments.append(seg)
                continue
            report.verdict = verdict
            if verdict.status is rigor.VerdictStatus.UNKNOWN:
                report.notes.append(
                    "verification gave up on some boxes; certificate kept")
        report.status = RunStatus.BARRIER_FOUND
        report.p = cand.p
        report.delta = cand.delta
        break

    report.segment_count = len(segments)
    report.total_time = time.perf_counter() - t_start
    report.notes.append(
        "zero-level landing tolerance for drift counter-examples: 1e-6")
    return report

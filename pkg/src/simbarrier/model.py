"""Problem data model: boxes, modes, resets, templates, segments.

A safety verification problem bundles a mode set with box-shaped state
spaces, per-mode flow expressions, optional invertible reset rules, and
box-shaped initial and unsafe regions.  Certificate templates are linear
in their parameters with a per-mode monomial basis.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import expr as ex
from .expr import Expr
from .interval import Interval


class ProblemFormatError(ValueError):
    """Problem document violates the schema or an internal consistency rule."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("box bound arity mismatch")
        for a, b in zip(self.lo, self.hi):
            if not (math.isfinite(a) and math.isfinite(b)) or a > b:
                raise ValueError(f"empty or unbounded box dimension [{a}, {b}]")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, x: Sequence[float]) -> bool:
        return all(a <= v <= b for a, v, b in zip(self.lo, x, self.hi))

    def midpoint(self) -> tuple[float, ...]:
        return tuple(0.5 * (a + b) for a, b in zip(self.lo, self.hi))

    def widths(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    def volume(self) -> float:
        return math.prod(self.widths())

    def intervals(self) -> list[Interval]:
        return [Interval(a, b) for a, b in zip(self.lo, self.hi)]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return lo + rng.random(self.dim) * (hi - lo)

    @staticmethod
    def from_pairs(pairs: Iterable[Sequence[float]]) -> "Box":
        pairs = list(pairs)
        return Box(tuple(float(p[0]) for p in pairs),
                   tuple(float(p[1]) for p in pairs))


def vertices(b: Box) -> list[tuple[float, ...]]:
    """All corner points in lexicographic low/high order, deduplicated."""
    corners = itertools.product(*((lo, hi) for lo, hi in zip(b.lo, b.hi)))
    return list(dict.fromkeys(corners))


def bloat(b: Box, factor: float) -> Box:
    """Scale each dimension about its midpoint by ``factor`` >= 1."""
    if factor < 1.0:
        raise ValueError("bloat factor must be >= 1")
    lo, hi = [], []
    for a, c in zip(b.lo, b.hi):
        mid = 0.5 * (a + c)
        lo.append(mid - factor * (mid - a))
        hi.append(mid + factor * (c - mid))
    return Box(tuple(lo), tuple(hi))


@dataclass(frozen=True)
class ModeDef:
    name: str
    omega: Box
    flow: tuple[Expr, ...]


@dataclass(frozen=True)
class ResetRule:
    source: int
    guard: Box
    target: int
    fwd: tuple[Expr, ...]
    inv: tuple[Expr, ...] | None = None
    image: Box | None = None

    @property
    def invertible(self) -> bool:
        return self.inv is not None and self.image is not None


@dataclass(frozen=True)
class Problem:
    state_vars: tuple[str, ...]
    dist_vars: tuple[str, ...]
    dist_box: Box | None
    modes: tuple[ModeDef, ...]
    resets: tuple[ResetRule, ...]
    initial: tuple[tuple[int, Box], ...]
    unsafe: tuple[tuple[int, Box], ...]

    @property
    def dim(self) -> int:
        return len(self.state_vars)

    @property
    def n_dist(self) -> int:
        return len(self.dist_vars)

    def mode_index(self, name: str) -> int:
        for i, m in enumerate(self.modes):
            if m.name == name:
                return i
        raise KeyError(name)

    def mode_resets(self, mode: int) -> list[ResetRule]:
        return [r for r in self.resets if r.source == mode]

    def in_initial(self, mode: int, x: Sequence[float]) -> bool:
        return any(m == mode and b.contains(x) for m, b in self.initial)

    def in_unsafe(self, mode: int, x: Sequence[float]) -> bool:
        return any(m == mode and b.contains(x) for m, b in self.unsafe)


@dataclass(frozen=True)
class Segment:
    """A simulation segment: start and end point of one numerical run."""

    s_mode: int
    s: tuple[float, ...]
    sp_mode: int
    sp: tuple[float, ...]
    s_in_initial: bool
    s_in_unsafe: bool
    sp_in_initial: bool
    sp_in_unsafe: bool

    @staticmethod
    def classify(prob: Problem, s_mode: int, s: Sequence[float],
                 sp_mode: int, sp: Sequence[float]) -> "Segment":
        return Segment(
            s_mode, tuple(float(v) for v in s),
            sp_mode, tuple(float(v) for v in sp),
            prob.in_initial(s_mode, s), prob.in_unsafe(s_mode, s),
            prob.in_initial(sp_mode, sp), prob.in_unsafe(sp_mode, sp),
        )


Monomial = tuple[int, ...]


@dataclass(frozen=True)
class Template:
    """Per-mode monomial bases for a certificate linear in its parameters.

    Parameter blocks are concatenated in mode declaration order; block i
    holds one coefficient per monomial of mode i.
    """

    monomials: tuple[tuple[Monomial, ...], ...]

    def __post_init__(self):
        for mode_monos in self.monomials:
            if len(set(mode_monos)) != len(mode_monos):
                raise ValueError("duplicate monomials in a mode block")
            if all(any(e != 0 for e in m) for m in mode_monos):
                raise ValueError("every mode needs the constant monomial")

    @property
    def size(self) -> int:
        return sum(len(block) for block in self.monomials)

    def block_slice(self, mode: int) -> slice:
        start = sum(len(b) for b in self.monomials[:mode])
        return slice(start, start + len(self.monomials[mode]))


def _mono_value(mono: Monomial, x: Sequence[float]) -> float:
    v = 1.0
    for e, xi in zip(mono, x):
        if e:
            v *= xi ** e
    return v


def _mono_grad(mono: Monomial, x: Sequence[float]) -> list[float]:
    g = []
    for j, ej in enumerate(mono):
        if ej == 0:
            g.append(0.0)
            continue
        v = float(ej) * x[j] ** (ej - 1)
        for i, ei in enumerate(mono):
            if i != j and ei:
                v *= x[i] ** ei
        g.append(v)
    return g


def template_value(t: Template, p: np.ndarray, mode: int,
                   x: Sequence[float]) -> float:
    block = p[t.block_slice(mode)]
    return float(sum(c * _mono_value(m, x)
                     for c, m in zip(block, t.monomials[mode])))


def coeff_row(t: Template, mode: int, x: Sequence[float]) -> np.ndarray:
    """Row a with a.p == template_value(t, p, mode, x) for every p."""
    row = np.zeros(t.size)
    sl = t.block_slice(mode)
    row[sl] = [_mono_value(m, x) for m in t.monomials[mode]]
    return row


def template_grad_x(t: Template, p: np.ndarray, mode: int,
                    x: Sequence[float]) -> np.ndarray:
    g = np.zeros(len(x))
    block = p[t.block_slice(mode)]
    for c, m in zip(block, t.monomials[mode]):
        if c:
            g += c * np.asarray(_mono_grad(m, x))
    return g


def template_hess_x(t: Template, p: np.ndarray, mode: int,
                    x: Sequence[float]) -> np.ndarray:
    n = len(x)
    h = np.zeros((n, n))
    block = p[t.block_slice(mode)]
    for c, m in zip(block, t.monomials[mode]):
        if not c:
            continue
        for j, ej in enumerate(m):
            if ej == 0:
                continue
            grad_j = _mono_grad(_lower(m, j), x)
            h[j] += c * ej * np.asarray(grad_j)
    return h


def _lower(mono: Monomial, j: int) -> Monomial:
    out = list(mono)
    out[j] -= 1
    return tuple(out)


def template_expr(t: Template, p: np.ndarray, mode: int) -> Expr:
    """The certificate of mode ``mode`` as an expression over state vars."""
    terms: Expr = ex.Const(0.0)
    block = p[t.block_slice(mode)]
    for c, m in zip(block, t.monomials[mode]):
        if c == 0.0:
            continue
        mono_expr: Expr = ex.Const(1.0)
        first = True
        for j, e in enumerate(m):
            if e == 0:
                continue
            f: Expr = ex.Var(j) if e == 1 else ex.Pow(ex.Var(j), e)
            mono_expr = f if first else ex.Mul(mono_expr, f)
            first = False
        term = ex.Const(float(c)) if first else ex.Mul(ex.Const(float(c)), mono_expr)
        terms = term if terms == ex.Const(0.0) else ex.Add(terms, term)
    return terms


def template_linear(n: int, modes: int = 1) -> Template:
    """Constant plus all first-order monomials, per mode."""
    base: list[Monomial] = [tuple(0 for _ in range(n))]
    for j in range(n):
        base.append(tuple(1 if i == j else 0 for i in range(n)))
    return Template(tuple(tuple(base) for _ in range(modes)))


def template_quadratic_2d(modes: int = 1) -> Template:
    """x^2, xy, y^2, x, y, 1 for two-dimensional problems."""
    base: tuple[Monomial, ...] = (
        (2, 0), (1, 1), (0, 2), (1, 0), (0, 1), (0, 0))
    return Template(tuple(base for _ in range(modes)))


def make_template(layout: str | Sequence[Sequence[Sequence[int]]],
                  n: int, modes: int) -> Template:
    """Build a template from a shorthand name or explicit exponent lists."""
    if isinstance(layout, str):
        if layout == "linear":
            return template_linear(n, modes)
        if layout == "quadratic-2d":
            if n != 2:
                raise ProblemFormatError(
                    "template", "quadratic-2d requires a 2-dimensional state")
            return template_quadratic_2d(modes)
        raise ProblemFormatError("template", f"unknown shorthand {layout!r}")
    blocks = []
    for block in layout:
        monos = []
        for m in block:
            if len(m) != n or any(int(e) < 0 for e in m):
                raise ProblemFormatError(
                    "template", f"bad monomial exponent list {list(m)!r}")
            monos.append(tuple(int(e) for e in m))
        blocks.append(tuple(monos))
    if len(blocks) == 1 and modes > 1:
        blocks = blocks * modes
    if len(blocks) != modes:
        raise ProblemFormatError(
            "template", f"expected {modes} mode blocks, got {len(blocks)}")
    return Template(tuple(blocks))


def monomial_name(mono: Monomial, variables: Sequence[str]) -> str:
    parts = []
    for name, e in zip(variables, mono):
        if e == 1:
            parts.append(name)
        elif e > 1:
            parts.append(f"{name}^{e}")
    return "*".join(parts) if parts else "1"


def monomial_from_name(text: str, variables: Sequence[str]) -> Monomial:
    expo = [0] * len(variables)
    text = text.strip()
    if text == "1":
        return tuple(expo)
    index = {name: i for i, name in enumerate(variables)}
    for part in text.split("*"):
        part = part.strip()
        if "^" in part:
            name, _, power = part.partition("^")
            e = int(power)
        else:
            name, e = part, 1
        if name not in index or e < 1:
            raise ValueError(f"bad monomial {text!r}")
        expo[index[name]] += e
    return tuple(expo)


# ---------------------------------------------------------------------------
# Problem document loading


def _require(doc: dict, key: str, location: str):
    if key not in doc:
        raise ProblemFormatError(location or key, "required section missing")
    return doc[key]


def _load_box(raw, n: int | None, location: str) -> Box:
    if not isinstance(raw, (list, tuple)):
        raise ProblemFormatError(location, "expected a list of [lo, hi] pairs")
    if n is not None and len(raw) != n:
        raise ProblemFormatError(
            location, f"expected {n} dimensions, got {len(raw)}")
    try:
        return Box.from_pairs(raw)
    except (ValueError, TypeError, IndexError) as err:
        raise ProblemFormatError(location, str(err)) from None


def _parse_exprs(raw, variables, n, location) -> tuple[Expr, ...]:
    if not isinstance(raw, (list, tuple)) or len(raw) != n:
        raise ProblemFormatError(
            location, f"expected {n} expressions, got "
            f"{len(raw) if isinstance(raw, (list, tuple)) else type(raw).__name__}")
    out = []
    for i, text in enumerate(raw):
        try:
            out.append(ex.parse(str(text), variables))
        except ex.ParseError as err:
            raise ProblemFormatError(f"{location}[{i}]", str(err)) from None
    return tuple(out)


def load_problem(doc: dict) -> Problem:
    """Validate a problem document (parsed JSON) into a Problem."""
    if not isinstance(doc, dict):
        raise ProblemFormatError("document", "expected a JSON object")
    state_vars = tuple(str(v) for v in _require(doc, "variables", "variables"))
    if len(set(state_vars)) != len(state_vars) or not state_vars:
        raise ProblemFormatError("variables", "must be non-empty and unique")
    n = len(state_vars)

    dist_vars = tuple(str(v) for v in doc.get("disturbances", []))
    dist_box = None
    if dist_vars:
        dist_box = _load_box(_require(doc, "disturbance_box", "disturbance_box"),
                             len(dist_vars), "disturbance_box")
    all_vars = state_vars + dist_vars

    raw_modes = _require(doc, "modes", "modes")
    if not raw_modes:
        raise ProblemFormatError("modes", "at least one mode is required")
    modes = []
    for i, rm in enumerate(raw_modes):
        loc = f"modes[{i}]"
        name = str(_require(rm, "name", f"{loc}.name"))
        omega = _load_box(_require(rm, "omega", f"{loc}.omega"), n, f"{loc}.omega")
        flow = _parse_exprs(_require(rm, "flow", f"{loc}.flow"),
                            all_vars, n, f"{loc}.flow")
        modes.append(ModeDef(name, omega, flow))
    names = [m.name for m in modes]
    if len(set(names)) != len(names):
        raise ProblemFormatError("modes", "duplicate mode names")
    mode_index = {m.name: i for i, m in enumerate(modes)}

    def resolve_mode(name, location):
        if name not in mode_index:
            raise ProblemFormatError(location, f"unknown mode {name!r}")
        return mode_index[name]

    resets = []
    for i, rr in enumerate(doc.get("resets", [])):
        loc = f"resets[{i}]"
        src = resolve_mode(str(_require(rr, "source", f"{loc}.source")),
                           f"{loc}.source")
        tgt = resolve_mode(str(_require(rr, "target", f"{loc}.target")),
                           f"{loc}.target")
        guard = _load_box(_require(rr, "guard", f"{loc}.guard"), n, f"{loc}.guard")
        src_omega = modes[src].omega
        if not (src_omega.contains(guard.lo) and src_omega.contains(guard.hi)):
            raise ProblemFormatError(
                f"{loc}.guard", "guard box must lie inside the source omega")
        fwd = _parse_exprs(_require(rr, "map", f"{loc}.map"),
                           state_vars, n, f"{loc}.map")
        inv = None
        image = None
        if "inverse" in rr or "image" in rr:
            inv = _parse_exprs(_require(rr, "inverse", f"{loc}.inverse"),
                               state_vars, n, f"{loc}.inverse")
            image = _load_box(_require(rr, "image", f"{loc}.image"),
                              n, f"{loc}.image")
        rule = ResetRule(src, guard, tgt, fwd, inv, image)
        if rule.invertible:
            _spot_check_inverse(rule, i)
        resets.append(rule)

    def load_regions(key) -> tuple[tuple[int, Box], ...]:
        raw = _require(doc, key, key)
        if not isinstance(raw, list) or not raw:
            raise ProblemFormatError(key, "expected a non-empty list")
        out = []
        for i, entry in enumerate(raw):
            loc = f"{key}[{i}]"
            m = resolve_mode(str(_require(entry, "mode", f"{loc}.mode")),
                             f"{loc}.mode")
            b = _load_box(_require(entry, "box", f"{loc}.box"), n, f"{loc}.box")
            omega = modes[m].omega
            if not (omega.contains(b.lo) and omega.contains(b.hi)):
                raise ProblemFormatError(loc, "box must lie inside the mode omega")
            out.append((m, b))
        return tuple(out)

    return Problem(
        state_vars=state_vars,
        dist_vars=dist_vars,
        dist_box=dist_box,
        modes=tuple(modes),
        resets=tuple(resets),
        initial=load_regions("init"),
        unsafe=load_regions("unsafe"),
    )


def _spot_check_inverse(rule: ResetRule, index: int, samples: int = 8):
    # inverse(map(x)) must reproduce x on the guard; checked at the guard
    # midpoint and a few corners.
    points = [rule.guard.midpoint()]
    points.extend(vertices(rule.guard)[: samples - 1])
    for x in points:
        y = [ex.evaluate(f, x) for f in rule.fwd]
        back = [ex.evaluate(g, y) for g in rule.inv]
        err = max(abs(a - b) for a, b in zip(back, x))
        if err > 1e-9 * (1.0 + max(abs(v) for v in x)):
            raise ProblemFormatError(
                f"resets[{index}].inverse",
                f"inverse map does not invert the forward map (error {err:.2e})")

"""Dense bounded-variable primal simplex.

Two phases with one artificial variable per row.  The entering variable
follows Bland's smallest-index rule; the leaving row takes the min ratio
with a largest-pivot tie-break (stability) and smallest index as the last
resort, so every solve is deterministic.  Built for the small, repeatedly
solved programs of the candidate search, where exactness and
reproducibility matter more than raw speed; systems with many rows are
handled by exact row generation on top of the same core.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

_TOL = 1e-9
_REFACTOR_EVERY = 40
_DIRECT_ROW_LIMIT = 80
_ROW_BATCH = 40

_AT_LO = 0
_AT_HI = 1
_BASIC = 2


class LPError(RuntimeError):
    pass


@dataclass
class LPResult:
    status: str  # "optimal" or "infeasible"
    x: np.ndarray | None = None
    value: float | None = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def lp_max(c: Sequence[float],
           rows: Sequence[tuple[Sequence[float], str, float]],
           bounds: Sequence[tuple[float, float]]) -> LPResult:
    """Maximize c.x subject to the rows (a, sense, rhs) with sense one of
    '<=', '>=', '=', and finite box bounds on every structural variable.

    Large row systems are solved by row generation: a working subset grows
    with the most violated rows until the subset optimum satisfies every
    row, which certifies global optimality (the subset optimum is an upper
    bound).  Infeasibility of a subset already proves infeasibility.
    """
    if len(rows) <= _DIRECT_ROW_LIMIT:
        return _lp_max_direct(c, rows, bounds)

    active = list(range(_ROW_BATCH))
    in_set = set(active)
    for _ in range(len(rows)):
        res = _lp_max_direct(c, [rows[i] for i in active], bounds)
        if not res.optimal:
            return res
        viol = np.empty(len(rows))
        for i, (a, sense, rhs) in enumerate(rows):
            lhs = float(np.dot(a, res.x))
            if sense == "<=":
                viol[i] = lhs - rhs
            elif sense == ">=":
                viol[i] = rhs - lhs
            else:
                viol[i] = abs(lhs - rhs)
        order = np.argsort(-viol, kind="stable")
        added = 0
        for i in order:
            if viol[i] <= 1e-9:
                break
            if i not in in_set:
                active.append(int(i))
                in_set.add(int(i))
                added += 1
                if added >= _ROW_BATCH:
                    break
        if added == 0:
            return res
    raise LPError("row generation failed to converge")


def _lp_max_direct(c: Sequence[float],
                   rows: Sequence[tuple[Sequence[float], str, float]],
                   bounds: Sequence[tuple[float, float]]) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    if len(bounds) != n:
        raise LPError("bounds arity mismatch")
    for lo, hi in bounds:
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise LPError(f"structural bounds must be finite, got [{lo}, {hi}]")

    m = len(rows)
    if m == 0:
        # optimum sits at a bound of each variable
        x = np.array([hi if ci > 0 else lo for ci, (lo, hi) in zip(c, bounds)])
        return LPResult("optimal", x, float(c @ x))

    # columns: n structural | m slack | m artificial
    N = n + 2 * m
    A = np.zeros((m, N))
    b = np.zeros(m)
    lo = np.zeros(N)
    hi = np.zeros(N)
    lo[:n] = [bd[0] for bd in bounds]
    hi[:n] = [bd[1] for bd in bounds]

    for i, (a, sense, rhs) in enumerate(rows):
        a = np.asarray(a, dtype=float)
        if a.size != n:
            raise LPError(f"row {i} arity mismatch")
        A[i, :n] = a
        A[i, n + i] = 1.0
        b[i] = rhs
        if sense == "<=":
            lo[n + i], hi[n + i] = 0.0, math.inf
        elif sense == ">=":
            lo[n + i], hi[n + i] = -math.inf, 0.0
        elif sense == "=":
            lo[n + i], hi[n + i] = 0.0, 0.0
        else:
            raise LPError(f"row {i}: unknown sense {sense!r}")

    status = np.full(N, _AT_LO, dtype=int)
    x = np.zeros(N)
    x[:n] = lo[:n]
    x[n:n + m] = 0.0
    for j in range(n, n + m):
        if lo[j] == -math.inf:  # >= slack sits at its upper bound 0
            status[j] = _AT_HI

    residual = b - A[:, :n + m] @ x[:n + m]
    for i in range(m):
        j = n + m + i
        A[i, j] = 1.0 if residual[i] >= 0.0 else -1.0
        lo[j], hi[j] = 0.0, math.inf
        x[j] = abs(residual[i])
        status[j] = _BASIC
    basis = list(range(n + m, N))

    # phase 1: drive the artificials to zero
    c1 = np.zeros(N)
    c1[n + m:] = -1.0
    x, value = _simplex(A, b, c1, lo, hi, basis, status, x)
    if value < -1e-7:
        return LPResult("infeasible")

    # phase 2: artificials pinned at zero, real objective
    lo[n + m:] = 0.0
    hi[n + m:] = 0.0
    c2 = np.zeros(N)
    c2[:n] = c
    x, value = _simplex(A, b, c2, lo, hi, basis, status, x)
    return LPResult("optimal", x[:n].copy(), float(value))


def _simplex(A, b, c, lo, hi, basis, status, x):
    """Run the bounded-variable simplex from a feasible basis in place."""
    m, N = A.shape
    Binv = np.linalg.inv(A[:, basis])
    pivots = 0
    max_iters = 2000 + 200 * (m + N)

    for _ in range(max_iters):
        xb = Binv @ (b - A @ np.where(status == _BASIC, 0.0, x))
        for r, j in enumerate(basis):
            x[j] = xb[r]
        y = c[basis] @ Binv
        reduced = c - y @ A

        entering = -1
        for j in range(N):
            if status[j] == _BASIC or lo[j] == hi[j]:
                continue
            if status[j] == _AT_LO and reduced[j] > _TOL:
                entering = j
                break
            if status[j] == _AT_HI and reduced[j] < -_TOL:
                entering = j
                break
        if entering < 0:
            return x, float(c @ x)

        direction = 1.0 if status[entering] == _AT_LO else -1.0
        w = Binv @ A[:, entering]

        # smallest step that drives a basic variable (or the entering
        # variable itself) to a bound; among near-tied blockers prefer the
        # largest pivot magnitude (numerical stability), then the smallest
        # variable index (determinism)
        t_best = hi[entering] - lo[entering]
        leave_pos = -1  # -1 means bound flip
        leave_var = entering
        leave_at_lo = True
        leave_pivot = 0.0
        for r in range(m):
            coef = direction * w[r]
            k = basis[r]
            if coef > _TOL:
                t = (x[k] - lo[k]) / coef
                hit_lo = True
            elif coef < -_TOL:
                if hi[k] == math.inf:
                    continue
                t = (hi[k] - x[k]) / (-coef)
                hit_lo = False
            else:
                continue
            t = max(t, 0.0)
            take = False
            if t < t_best - _TOL:
                take = True
            elif t < t_best + _TOL and leave_pos >= 0:
                if abs(w[r]) > leave_pivot * (1.0 + 1e-12):
                    take = True
                elif abs(w[r]) >= leave_pivot * (1.0 - 1e-12) and k < leave_var:
                    take = True
            elif t < t_best + _TOL and leave_pos < 0 and t <= t_best:
                take = True
            if take:
                t_best = min(t, t_best)
                leave_pos = r
                leave_var = k
                leave_at_lo = hit_lo
                leave_pivot = abs(w[r])
        if t_best == math.inf:
            raise LPError("unbounded program despite box bounds")

        x[entering] += direction * t_best
        for r in range(m):
            x[basis[r]] -= direction * t_best * w[r]

        if leave_pos < 0:
            status[entering] = _AT_HI if direction > 0 else _AT_LO
            x[entering] = hi[entering] if direction > 0 else lo[entering]
            continue

        out = basis[leave_pos]
        status[out] = _AT_LO if leave_at_lo else _AT_HI
        x[out] = lo[out] if leave_at_lo else hi[out]
        status[entering] = _BASIC
        basis[leave_pos] = entering

        pivots += 1
        if pivots % _REFACTOR_EVERY == 0:
            Binv = np.linalg.inv(A[:, basis])
        else:
            pivot = w[leave_pos]
            Binv[leave_pos] /= pivot
            for r in range(m):
                if r != leave_pos and abs(w[r]) > 0.0:
                    Binv[r] -= w[r] * Binv[leave_pos]

    raise LPError("simplex iteration limit exceeded")

"""One-sided Hardy-Littlewood maximal operators on [0, T].

Functions are extended by zero outside [0, T]. ``Side.FORWARD`` averages over
``[t, t+h]`` and ``Side.BACKWARD`` over ``[t-h, t]``.

Why breakpoints suffice: with ``P`` the (piecewise linear) primitive of
``|f|``, the window average ``(P(t+h) - P(t)) / h`` restricted to an interval
of ``h`` on which ``t+h`` stays inside one cell has the form ``c + d/h``. That
is monotone in ``h``, so the supremum over ``h`` is reached as ``t+h`` tends to
a breakpoint. Hence

    M^+ f(t_i) = max_{j > i} (P_j - P_i) / (t_j - t_i),

a maximum-slope query from the point ``(t_i, P_i)`` to the points on its
right. The maximiser lies on the upper convex hull of ``{(t_j, P_j)}_{j>i}``
and, scanning ``i`` from right to left, the hull vertices popped while
inserting ``(t_i, P_i)`` are exactly those before the tangent point. The whole
sweep is therefore O(n). The backward operator uses the mirror-image sweep
from left to right.
"""

from __future__ import annotations

import enum

import numba
import numpy as np

from .errors import InvalidArgument
from .grid import StepFunction

__all__ = [
    "Side",
    "one_sided_maximal",
    "one_sided_maximal_oracle",
    "maximal_breakpoint_values",
    "power_maximal",
    "sharp_maximal",
    "sharp_maximal_oracle",
]


class Side(str, enum.Enum):
    BACKWARD = "backward"
    FORWARD = "forward"

    @property
    def dual(self) -> "Side":
        return Side.FORWARD if self is Side.BACKWARD else Side.BACKWARD

    @classmethod
    def parse(cls, value) -> "Side":
        if isinstance(value, Side):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidArgument(f"unknown side {value!r}; use 'backward' or 'forward'") from None


@numba.njit(cache=True)
def _compensated_prefix(x):
    # TwoSum accumulation: hi + lo carries the running sum to ~eps**2.
    n = x.shape[0]
    hi = np.zeros(n + 1)
    lo = np.zeros(n + 1)
    s = 0.0
    c = 0.0
    for k in range(n):
        y = s + x[k]
        bb = y - s
        c += (s - (y - bb)) + (x[k] - bb)
        s = y
        hi[k + 1] = s
        lo[k + 1] = c
    return hi, lo


@numba.njit(cache=True)
def _forward_breakpoint_max(t, hi, lo):
    n = t.shape[0] - 1
    out = np.zeros(n + 1)
    hull = np.empty(n + 1, np.int64)
    hull[0] = n
    top = 1
    for i in range(n - 1, -1, -1):
        while top >= 2:
            h0 = hull[top - 1]
            h1 = hull[top - 2]
            # pop h0 while slope(i, h0) <= slope(i, h1)
            if (hi[h0] - hi[i]) * (t[h1] - t[i]) <= (hi[h1] - hi[i]) * (t[h0] - t[i]):
                top -= 1
            else:
                break
        j = hull[top - 1]
        out[i] = ((hi[j] - hi[i]) + (lo[j] - lo[i])) / (t[j] - t[i])
        hull[top] = i
        top += 1
    return out


@numba.njit(cache=True)
def _backward_breakpoint_max(t, hi, lo):
    # mirror image of the forward sweep; works on the original coordinates
    # because reflecting breakpoints rounds short window lengths
    n = t.shape[0] - 1
    out = np.zeros(n + 1)
    hull = np.empty(n + 1, np.int64)
    hull[0] = 0
    top = 1
    for i in range(1, n + 1):
        while top >= 2:
            h0 = hull[top - 1]
            h1 = hull[top - 2]
            if (hi[i] - hi[h0]) * (t[i] - t[h1]) <= (hi[i] - hi[h1]) * (t[i] - t[h0]):
                top -= 1
            else:
                break
        j = hull[top - 1]
        out[i] = ((hi[i] - hi[j]) + (lo[i] - lo[j])) / (t[i] - t[j])
        hull[top] = i
        top += 1
    return out


def _breakpoint_max(t: np.ndarray, a: np.ndarray, side: "Side") -> np.ndarray:
    hi, lo = _compensated_prefix(a * np.diff(t))
    if side is Side.FORWARD:
        out = _forward_breakpoint_max(t, hi, lo)
    else:
        out = _backward_breakpoint_max(t, hi, lo)
    return np.maximum(out, 0.0)


def maximal_breakpoint_values(f: StepFunction, side: Side | str = Side.FORWARD) -> np.ndarray:
    """Exact ``M^{side} |f|`` at all n+1 breakpoints (zero extension).

    For the forward side the value at ``T`` is 0; for the backward side the
    value at 0 is 0.
    """
    side = Side.parse(side)
    a = np.ascontiguousarray(f.magnitude().values)
    t = np.ascontiguousarray(f.grid.breakpoints)
    return _breakpoint_max(t, a, side)


def one_sided_maximal(f: StepFunction, side: Side | str = Side.FORWARD) -> StepFunction:
    """``M^± |f|`` sampled at the left endpoint of every cell.

    The value on cell ``i`` is the limit from the right at ``t_i``, i.e.
    ``max(|f_i|, best window average anchored at t_i)``. For the forward side
    that is the exact value at ``t_i``; for the backward side it is the
    supremum of ``M^- f`` over the cell.
    """
    side = Side.parse(side)
    bp = maximal_breakpoint_values(f, side)
    if side is Side.FORWARD:
        vals = bp[:-1]
    else:
        vals = np.maximum(bp[:-1], f.magnitude().values)
    return StepFunction(f.grid, vals)


def one_sided_maximal_oracle(f: StepFunction, side: Side | str = Side.FORWARD) -> StepFunction:
    """Quadratic enumeration of every breakpoint window; ground truth for tests."""
    side = Side.parse(side)
    a = f.magnitude().values
    t = f.grid.breakpoints
    mass = a * f.grid.widths
    n = f.grid.n
    out = np.empty(n)
    for i in range(n):
        if side is Side.FORWARD:
            sums = np.cumsum(mass[i:])
            out[i] = np.max(sums / (t[i + 1:] - t[i]))
        else:
            best = a[i]
            if i > 0:
                sums = np.cumsum(mass[:i][::-1])
                best = max(best, np.max(sums / (t[i] - t[:i][::-1])))
            out[i] = best
    return StepFunction(f.grid, out)


def power_maximal(f: StepFunction, r: float, side: Side | str = Side.FORWARD) -> StepFunction:
    """``(M^±(|f|^r))^{1/r}``."""
    if not r >= 1:
        raise InvalidArgument(f"power maximal exponent must be >= 1, got {r!r}")
    g = StepFunction(f.grid, f.magnitude().values ** r)
    m = one_sided_maximal(g, side)
    return StepFunction(f.grid, m.values ** (1.0 / r))


@numba.njit(cache=True)
def _primitive_ext(t, P, v, x):
    # primitive of the zero-extended function at x >= 0
    n = t.shape[0] - 1
    if x >= t[n]:
        return P[n]
    lo = 0
    hi = n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if t[mid] <= x:
            lo = mid
        else:
            hi = mid
    return P[lo] + v[lo] * (x - t[lo])


@numba.njit(cache=True)
def _sharp_forward_bp(t, v, subdiv):
    n = t.shape[0] - 1
    P = np.zeros(n + 1)
    for k in range(n):
        P[k + 1] = P[k] + v[k] * (t[k + 1] - t[k])
    out = np.zeros(n + 1)
    for i in range(n):
        best = 0.0
        for j in range(i, n):
            dj = t[j + 1] - t[j]
            base = t[j] - t[i]
            for q in range(subdiv):
                part = dj * q / subdiv
                h = base + part
                if h <= 0.0:
                    continue
                x1 = t[i] + h
                avg = (_primitive_ext(t, P, v, x1 + h) - _primitive_ext(t, P, v, x1)) / h
                acc = 0.0
                for k in range(i, j):
                    d = v[k] - avg
                    if d > 0.0:
                        acc += d * (t[k + 1] - t[k])
                d = v[j] - avg
                if d > 0.0:
                    acc += d * part
                val = acc / h
                if val > best:
                    best = val
        # h = T - t_i closes the candidate set
        h = t[n] - t[i]
        avg = (_primitive_ext(t, P, v, t[n] + h) - _primitive_ext(t, P, v, t[n])) / h
        acc = 0.0
        for k in range(i, n):
            d = v[k] - avg
            if d > 0.0:
                acc += d * (t[k + 1] - t[k])
        val = acc / h
        if val > best:
            best = val
        out[i] = best
    return out


def sharp_maximal(f: StepFunction, side: Side | str = Side.FORWARD, subdivisions: int = 4) -> StepFunction:
    """One-sided sharp maximal function, as a certified lower bound.

    Forward: ``sup_h (1/h) int_t^{t+h} (f - avg_{[t+h, t+2h]} f)^+``. The inner
    average moves with ``h``, so the supremum is not attained at breakpoints;
    ``h`` ranges over breakpoint-aligned widths with every cell additionally
    split into ``subdivisions`` pieces. The backward version is the forward
    one on the reflected function.
    """
    side = Side.parse(side)
    if f.is_vector:
        raise InvalidArgument("sharp maximal function needs a scalar input")
    if subdivisions < 1:
        raise InvalidArgument("subdivisions must be >= 1")
    t = np.ascontiguousarray(f.grid.breakpoints)
    v = np.ascontiguousarray(f.values)
    if side is Side.FORWARD:
        bp = _sharp_forward_bp(t, v, int(subdivisions))
        return StepFunction(f.grid, bp[:-1])
    tr = np.ascontiguousarray(f.grid.T - t[::-1])
    bp = _sharp_forward_bp(tr, np.ascontiguousarray(v[::-1]), int(subdivisions))
    # backward value at t_i is the forward value at T - t_i = breakpoint n - i
    return StepFunction(f.grid, bp[::-1][:-1].copy())


def _sharp_candidates(t: np.ndarray, i: int, subdivisions: int) -> np.ndarray:
    widths = np.diff(t[i:])
    starts = t[i:-1] - t[i]
    frac = np.arange(subdivisions) / subdivisions
    hs = (starts[:, None] + frac[None, :] * widths[:, None]).ravel()
    hs = np.concatenate([hs[hs > 0], [t[-1] - t[i]]])
    return hs


def sharp_maximal_oracle(f: StepFunction, side: Side | str = Side.FORWARD, subdivisions: int = 4) -> StepFunction:
    """Vectorised brute-force h-scan with the same candidate-set definition."""
    side = Side.parse(side)
    if side is Side.BACKWARD:
        g = sharp_maximal_oracle(f.reflected(), Side.FORWARD, subdivisions)
        bp = np.concatenate([g.values, [0.0]])
        return StepFunction(f.grid, bp[::-1][:-1].copy())
    t = f.grid.breakpoints
    v = f.values
    P = np.concatenate([[0.0], np.cumsum(v * f.grid.widths)])
    out = np.empty(f.grid.n)
    for i in range(f.grid.n):
        hs = _sharp_candidates(t, i, subdivisions)
        x1 = t[i] + hs
        avg = (np.interp(x1 + hs, t, P) - np.interp(x1, t, P)) / hs
        lo = np.maximum(t[:-1][None, :], t[i])
        hi = np.minimum(t[1:][None, :], x1[:, None])
        overlap = np.clip(hi - lo, 0.0, None)
        acc = np.sum(np.clip(v[None, :] - avg[:, None], 0.0, None) * overlap, axis=1)
        out[i] = max(0.0, np.max(acc / hs))
    return StepFunction(f.grid, out)

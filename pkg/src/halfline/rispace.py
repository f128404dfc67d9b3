"""Weighted rearrangements, r.i. norms, Boyd indices, the Calderon operator
and Rubio de Francia iteration on [0, T].

A rearrangement profile lives on the measure axis ``[0, w([0, T]))``. Its
breakpoints are correctly rounded partial sums of the cell masses
``w_i * Delta_i`` taken in sorted order, so level-set measures computed from
the profile agree bit-for-bit with ``math.fsum`` over the original cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgument
from .grid import Grid, StepFunction, Weight
from .maximal import Side, one_sided_maximal

__all__ = [
    "SpaceSpec",
    "Lp",
    "Lorentz",
    "RearrangementProfile",
    "decreasing_rearrangement",
    "profile_norm",
    "space_norm",
    "sum_norm",
    "BoydIndices",
    "boyd_indices",
    "dilate",
    "calderon_at",
    "calderon_operator",
    "domination_ratio",
    "measured_norm",
    "RubioResult",
    "rubio_iteration",
    "dual_space",
]


@dataclass(frozen=True)
class SpaceSpec:
    """``Lp(p)`` or ``Lorentz(p, q)`` with ``p in (1, inf)``, ``q in [1, inf)``."""

    kind: str
    p: float
    q: float | None = None

    def __post_init__(self):
        if self.kind not in ("lp", "lorentz"):
            raise InvalidArgument(f"unknown space kind {self.kind!r}")
        if not (1 < self.p < math.inf):
            raise InvalidArgument(f"p must lie in (1, inf), got {self.p!r}")
        if self.kind == "lorentz":
            if self.q is None or not (1 <= self.q < math.inf):
                raise InvalidArgument(f"Lorentz q must lie in [1, inf), got {self.q!r}")
        elif self.q is not None:
            raise InvalidArgument("Lp takes a single exponent")

    @property
    def boyd_lower(self) -> float:
        return self.p

    @property
    def boyd_upper(self) -> float:
        return self.p

    @property
    def label(self) -> str:
        return f"L^{self.p:g}" if self.kind == "lp" else f"L^({self.p:g},{self.q:g})"

    def to_dict(self):
        d = {"kind": self.kind, "p": self.p}
        if self.q is not None:
            d["q"] = self.q
        return d


def Lp(p: float) -> SpaceSpec:
    return SpaceSpec("lp", float(p))


def Lorentz(p: float, q: float) -> SpaceSpec:
    return SpaceSpec("lorentz", float(p), float(q))


def dual_space(E: SpaceSpec) -> SpaceSpec | None:
    """Associate space when it is again representable, else None."""
    pp = E.p / (E.p - 1.0)
    if E.kind == "lp":
        return Lp(pp)
    if E.q > 1:
        return Lorentz(pp, E.q / (E.q - 1.0))
    return None


# ---------------------------------------------------------------------------
# rearrangement


def _exact_cumsum(x) -> np.ndarray:
    # running sums, each correctly rounded (Shewchuk partials)
    out = np.empty(len(x) + 1)
    out[0] = 0.0
    partials: list[float] = []
    for k, v in enumerate(np.asarray(x, dtype=float).tolist()):
        i = 0
        for y in partials:
            if abs(v) < abs(y):
                v, y = y, v
            hi = v + y
            lo = y - (hi - v)
            if lo:
                partials[i] = lo
                i += 1
            v = hi
        partials[i:] = [v]
        out[k + 1] = math.fsum(partials)
    return out


@dataclass(frozen=True, eq=False)
class RearrangementProfile(StepFunction):
    """Nonincreasing step function on the measure axis ``[0, total)``."""

    def __post_init__(self):
        super().__post_init__()
        if self.is_vector:
            raise InvalidArgument("a rearrangement profile is scalar")
        if np.any(np.diff(self.values) > 0):
            raise InvalidArgument("profile values must be nonincreasing")
        if np.any(self.values < 0):
            raise InvalidArgument("profile values must be nonnegative")

    @property
    def total(self) -> float:
        return self.grid.T

    def level_measure(self, lam: float) -> float:
        """``|{s : f*(s) > lam}|``."""
        m = int(np.count_nonzero(self.values > lam))
        return float(self.grid.breakpoints[m])


def _profile_from(values: np.ndarray, masses: np.ndarray) -> RearrangementProfile:
    order = np.argsort(-values, kind="stable")
    v = values[order]
    s = _exact_cumsum(masses[order])
    # merge equal values, and cells too light to move the running sum
    keep = np.ones(v.size, dtype=bool)
    keep[1:] = v[1:] != v[:-1]
    ends = np.append(np.nonzero(keep)[0][1:], v.size)
    bps = np.concatenate([[0.0], s[ends]])
    vals = v[keep]
    grow = np.diff(bps) > 0
    bps = np.concatenate([[0.0], bps[1:][grow]])
    return RearrangementProfile(Grid(bps), vals[grow])


def decreasing_rearrangement(f: StepFunction, w: Weight) -> RearrangementProfile:
    """``f*_w``: sort cells by ``|f|`` and lay them out with widths ``w_i Delta_i``."""
    if f.grid != w.grid:
        raise InvalidArgument("f and w must live on the same grid; resample first")
    a = f.magnitude().values
    return _profile_from(a, w.values * w.grid.widths)


def profile_norm(phi: StepFunction, E: SpaceSpec) -> float:
    """Norm of a nonincreasing profile in ``E`` over Lebesgue measure."""
    v = np.abs(phi.values)
    s = phi.grid.breakpoints
    if E.kind == "lp":
        return float(np.sum(v ** E.p * phi.grid.widths) ** (1.0 / E.p))
    # int (s^{1/p} f*)^q ds/s, closed form on every cell
    e = E.q / E.p
    return float(np.sum(v ** E.q * (E.p / E.q) * (s[1:] ** e - s[:-1] ** e)) ** (1.0 / E.q))


def space_norm(f: StepFunction, w: Weight, E: SpaceSpec) -> float:
    """``||f||_{E_w} = ||f*_w||_E``; the Lp case skips the rearrangement."""
    if f.grid != w.grid:
        raise InvalidArgument("f and w must live on the same grid")
    if E.kind == "lp":
        a = f.magnitude().values
        return float(np.sum(a ** E.p * w.values * w.grid.widths) ** (1.0 / E.p))
    return profile_norm(decreasing_rearrangement(f, w), E)


def sum_norm(f: StepFunction, w: Weight, p: float, q: float) -> float:
    """Upper estimate of ``||f||_{L^p_w + L^q_w}`` from level splits.

    Splits ``f`` at every level ``lam`` into the part above ``lam`` (in L^p)
    and the rest (in L^q) and keeps the cheapest split.
    """
    prof = decreasing_rearrangement(f, w)
    v = prof.values
    d = prof.grid.widths
    head = np.concatenate([[0.0], np.cumsum(v ** p * d)]) ** (1.0 / p)
    tail = np.concatenate([np.cumsum((v ** q * d)[::-1])[::-1], [0.0]]) ** (1.0 / q)
    return float(np.min(head + tail))


# ---------------------------------------------------------------------------
# Boyd indices


def dilate(phi: StepFunction, t: float) -> StepFunction:
    """``D_t phi(s) = phi(s / t)`` on the stretched axis."""
    if not t > 0:
        raise InvalidArgument("dilation factor must be positive")
    return StepFunction(Grid(phi.grid.breakpoints * t), phi.values)


@dataclass(frozen=True)
class BoydIndices:
    lower: float
    upper: float
    empirical: bool
    probe_count: int = 0

    def __iter__(self):
        return iter((self.lower, self.upper))


def _boyd_probes(count: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    out = [StepFunction(Grid([0.0, 1.0]), [1.0])]
    while len(out) < count:
        m = int(rng.integers(1, 24))
        widths = rng.exponential(1.0, m) + 1e-3
        vals = np.sort(rng.exponential(1.0, m))[::-1] + 1e-3
        out.append(StepFunction(Grid(np.concatenate([[0.0], np.cumsum(widths)])), vals))
    return out


def boyd_indices(E: SpaceSpec, empirical: bool = False, probes: int = 32, seed: int = 0) -> BoydIndices:
    """Boyd indices; analytic ``(p, p)``, or regressed from dilation norms.

    Empirically ``h(t) = max_f ||D_t f|| / ||f||`` over nonincreasing probe
    profiles at ``t = 2^k``, ``|k| <= 10``; the slopes of ``log h`` against
    ``log t`` over ``k in [5, 10]`` and ``k in [-10, -5]`` are the reciprocals
    of the lower and upper index.
    """
    if not empirical:
        return BoydIndices(E.boyd_lower, E.boyd_upper, False, 0)
    fam = _boyd_probes(int(probes), seed)
    base = [profile_norm(f, E) for f in fam]
    ks = np.arange(-10, 11)
    logh = []
    for k in ks:
        t = 2.0 ** k
        logh.append(math.log(max(profile_norm(dilate(f, t), E) / b for f, b in zip(fam, base))))
    logh = np.array(logh)
    logt = ks * math.log(2.0)
    hi = ks >= 5
    lo = ks <= -5
    s_hi = np.polyfit(logt[hi], logh[hi], 1)[0]
    s_lo = np.polyfit(logt[lo], logh[lo], 1)[0]
    return BoydIndices(float(1.0 / s_hi), float(1.0 / s_lo), True, len(fam))


# ---------------------------------------------------------------------------
# Calderon operator


def calderon_at(phi: StepFunction, r: float, q: float, points) -> np.ndarray:
    """``S phi(t) = t^{-1/r} int_0^t u^{1/r} phi du/u + t^{-1/q} int_t^inf u^{1/q} phi du/u``.

    Cell-exact for step ``phi``; beyond the last breakpoint ``phi`` is zero.
    ``q = inf`` is allowed.
    """
    if not (1 <= r < q):
        raise InvalidArgument(f"need 1 <= r < q, got r={r!r}, q={q!r}")
    if phi.is_vector or np.any(phi.values < 0):
        raise InvalidArgument("the Calderon operator acts on nonnegative scalar profiles")
    x = np.atleast_1d(np.asarray(points, dtype=float))
    if np.any(x <= 0):
        raise InvalidArgument("evaluation points must be positive")
    s = phi.grid.breakpoints
    v = phi.values
    n = phi.grid.n
    a, b = 1.0 / r, (0.0 if math.isinf(q) else 1.0 / q)

    def piece(alpha, lo, hi):
        # int_lo^hi u^{alpha - 1} du
        if alpha == 0:
            with np.errstate(divide="ignore"):
                return np.log(hi) - np.log(lo)
        return (hi ** alpha - lo ** alpha) / alpha

    A = np.concatenate([[0.0], np.cumsum(v * piece(a, s[:-1], s[1:]))])
    cb = np.zeros(n)
    cb[1:] = v[1:] * piece(b, s[1:-1], s[2:])
    B = np.concatenate([np.cumsum(cb[::-1])[::-1], [0.0]])
    k = np.searchsorted(s, x, side="right") - 1
    inside = x < s[-1]
    k = np.where(inside, k, n - 1)
    vk = np.where(inside, v[k], 0.0)
    first = np.where(inside, A[k] + vk * piece(a, s[k], x), A[n])
    second = np.where(inside, B[k + 1] + vk * piece(b, x, s[k + 1]), 0.0)
    return x ** (-a) * first + x ** (-b) * second


def calderon_operator(phi: StepFunction, r: float, q: float) -> StepFunction:
    """``S phi`` on the grid of ``phi``, valued at each cell's right end.

    ``S phi`` is nonincreasing, so the right-end value is the infimum over
    the cell; this is the side that keeps domination ratios conservative.
    """
    vals = calderon_at(phi, r, q, phi.grid.breakpoints[1:])
    return StepFunction(phi.grid, vals)


def domination_ratio(g: StepFunction, phi: StepFunction, r: float, q: float):
    """``max_k g*_k / S phi(s_{k+1})`` over the cells of a profile ``g``.

    Returns ``(ratio, s)`` with ``s`` the right end of the worst cell.
    """
    pts = g.grid.breakpoints[1:]
    den = calderon_at(phi, r, q, pts)
    num = g.values
    with np.errstate(divide="ignore", invalid="ignore"):
        rr = np.where(num > 0, num / den, 0.0)
    k = int(np.argmax(rr))
    return float(rr[k]), float(pts[k])


# ---------------------------------------------------------------------------
# operator norms and Rubio de Francia iteration


def measured_norm(op: Callable[[StepFunction], StepFunction], probes: Sequence[StepFunction],
                  w: Weight, E: SpaceSpec):
    """``max ||op f|| / ||f||`` over probes; a lower bound for the true norm."""
    best, arg = 0.0, -1
    for k, f in enumerate(probes):
        nf = space_norm(f, w, E)
        if nf == 0:
            continue
        r = space_norm(op(f), w, E) / nf
        if r > best:
            best, arg = r, k
    return best, arg


@dataclass(frozen=True)
class RubioResult:
    value: StepFunction
    tail_bound: float
    norm_used: float
    measured: float
    safety: float
    terms: int
    side: str
    dual: bool


def rubio_iteration(h: StepFunction, w: Weight, E: SpaceSpec, side=Side.BACKWARD, dual: bool = False,
                    terms: int = 30, norm: float = 1.0, safety: float = 1.1) -> RubioResult:
    """Truncated series ``sum_{k<=K} T^k h / (2 N)^k`` with ``N = safety * norm``.

    ``T`` is the maximal operator of ``side``, or ``S h = M(h w) / w`` with
    the opposite side when ``dual``. ``norm`` is a measured lower bound of
    ``||T||`` on ``E_w`` (or its associate space for the dual series); the
    remainder after ``K`` terms is at most ``2^{-K} ||h||`` once ``N`` really
    dominates the norm.
    """
    side = Side.parse(side)
    if int(terms) != terms or terms < 0:
        raise InvalidArgument("terms must be a nonnegative integer")
    if safety < 1:
        raise InvalidArgument("safety factor must be >= 1")
    if not norm > 0:
        raise InvalidArgument("operator norm must be positive")
    if h.is_vector or np.any(h.values < 0):
        raise InvalidArgument("h must be a nonnegative scalar function")
    if h.grid != w.grid:
        raise InvalidArgument("h and w must share a grid")
    N = float(safety * norm)
    if dual:
        opside = side.dual

        def T(g):
            return StepFunction(g.grid, one_sided_maximal(StepFunction(g.grid, g.values * w.values), opside).values / w.values)
    else:

        def T(g):
            return one_sided_maximal(g, side)

    total = h.values.copy()
    cur = h
    for k in range(1, int(terms) + 1):
        cur = T(cur)
        cur = StepFunction(cur.grid, cur.values / (2.0 * N))
        total = total + cur.values
    E_h = dual_space(E) if dual else E
    hn = space_norm(h, w, E_h) if E_h is not None else float("nan")
    return RubioResult(
        value=StepFunction(h.grid, total),
        tail_bound=float(2.0 ** (-int(terms)) * hn),
        norm_used=N,
        measured=float(norm),
        safety=float(safety),
        terms=int(terms),
        side=side.value,
        dual=bool(dual),
    )

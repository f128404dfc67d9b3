"""Weight families and one-sided weight-class diagnostics on [0, T].

Conventions on the half-line [0, T]:

* ``Variant.MINUS`` is the class controlling the backward operator ``M^-``:
  sup over ``0 <= a < b < c`` of ``(c-a)^{-p} int_b^c w (int_a^b sigma)^{p-1}``
  with ``sigma = w^{1-p'}``. Decreasing weights belong to it for every p.
* ``Variant.PLUS`` swaps the two integrals. It is computed as the MINUS
  constant of the reflected weight ``w(T - .)``, so the two agree exactly
  under reflection.

Sups over real triples reduce to a finite candidate set. Inside one cell
the objective is unimodal (not monotone) in each point with the other two
fixed, and its stationary offset has a closed form. A jump of w therefore
admits short triples straddling it that no breakpoint triple reproduces:
a jump from w_0 up to w_1 gives ``(w_1/w_0) (p-1)^{p-1}/p^p`` at every
scale. With two or three points free, the stationarity
equations are linear and always singular, so the objective is constant
along a line that leaves the cell box through a breakpoint. Candidates with
at most one point inside a cell (at its clipped optimum) thus attain the
sup.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .errors import InvalidArgument, InvalidWeight
from .grid import Grid, StepFunction, Weight, refine
from .maximal import Side, one_sided_maximal

__all__ = [
    "Variant",
    "Power",
    "Exponential",
    "Ramp",
    "Product",
    "WeightSpec",
    "as_weight",
    "SawyerReport",
    "sawyer_constant",
    "a1_constant",
    "ReverseHolderReport",
    "reverse_holder_probe",
    "doubling_probe",
    "OpennessReport",
    "openness_probe",
    "EXACT_LIMIT",
]

EXACT_LIMIT = 256


class Variant(str, enum.Enum):
    PLUS = "plus"
    MINUS = "minus"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, Variant):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidArgument(f"unknown variant {value!r}; use 'plus' or 'minus'") from None

    @property
    def maximal_side(self) -> Side:
        """Side of the maximal operator that this Sawyer class controls."""
        return Side.FORWARD if self is Variant.PLUS else Side.BACKWARD


# ---------------------------------------------------------------------------
# closed-form families


@dataclass(frozen=True)
class Power:
    """``t**beta``."""

    beta: float

    def cell_values(self, grid: Grid, rule: str):
        t = grid.breakpoints
        b = self.beta
        if rule == "average" and b <= -1:
            # the cell touching 0 has infinite mass; fall back to midpoints
            rule = "midpoint"
        if rule == "midpoint":
            return grid.midpoints ** b, "midpoint"
        e = b + 1.0
        lo, hi = t[:-1], t[1:]
        with np.errstate(divide="ignore"):
            # (hi^e - lo^e) / (e (hi - lo)), written through expm1 to keep
            # digits on narrow cells far from 0
            r = np.where(lo > 0, np.log(hi) - np.log(np.where(lo > 0, lo, 1.0)), 0.0)
            far = hi ** e * -np.expm1(-e * r) / (e * (hi - lo))
        first = hi ** b / e
        return np.where(lo > 0, far, first), "average"

    def to_dict(self):
        return {"family": "power", "beta": self.beta}


@dataclass(frozen=True)
class Exponential:
    """``exp(gamma * t)``."""

    gamma: float

    def cell_values(self, grid: Grid, rule: str):
        g = self.gamma
        if rule == "midpoint" or g == 0:
            return np.exp(g * grid.midpoints), "midpoint" if g else rule
        lo, d = grid.left, grid.widths
        return np.exp(g * lo) * np.expm1(g * d) / (g * d), "average"

    def to_dict(self):
        return {"family": "exponential", "gamma": self.gamma}


@dataclass(frozen=True)
class Ramp:
    """``offset + rise * t``, or ``offset + rise * (T - t)`` when mirrored.

    Linear on every cell, so the cell average is the midpoint value and the
    two rules coincide.
    """

    rise: float = 1.0
    offset: float = 1.0
    mirrored: bool = False

    def cell_values(self, grid: Grid, rule: str):
        if self.rise < 0 or self.offset <= 0:
            raise InvalidWeight("a ramp needs rise >= 0 and offset > 0")
        x = grid.T - grid.midpoints if self.mirrored else grid.midpoints
        return self.offset + self.rise * x, rule

    def to_dict(self):
        return {"family": "ramp", "rise": self.rise, "offset": self.offset, "mirrored": self.mirrored}


@dataclass(frozen=True)
class Product:
    """Cellwise product of the factors' materialized values."""

    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise InvalidArgument("a product weight needs at least one factor")

    def cell_values(self, grid: Grid, rule: str):
        vals = np.ones(grid.n)
        used = []
        for f in self.factors:
            v, r = f.cell_values(grid, rule)
            vals = vals * v
            used.append(r)
        return vals, "product(" + ",".join(used) + ")"

    def to_dict(self):
        return {"family": "product", "factors": [f.to_dict() for f in self.factors]}


def family_from_dict(d: dict):
    kind = d.get("family")
    if kind == "power":
        return Power(float(d["beta"]))
    if kind == "exponential":
        return Exponential(float(d["gamma"]))
    if kind == "ramp":
        return Ramp(float(d.get("rise", 1.0)), float(d.get("offset", 1.0)), bool(d.get("mirrored", False)))
    if kind == "product":
        return Product(tuple(family_from_dict(x) for x in d["factors"]))
    raise InvalidArgument(f"unknown weight family {kind!r}")


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """Either a tabulated weight or a closed-form family on a grid."""

    family: object = None
    grid: Grid | None = None
    rule: str = "average"
    table: Weight | None = None

    def __post_init__(self):
        if (self.table is None) == (self.family is None):
            raise InvalidArgument("give exactly one of a tabulated weight or a family")
        if self.family is not None and self.grid is None:
            raise InvalidArgument("a closed-form weight needs a grid")
        if self.rule not in ("average", "midpoint"):
            raise InvalidArgument(f"unknown materialization rule {self.rule!r}")

    @classmethod
    def tabulated(cls, w: Weight) -> "WeightSpec":
        return cls(table=w)

    @property
    def label(self) -> str:
        if self.table is not None:
            return self.table.label or "tabulated"
        return _label(self.family)

    def on_grid(self, grid: Grid) -> Weight:
        if self.table is not None:
            if grid == self.table.grid:
                return self.table
            # resample a step function onto a finer grid that contains its breakpoints
            idx = self.table.grid.locate(grid.left)
            return Weight(grid, self.table.values[idx], rule="tabulated", label=self.label)
        vals, used = self.family.cell_values(grid, self.rule)
        return Weight(grid, vals, rule=used, label=self.label)

    def materialize(self) -> Weight:
        return self.on_grid(self.table.grid if self.table is not None else self.grid)

    def refined(self, factor: int = 2) -> "WeightSpec":
        if self.table is not None:
            return WeightSpec(table=self.on_grid(refine(self.table.grid, factor)))
        return WeightSpec(family=self.family, grid=refine(self.grid, factor), rule=self.rule)


def _label(fam) -> str:
    if isinstance(fam, Power):
        return f"power({fam.beta:g})"
    if isinstance(fam, Exponential):
        return f"exponential({fam.gamma:g})"
    if isinstance(fam, Ramp):
        return f"ramp({fam.rise:g},{fam.offset:g}{',mirrored' if fam.mirrored else ''})"
    if isinstance(fam, Product):
        return "*".join(_label(f) for f in fam.factors)
    return type(fam).__name__.lower()


def as_weight(w) -> Weight:
    if isinstance(w, WeightSpec):
        return w.materialize()
    if isinstance(w, Weight):
        return w
    if isinstance(w, StepFunction):
        return Weight(w.grid, w.values)
    raise InvalidArgument(f"expected a Weight or WeightSpec, got {type(w).__name__}")


# ---------------------------------------------------------------------------
# Sawyer constants


@dataclass(frozen=True)
class SawyerReport:
    """``witness`` is the attaining real triple ``(a, b, c)``.

    ``witness_index`` holds the breakpoint index of every fixed point; the
    coordinate named by ``free_axis`` (0, 1, 2, or -1 for none) sits inside
    the cell with that index instead.
    """

    constant: float
    witness: tuple
    witness_index: tuple
    variant: str
    p: float
    method: str
    bound_direction: str
    evaluations: int
    free_axis: int = -1


def _prefixes(w: Weight, p: float):
    d = w.grid.widths
    sigma = w.values ** (-1.0 / (p - 1.0))
    W = np.concatenate([[0.0], np.cumsum(w.values * d)])
    S = np.concatenate([[0.0], np.cumsum(sigma * d)])
    return W, S, np.ascontiguousarray(w.values, dtype=float), sigma


@numba.njit(cache=True)
def _candidate(t, W, S, w, sg, p, ia, ib, ic, axis):
    # One candidate of the MINUS objective. axis < 0: all three points are
    # breakpoints. Otherwise that point is free inside the cell with its
    # index and sits at the cell's 1-D optimum (the objective is unimodal in
    # each point separately, so clipping the stationary offset is exact).
    a = t[ia]
    b = t[ib]
    c = t[ic]
    Sa = S[ia]
    Sb = S[ib]
    Wb = W[ib]
    Wc = W[ic]
    if axis == 0:
        d = t[ia + 1] - t[ia]
        x = (p * (S[ib] - S[ia]) - (p - 1.0) * sg[ia] * (t[ic] - t[ia])) / sg[ia]
        x = min(max(x, 0.0), d)
        a = t[ia] + x
        Sa = S[ia] + sg[ia] * x
    elif axis == 1:
        d = t[ib + 1] - t[ib]
        x = ((p - 1.0) * sg[ib] * (W[ic] - W[ib]) - w[ib] * (S[ib] - S[ia])) / (p * sg[ib] * w[ib])
        x = min(max(x, 0.0), d)
        b = t[ib] + x
        Sb = S[ib] + sg[ib] * x
        Wb = W[ib] + w[ib] * x
    elif axis == 2:
        d = t[ic + 1] - t[ic]
        x = (w[ic] * (t[ic] - t[ia]) - p * (W[ic] - W[ib])) / (w[ic] * (p - 1.0))
        x = min(max(x, 0.0), d)
        c = t[ic] + x
        Wc = W[ic] + w[ic] * x
    right = Wc - Wb
    left = Sb - Sa
    span = c - a
    if right <= 0.0 or left <= 0.0 or span <= 0.0:
        return 0.0, a, b, c
    return right * left ** (p - 1.0) / span ** p, a, b, c


@numba.njit(cache=True)
def _before(a, b, c, a2, b2, c2, rev):
    # lexicographic order on the triple, or on its reflection when rev
    if rev:
        if c != c2:
            return c > c2
        if b != b2:
            return b > b2
        return a > a2
    if a != a2:
        return a < a2
    if b != b2:
        return b < b2
    return c < c2


@numba.njit(cache=True)
def _exact_kernel(t, W, S, w, sg, p, rev):
    # candidates with at most one point inside a cell: with two or more free
    # points the stationarity equations are linear and singular, so the
    # objective is constant along a line that exits through a breakpoint
    n = t.shape[0] - 1
    best = -1.0
    wit = np.zeros(3)
    idx = np.zeros(4, dtype=np.int64)
    count = 0
    for axis in range(-1, 3):
        for ia in range(n):
            # a free point may share a cell with b (axis 1); a free c may
            # share b's breakpoint as its cell's left end (axis 2)
            ib_hi = n if axis == 1 else n + 1
            for ib in range(ia if axis == 1 else ia + 1, ib_hi):
                ic_hi = n if axis == 2 else n + 1
                for ic in range(ib if axis == 2 else ib + 1, ic_hi):
                    v, a, b, c = _candidate(t, W, S, w, sg, p, ia, ib, ic, axis)
                    count += 1
                    if v > best or (v == best and _before(a, b, c, wit[0], wit[1], wit[2], rev)):
                        best = v
                        wit[0], wit[1], wit[2] = a, b, c
                        idx[0], idx[1], idx[2], idx[3] = ia, ib, ic, axis
    return best, wit, idx, count


@numba.njit(cache=True)
def _score(t, W, S, w, sg, p, tri):
    out = np.empty(tri.shape[0])
    for k in range(tri.shape[0]):
        out[k] = _candidate(t, W, S, w, sg, p, tri[k, 0], tri[k, 1], tri[k, 2], tri[k, 3])[0]
    return out


def _line(n, ia, ib, ic, axis):
    # every candidate that moves one point: breakpoints and in-cell optima
    if axis == 0:
        bp = np.arange(0, ib)
        return np.concatenate([np.stack([bp, np.full_like(bp, ib), np.full_like(bp, ic), np.full_like(bp, -1)], 1),
                               np.stack([bp, np.full_like(bp, ib), np.full_like(bp, ic), np.zeros_like(bp)], 1)])
    if axis == 1:
        bp = np.arange(ia + 1, ic)
        cells = np.arange(ia, ic)
        return np.concatenate([np.stack([np.full_like(bp, ia), bp, np.full_like(bp, ic), np.full_like(bp, -1)], 1),
                               np.stack([np.full_like(cells, ia), cells, np.full_like(cells, ic),
                                         np.ones_like(cells)], 1)])
    bp = np.arange(ib + 1, n + 1)
    cells = np.arange(ib, n)
    return np.concatenate([np.stack([np.full_like(bp, ia), np.full_like(bp, ib), bp, np.full_like(bp, -1)], 1),
                           np.stack([np.full_like(cells, ia), np.full_like(cells, ib), cells,
                                     np.full_like(cells, 2)], 1)])


def _exact_minus(w: Weight, p: float, rev: bool):
    t = np.ascontiguousarray(w.grid.breakpoints)
    W, S, wv, sg = _prefixes(w, p)
    best, wit, idx, count = _exact_kernel(t, W, S, wv, sg, float(p), rev)
    return float(best), tuple(float(x) for x in wit), tuple(int(x) for x in idx), int(count)


def _sampled_minus(w: Weight, p: float, budget: int, seed: int, rev: bool):
    t = np.ascontiguousarray(w.grid.breakpoints)
    n = w.grid.n
    W, S, wv, sg = _prefixes(w, p)
    p = float(p)
    rng = np.random.default_rng(seed)
    used = 0
    best, best_key, best_cand = -np.inf, None, None

    def offer(val, cand):
        nonlocal best, best_key, best_cand
        _, a, b, c = _candidate(t, W, S, wv, sg, p, *cand)
        key = (-c, -b, -a) if rev else (a, b, c)
        if val > best or (val == best and key < best_key):
            best, best_key, best_cand = val, key, cand

    # random screen; the best few triples seed the local search
    # half uniform triples, half with log-uniform gaps so that short
    # triples around a single heavy cell are seen as often as long ones
    m = max(2, min(budget // 4, 20 * n))
    uni = np.sort(rng.choice(n + 1, size=(m // 2, 3), replace=True), axis=1)
    gaps = np.floor(np.exp(rng.random((m - m // 2, 2)) * np.log(n))).astype(np.int64)
    a0 = rng.integers(0, n + 1, size=m - m // 2)
    loc = np.stack([a0, a0 + gaps[:, 0], a0 + gaps[:, 0] + gaps[:, 1]], axis=1)
    # every short candidate: heavy single cells and jumps make these the
    # usual maximisers, and there are only ~20n of them
    base = np.arange(n + 1)
    short = []
    for axis, ga, gc in ((-1, (1, 2, 3), (1, 2, 3)), (0, (1, 2), (1, 2)), (1, (0, 1), (1, 2)), (2, (1, 2), (0, 1))):
        for da in ga:
            for dc in gc:
                short.append(np.stack([base, base + da, base + da + dc, np.full_like(base, axis)], axis=1))
    short = np.concatenate(short)
    hi_b = np.where(short[:, 3] == 1, n - 1, n)
    hi_c = np.where(short[:, 3] == 2, n - 1, n)
    short = short[(short[:, 1] <= hi_b) & (short[:, 2] <= hi_c) & ((short[:, 3] != 0) | (short[:, 0] < n))]
    short = short[: max(0, budget // 2)]
    used += short.shape[0]
    tri = np.concatenate([uni, loc])
    ok = (tri[:, 0] < tri[:, 1]) & (tri[:, 1] < tri[:, 2]) & (tri[:, 2] <= n)
    tri = tri[ok]
    used += m
    tri = np.concatenate([np.concatenate([tri, np.full((tri.shape[0], 1), -1)], axis=1), short]).astype(np.int64)
    if tri.shape[0] == 0:
        tri = np.array([[0, max(1, n // 2), n, -1]], dtype=np.int64)
    vals = _score(t, W, S, wv, sg, p, tri)
    order = np.argsort(-vals, kind="stable")
    offer(float(vals[order[0]]), tuple(int(x) for x in tri[order[0]]))
    starts = [tuple(int(x) for x in tri[k]) for k in order]

    si = 0
    while used < budget:
        if si < len(starts):
            cand = starts[si]
        else:
            cand = tuple(int(x) for x in np.sort(rng.choice(n + 1, size=3, replace=False))) + (-1,)
        si += 1
        cur = cand[:3]
        cur_val = float(_score(t, W, S, wv, sg, p, np.array([cand], dtype=np.int64))[0])
        used += 1
        stall = 0
        axis = 2
        while stall < 3 and used < budget:
            line = _line(n, *cur, axis).astype(np.int64)[: budget - used]
            if line.shape[0] == 0:
                stall += 1
                axis = (axis + 1) % 3
                continue
            v = _score(t, W, S, wv, sg, p, line)
            used += line.shape[0]
            j = int(np.argmax(v))
            if v[j] > cur_val:
                cand = tuple(int(x) for x in line[j])
                cur_val, stall = float(v[j]), 0
                cur = cand[:3]
            else:
                stall += 1
            axis = (axis + 1) % 3
        offer(cur_val, cand)
    val = best
    _, a, b, c = _candidate(t, W, S, wv, sg, p, *best_cand)
    return float(val), (float(a), float(b), float(c)), best_cand, used


def sawyer_constant(w, p: float, variant="minus", method: str = "exact",
                    budget: int | None = None, seed: int = 0) -> SawyerReport:
    """Sawyer constant over real triples, with the attaining triple.

    ``method="exact"`` enumerates every candidate (n <= 256). ``"sampled"``
    runs random screening plus coordinate ascent under an evaluation
    ``budget`` (default ``50 n``) and returns a lower bound.
    """
    if not (p > 1 and np.isfinite(p)):
        raise InvalidArgument(f"p must lie in (1, inf), got {p!r}")
    variant = Variant.parse(variant)
    w = as_weight(w)
    n = w.grid.n
    if n < 2:
        raise InvalidArgument("a Sawyer constant needs at least two cells")
    plus = variant is Variant.PLUS
    work = w.reflected() if plus else w
    if method == "exact":
        if n > EXACT_LIMIT:
            raise InvalidArgument(f"exact enumeration is limited to n <= {EXACT_LIMIT}, got n={n}")
        val, wit, cand, evals = _exact_minus(work, p, plus)
        direction = "exact"
    elif method == "sampled":
        budget = 50 * n if budget is None else int(budget)
        if budget < 1:
            raise InvalidArgument("budget must be positive")
        val, wit, cand, evals = _sampled_minus(work, p, budget, seed, plus)
        direction = "lower"
    else:
        raise InvalidArgument(f"unknown method {method!r}; use 'exact' or 'sampled'")
    ia, ib, ic, axis = cand
    ijk = [ia, ib, ic]
    if plus:
        T = w.grid.T
        wit = (T - wit[2], T - wit[1], T - wit[0])
        # breakpoint k maps to n - k, cell k to n - 1 - k
        ijk = [(n - 1 - x) if k == axis else (n - x) for k, x in enumerate(ijk)][::-1]
        axis = 2 - axis if axis >= 0 else -1
    return SawyerReport(
        constant=val,
        witness=tuple(float(x) for x in wit),
        witness_index=tuple(int(x) for x in ijk),
        variant=variant.value,
        p=float(p),
        method=method,
        bound_direction=direction,
        evaluations=int(evals),
        free_axis=int(axis),
    )


def a1_constant(w, variant="minus") -> float:
    """``sup M w / w`` with the maximal side dual to the class.

    A_1^+ on [0, T] is controlled by the backward operator and A_1^- by the
    forward one. The maximal value on a cell is its supremum over the cell,
    so the ratio is exact for step weights.
    """
    variant = Variant.parse(variant)
    w = as_weight(w)
    m = one_sided_maximal(w, variant.maximal_side.dual)
    return float(np.max(m.values / w.values))


# ---------------------------------------------------------------------------
# reverse Hoelder, doubling and openness probes


@dataclass(frozen=True)
class ReverseHolderReport:
    delta: float
    constant: float
    witness: tuple
    table: dict


def _rh_table(w: Weight, p: float, delta: float):
    t = w.grid.breakpoints
    d = w.grid.widths
    n = w.grid.n
    sigma = w.values ** (-1.0 / (p - 1.0))
    S = np.concatenate([[0.0], np.cumsum(sigma * d)])
    Sd = np.concatenate([[0.0], np.cumsum(sigma ** (1.0 + delta) * d)])
    best, arg = -np.inf, (0, 1)
    for c in range(1, n + 1):
        b = np.arange(c)
        back = (S[c] - S[b]) / (t[c] - t[b])
        # largest backward average over [s, c] with b <= s < c
        den = np.maximum.accumulate(back[::-1])[::-1]
        num = (Sd[c] - Sd[b]) / (t[c] - t[b])
        r = num / den ** (1.0 + delta)
        j = int(np.argmax(r))
        if r[j] > best:
            best, arg = float(r[j]), (j, c)
    return best, arg


def reverse_holder_probe(w, p: float, deltas: Sequence[float], variant="minus") -> ReverseHolderReport:
    """Best ``(delta, C)`` in the one-sided window reverse Hoelder inequality.

    For a pair ``b < c`` the left side is the average of ``sigma^{1+delta}``
    over ``(b, c)`` and the right side is the largest backward average of
    ``sigma`` over windows ``[s, c]`` inside ``(b, c)``, raised to ``1+delta``
    (``sigma = w^{1-p'}``). The PLUS variant reflects the weight first.
    Ties in C go to the larger delta.
    """
    deltas = [float(x) for x in deltas]
    if not deltas:
        raise InvalidArgument("deltas must not be empty")
    if any(not x > 0 for x in deltas):
        raise InvalidArgument("every delta must be positive")
    if not p > 1:
        raise InvalidArgument(f"p must exceed 1, got {p!r}")
    variant = Variant.parse(variant)
    w = as_weight(w)
    work = w.reflected() if variant is Variant.PLUS else w
    t = w.grid.breakpoints
    n = w.grid.n
    table = {}
    for dl in deltas:
        c, (ib, ic) = _rh_table(work, p, dl)
        if variant is Variant.PLUS:
            ib, ic = n - ic, n - ib
        table[dl] = (c, (float(t[ib]), float(t[ic])))
    pick = min(table, key=lambda k: (table[k][0], -k))
    return ReverseHolderReport(delta=pick, constant=table[pick][0], witness=table[pick][1], table=table)


def doubling_probe(w, delta: float, samples: int, seed: int = 0, variant="minus") -> float:
    """Random lower bound for the doubling constant of the A_infinity class.

    Mirrored onto [0, T]: for ``a < b < c`` and ``S`` a union of whole cells
    inside ``(b, c)``, the ratio is ``w(S)/w(a,c)`` divided by
    ``(|S| / (b - a))**delta``.
    """
    if not delta > 0:
        raise InvalidArgument("delta must be positive")
    if int(samples) < 1:
        raise InvalidArgument("samples must be >= 1")
    variant = Variant.parse(variant)
    w = as_weight(w)
    if variant is Variant.PLUS:
        w = w.reflected()
    n = w.grid.n
    if n < 2:
        raise InvalidArgument("the doubling probe needs at least two cells")
    t = w.grid.breakpoints
    d = w.grid.widths
    mass = w.values * d
    W = np.concatenate([[0.0], np.cumsum(mass)])
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(int(samples)):
        ia, ib, ic = np.sort(rng.choice(n + 1, size=3, replace=False))
        cells = np.arange(ib, ic)
        keep = rng.random(cells.size) < rng.random()
        if not keep.any():
            keep[rng.integers(cells.size)] = True
        sel = cells[keep]
        wS = mass[sel].sum()
        lS = d[sel].sum()
        r = wS / (W[ic] - W[ia]) / (lS / (t[ib] - t[ia])) ** delta
        best = max(best, float(r))
    return best


@dataclass(frozen=True)
class OpennessReport:
    q: float
    found: bool
    trajectory: list
    p_stable: bool


def _stable_constant(spec: WeightSpec, q: float, variant, threshold: float, seed: int):
    coarse = spec.materialize()
    fine = spec.refined(2).materialize()
    vals = []
    for w in (coarse, fine):
        method = "exact" if w.grid.n <= EXACT_LIMIT else "sampled"
        vals.append(sawyer_constant(w, q, variant, method=method, seed=seed).constant)
    growth = vals[1] / vals[0] - 1.0
    return vals, growth, growth < threshold


def openness_probe(w, p: float, q_grid: Sequence[float], variant="minus",
                   threshold: float = 0.10, seed: int = 0) -> OpennessReport:
    """Smallest q in ``q_grid`` whose Sawyer constant survives one refinement.

    Walks ``q_grid`` downward and stops at the first q whose constant grows
    by ``threshold`` or more under ``refine(., 2)``. A divergence that scales
    like ``h**-x`` in the first cell width grows by ``2**x`` per step, so only
    ``x > log2(1 + threshold)`` is visible; slower blow-ups read as stable.
    """
    if not isinstance(w, WeightSpec):
        w = WeightSpec.tabulated(as_weight(w))
    qs = [float(q) for q in q_grid]
    if any(not (1 < q < p) for q in qs):
        raise InvalidArgument("q_grid must lie inside (1, p)")
    if any(b >= a for a, b in zip(qs, qs[1:])):
        raise InvalidArgument("q_grid must be strictly decreasing")
    vals, growth, ok = _stable_constant(w, p, variant, threshold, seed)
    traj = [{"q": float(p), "constants": vals, "growth": growth, "stable": ok}]
    found = None
    for q in qs:
        vals, growth, ok = _stable_constant(w, q, variant, threshold, seed)
        traj.append({"q": q, "constants": vals, "growth": growth, "stable": ok})
        if not ok:
            break
        found = q
    return OpennessReport(q=found if found is not None else float(p), found=found is not None,
                          trajectory=traj, p_stable=traj[0]["stable"])

"""Half-line grids [0, T], step functions on them, and exact integration.

Every object here is immutable. A step function holds one value per cell and
the value on cell ``i`` is taken on ``[t_i, t_{i+1})``. Objects living on the
negative half-line are never built; they are reflected onto [0, T] instead
(``t -> T - t``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidArgument, InvalidWeight

__all__ = [
    "Grid",
    "StepFunction",
    "Weight",
    "make_uniform_grid",
    "make_graded_grid",
    "refine",
    "integrate",
    "constant",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    """Ordered breakpoints ``0 = t_0 < t_1 < ... < t_n = T``."""

    breakpoints: np.ndarray

    def __post_init__(self):
        t = _frozen(np.ravel(self.breakpoints))
        if t.size < 2:
            raise InvalidArgument("a grid needs at least one cell")
        if not np.all(np.isfinite(t)):
            raise InvalidArgument("grid breakpoints must be finite")
        if t[0] != 0.0:
            raise InvalidArgument(f"grid must start at 0, got {t[0]!r}")
        if np.any(np.diff(t) <= 0):
            raise InvalidArgument("grid breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", t)

    @property
    def n(self) -> int:
        return self.breakpoints.size - 1

    @property
    def T(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def left(self) -> np.ndarray:
        return self.breakpoints[:-1]

    @cached_property
    def widths(self) -> np.ndarray:
        return _frozen(np.diff(self.breakpoints))

    @cached_property
    def midpoints(self) -> np.ndarray:
        return _frozen(0.5 * (self.breakpoints[:-1] + self.breakpoints[1:]))

    def locate(self, x) -> np.ndarray:
        """Index of the cell containing each x (the last cell for x = T)."""
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.clip(idx, 0, self.n - 1)

    def reflected(self) -> "Grid":
        return Grid(self.T - self.breakpoints[::-1])

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return np.array_equal(self.breakpoints, other.breakpoints)

    def __hash__(self):
        return hash(self.breakpoints.tobytes())

    def __repr__(self):
        return f"Grid(n={self.n}, T={self.T:g})"


def make_uniform_grid(T: float, n: int) -> Grid:
    if not (T > 0 and np.isfinite(T)):
        raise InvalidArgument(f"T must be positive and finite, got {T!r}")
    if int(n) != n or n < 1:
        raise InvalidArgument(f"n must be a positive integer, got {n!r}")
    t = np.linspace(0.0, T, int(n) + 1)
    t[-1] = T
    return Grid(t)


def make_graded_grid(T: float, n: int, grading: float) -> Grid:
    """Breakpoints ``T (k/n)**grading``; grading > 1 clusters cells near 0.

    Doubling ``n`` shrinks the first cell by ``2**grading``, which is what
    makes singular behaviour at the origin visible under refinement.
    """
    if grading < 1:
        raise InvalidArgument(f"grading must be >= 1, got {grading!r}")
    g = make_uniform_grid(T, n)
    t = T * (g.breakpoints / T) ** grading
    t[-1] = T
    return Grid(t)


def refine(g: Grid, factor: int) -> Grid:
    """Split every cell into ``factor`` equal subcells."""
    if int(factor) != factor or factor < 1:
        raise InvalidArgument(f"refinement factor must be a positive integer, got {factor!r}")
    factor = int(factor)
    if factor == 1:
        return g
    t = g.breakpoints
    frac = np.arange(factor) / factor
    inner = t[:-1, None] + frac[None, :] * g.widths[:, None]
    inner[:, 0] = t[:-1]
    return Grid(np.concatenate([inner.ravel(), t[-1:]]))


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Piecewise-constant function: ``values[i]`` holds on cell ``i``.

    ``values`` has shape ``(n,)`` for scalar functions or ``(n, d)`` for
    functions with values in d-dimensional Euclidean space.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim not in (1, 2) or v.shape[0] != self.grid.n:
            raise InvalidArgument(
                f"expected {self.grid.n} cell values, got array of shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("step function values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == 2

    @property
    def dim(self) -> int:
        return self.values.shape[1] if self.is_vector else 1

    def magnitude(self) -> "StepFunction":
        """Pointwise Euclidean norm (absolute value for scalars)."""
        if self.is_vector:
            return StepFunction(self.grid, np.linalg.norm(self.values, axis=1))
        return StepFunction(self.grid, np.abs(self.values))

    @cached_property
    def prefix(self) -> np.ndarray:
        """``P[k] = integral over [0, t_k]``; scalar functions only."""
        if self.is_vector:
            raise InvalidArgument("prefix integrals need a scalar function")
        return _frozen(np.concatenate([[0.0], np.cumsum(self.values * self.grid.widths)]))

    def primitive(self, x) -> np.ndarray:
        """Exact value of the integral over [0, x] (piecewise linear in x)."""
        x = np.asarray(x, dtype=float)
        i = self.grid.locate(x)
        return self.prefix[i] + self.values[i] * (x - self.grid.breakpoints[i])

    def with_values(self, values) -> "StepFunction":
        return StepFunction(self.grid, values)

    def reflected(self) -> "StepFunction":
        """The function ``t -> f(T - t)`` on the reflected grid."""
        return StepFunction(self.grid.reflected(), self.values[::-1])

    def __eq__(self, other):
        if not isinstance(other, StepFunction):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    __hash__ = None

    def __repr__(self):
        shape = "vector" if self.is_vector else "scalar"
        return f"StepFunction({shape}, n={self.grid.n}, T={self.grid.T:g})"


@dataclass(frozen=True, eq=False)
class Weight(StepFunction):
    """Strictly positive scalar step function.

    ``rule`` records how cell values were produced (``tabulated``,
    ``average``, ``midpoint`` or ``quadrature``); ``label`` names the family.
    """

    rule: str = "tabulated"
    label: str = ""

    def __post_init__(self):
        try:
            super().__post_init__()
        except InvalidArgument as exc:
            raise InvalidWeight(str(exc)) from None
        if self.is_vector:
            raise InvalidWeight("a weight must be scalar")
        if np.any(self.values <= 0):
            bad = int(np.argmax(self.values <= 0))
            raise InvalidWeight(f"weight must be strictly positive; cell {bad} is {self.values[bad]!r}")

    def reflected(self) -> "Weight":
        return Weight(self.grid.reflected(), self.values[::-1], rule=self.rule, label=self.label)

    def mass(self, a: float = 0.0, b: float | None = None) -> float:
        return integrate(self, a, self.grid.T if b is None else b)


def constant(grid: Grid, c: float = 1.0) -> StepFunction:
    return StepFunction(grid, np.full(grid.n, float(c)))


def _check_interval(g: Grid, a: float, b: float) -> tuple[float, float]:
    tol = 1e-12 * g.T
    if not (np.isfinite(a) and np.isfinite(b)):
        raise InvalidArgument("integration limits must be finite")
    if a > b:
        raise InvalidArgument(f"integration limits out of order: a={a!r} > b={b!r}")
    if a < -tol or b > g.T + tol:
        raise InvalidArgument(f"[{a!r}, {b!r}] is not inside [0, {g.T!r}]")
    return max(a, 0.0), min(b, g.T)


def integrate(f: StepFunction, a: float, b: float) -> float:
    """Exact integral of a scalar step function over [a, b]."""
    a, b = _check_interval(f.grid, float(a), float(b))
    if a == b:
        return 0.0
    return float(f.primitive(b) - f.primitive(a))

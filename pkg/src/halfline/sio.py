"""Causal operator-valued kernels on [0, T], their one-sided Dini constants,
the singular integral operator and exact Duhamel solves.

Kernels are supported on ``{t > s}``. Values are d x d real matrices and
``|K|`` is the spectral norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.integrate
import scipy.linalg

from .errors import InvalidArgument, InvalidGenerator, QuadratureFailure
from .grid import StepFunction

__all__ = [
    "MatrixGenerator",
    "KernelSpec",
    "semigroup_kernel",
    "convolution_kernel",
    "zero_kernel",
    "truncate",
    "ProbePlan",
    "DiniReport",
    "dini_constant",
    "apply_sio",
    "DuhamelResult",
    "duhamel_solve",
    "duhamel_batch",
]

EIG_COND_LIMIT = 1e8


@dataclass(frozen=True, eq=False)
class MatrixGenerator:
    """A real square matrix ``A`` whose semigroup ``exp(-tA)`` is used.

    ``method`` records how exponentials are formed: ``"eig"`` through the
    eigendecomposition when its eigenvector matrix has condition number
    below 1e8, ``"pade"`` (scaling and squaring) otherwise.
    """

    A: np.ndarray
    eigenvalues: np.ndarray = field(init=False, repr=False)
    method: str = field(init=False)
    condition: float = field(init=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim == 0:
            A = A.reshape(1, 1)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InvalidGenerator(f"A must be a square matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise InvalidGenerator("A must be finite")
        A.setflags(write=False)
        lam, V = np.linalg.eig(A)
        cond = float(np.linalg.cond(V)) if np.all(np.isfinite(V)) else math.inf
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "condition", cond)
        if cond < EIG_COND_LIMIT:
            object.__setattr__(self, "method", "eig")
            object.__setattr__(self, "_V", V)
            object.__setattr__(self, "_Vinv", np.linalg.inv(V))
        else:
            object.__setattr__(self, "method", "pade")

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def sectorial(self) -> bool:
        return bool(np.all(self.eigenvalues.real > 0))

    @property
    def invertible(self) -> bool:
        return bool(np.all(np.abs(self.eigenvalues) > 0)) and np.linalg.cond(self.A) < 1e14

    def semigroup(self, tau) -> np.ndarray:
        """``exp(-tau A)`` for a scalar or array of ``tau``; shape ``(..., d, d)``."""
        tau = np.asarray(tau, dtype=float)
        if self.method == "eig":
            e = np.exp(-tau[..., None] * self.eigenvalues)
            out = np.einsum("ij,...j,jk->...ik", self._V, e, self._Vinv)
            return np.real(out) if np.isrealobj(self.A) else out
        uniq, inv = np.unique(tau.reshape(-1), return_inverse=True)
        mats = np.zeros((uniq.size, self.dim, self.dim))
        for k, x in enumerate(uniq):
            mats[k] = scipy.linalg.expm(-x * self.A)
        return mats[inv.reshape(-1)].reshape(tau.shape + (self.dim, self.dim))

    def kernel_bound(self, us=None) -> float:
        """``max_u u |A exp(-uA)|`` over ``u`` in [1e-6, 1e2]."""
        us = np.logspace(-6, 2, 161) if us is None else np.asarray(us, dtype=float)
        K = self.A @ self.semigroup(us)
        return float(np.max(us * np.linalg.norm(K, ord=2, axis=(-2, -1))))


def _require_sectorial(gen: MatrixGenerator):
    if not gen.sectorial:
        raise InvalidGenerator(
            f"generator is not sectorial: eigenvalues {np.round(gen.eigenvalues, 6).tolist()}"
        )


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Causal kernel ``K(t, s)``, zero unless ``t > s``.

    ``profile(u)`` is set for kernels of the form ``K(t, s) = phi(t - s)``;
    ``cell_integral(t, s1, s2)`` returns the exact integral of ``K(t, .)``
    over ``[s1, s2] intersected with {s < t}``. ``singularity`` is the order
    of blow-up of ``|K|`` at the diagonal.
    """

    evaluate: Callable
    dim: int
    cell_integral: Callable | None = None
    profile: Callable | None = None
    singularity: float = 1.0
    label: str = ""
    cutoff: float = math.inf

    def __call__(self, t: float, s: float) -> np.ndarray:
        if not (t > s) or t >= self.cutoff:
            return np.zeros((self.dim, self.dim))
        return self.evaluate(t, s)


def semigroup_kernel(A) -> KernelSpec:
    """``K(t, s) = A exp(-(t-s) A)``; cell integrals need no inverse of A."""
    gen = A if isinstance(A, MatrixGenerator) else MatrixGenerator(A)
    _require_sectorial(gen)
    M = gen.A

    def phi(u):
        return M @ gen.semigroup(u)

    def evaluate(t, s):
        return phi(t - s)

    def cell(t, s1, s2):
        lo, hi = min(s1, t), min(s2, t)
        if hi <= lo:
            return np.zeros((gen.dim, gen.dim))
        return gen.semigroup(t - hi) - gen.semigroup(t - lo)

    k = KernelSpec(evaluate, gen.dim, cell, phi, singularity=0.0, label=f"semigroup(d={gen.dim})")
    object.__setattr__(k, "generator", gen)
    return k


def convolution_kernel(phi: Callable, dim: int = 1, singularity: float = 0.0, label: str = "") -> KernelSpec:
    """``K(t, s) = phi(t - s)`` for a matrix- or scalar-valued ``phi``."""

    def as_mat(u):
        return np.atleast_2d(np.asarray(phi(u), dtype=float)).reshape(dim, dim)

    return KernelSpec(lambda t, s: as_mat(t - s), dim, None, as_mat, singularity, label or "convolution")


def zero_kernel(dim: int = 1) -> KernelSpec:
    z = np.zeros((dim, dim))
    return KernelSpec(lambda t, s: z, dim, lambda t, a, b: z, lambda u: z, 0.0, "zero")


def truncate(K: KernelSpec, tau: float) -> KernelSpec:
    """The kernel restricted to ``t < tau`` (local versions of the conditions)."""
    if not tau > 0:
        raise InvalidArgument("truncation time must be positive")
    cell = None
    if K.cell_integral is not None:
        base = K.cell_integral

        def cell(t, s1, s2):
            if t >= tau:
                return np.zeros((K.dim, K.dim))
            return base(t, s1, s2)

    return KernelSpec(K.evaluate, K.dim, cell, None, K.singularity, f"{K.label}|t<{tau:g}", min(K.cutoff, tau))


# ---------------------------------------------------------------------------
# Dini constants


@dataclass(frozen=True)
class ProbePlan:
    """Probe grid for the Dini sups: anchors and ``h = base 2^{k/per_octave}``."""

    anchors: tuple = (0.0,)
    h_min: float = 2.0 ** -8
    h_max: float = 2.0 ** 4
    per_octave: int = 8

    def h_values(self) -> np.ndarray:
        if not (0 < self.h_min <= self.h_max) or self.per_octave < 1:
            raise InvalidArgument("probe plan needs 0 < h_min <= h_max and per_octave >= 1")
        k0 = math.floor(self.per_octave * math.log2(self.h_min))
        k1 = math.ceil(self.per_octave * math.log2(self.h_max))
        return 2.0 ** (np.arange(k0, k1 + 1) / self.per_octave)


@dataclass(frozen=True)
class DiniReport:
    estimate: float
    truncation_bound: float
    condition: str
    r: float | None
    shells: int
    witness: tuple
    shell_terms: tuple
    h_grid: tuple
    anchors: tuple
    bound_direction: str = "lower"


def _opnorm(M) -> float:
    M = np.atleast_2d(M)
    if M.shape == (1, 1):
        return abs(float(M[0, 0]))
    return float(np.linalg.norm(M, 2))


def _shell_integral(fun, lo, hi, r):
    if hi <= lo:
        return 0.0
    g = (lambda x: fun(x) ** r) if r != 1 else fun
    val, err = scipy.integrate.quad(g, lo, hi, limit=200, epsabs=1e-15, epsrel=1e-11)
    if err > 1e-6 * abs(val) + 1e-14:
        raise QuadratureFailure(f"shell [{lo:g}, {hi:g}] did not converge", cell=(lo, hi), estimate=val, error=err)
    return max(val, 0.0) ** (1.0 / r)


def _tail(terms: np.ndarray, hint: float) -> float:
    nz = terms[terms > 0]
    if nz.size == 0:
        return 0.0
    last = nz[-1]
    rho = 0.0
    if nz.size >= 3:
        rho = max(nz[-1] / nz[-2], nz[-2] / nz[-3])
    elif nz.size == 2:
        rho = nz[-1] / nz[-2]
    if rho >= 1:
        rho = 2.0 ** (-hint) if hint > 0 else 1.0
    if rho >= 1:
        return math.inf
    return float(last * rho / (1.0 - rho))


def dini_constant(K: KernelSpec, condition: str = "D1_plus", shells: int = 30,
                  probes: ProbePlan | None = None, r: float | None = None) -> DiniReport:
    """Lower-bound estimate of a one-sided Dini constant over a probe grid.

    ``D1_plus``: ``sup_{s,h} sum_{m=1}^{M} int_{2^m h < t-s <= 2^{m+1} h} |K(t,s) - K(t,s+h)| dt``.
    ``Dr_prime_plus``: ``sup_{t,h} h^{1/r'} sum_m 2^{m/r'} (int_{J_m} |K(t,s) - K(t-h,s)|^r ds)^{1/r}``
    with ``J_m = {s >= 0: 2^m h < t-s <= 2^{m+1} h}``. Anchors are ``s`` for the
    first condition and ``t`` for the second (``inf`` means the full half-line).
    The dropped shells ``m > M`` are bounded by continuing the last observed
    geometric ratio.
    """
    probes = ProbePlan() if probes is None else probes
    if int(shells) < 1:
        raise InvalidArgument("shells must be >= 1")
    hs = probes.h_values()
    anchors = tuple(float(a) for a in probes.anchors)
    if not anchors or hs.size == 0:
        raise InvalidArgument("probe plan is empty")
    if condition == "D1_plus":
        r_use, rp = 1.0, math.inf
    elif condition == "Dr_prime_plus":
        if r is None or not (1 < r < math.inf):
            raise InvalidArgument("Dr_prime_plus needs r in (1, inf)")
        r_use, rp = float(r), float(r) / (float(r) - 1.0)
    else:
        raise InvalidArgument(f"unknown condition {condition!r}")
    M = int(shells)
    best, wit, best_terms, tail_max = -1.0, None, (), 0.0
    cache = {}
    for a in anchors:
        for h in hs:
            h = float(h)
            if condition == "D1_plus":
                key = ("d1", h) if K.profile is not None and math.isinf(K.cutoff) else None
                s = a

                def fun(u, s=s, h=h):
                    # u = t - s
                    return _opnorm(K(s + u, s) - K(s + u, s + h))
            else:
                key = ("dr", h) if (K.profile is not None and math.isinf(a) and math.isinf(K.cutoff)) else None
                t = a

                def fun(u, t=t, h=h):
                    # u = t - s, with t = inf read through the profile
                    if math.isinf(t):
                        return _opnorm(K.profile(u) - K.profile(u - h))
                    return _opnorm(K(t, t - u) - K(t - h, t - u))

            if key is not None and key in cache:
                terms = cache[key]
            else:
                terms = np.zeros(M)
                for m in range(1, M + 1):
                    lo, hi = 2.0 ** m * h, 2.0 ** (m + 1) * h
                    if condition == "Dr_prime_plus" and not math.isinf(a):
                        hi = min(hi, a)  # s >= 0
                    terms[m - 1] = _shell_integral(fun, lo, hi, r_use)
                if condition == "Dr_prime_plus":
                    terms = terms * h ** (1.0 / rp) * 2.0 ** (np.arange(1, M + 1) / rp)
                if key is not None:
                    cache[key] = terms
            val = float(np.sum(terms))
            if condition == "Dr_prime_plus" and 2.0 ** (M + 1) * h >= a:
                tail = 0.0  # every dropped shell lies below s = 0
            else:
                tail = _tail(terms, K.singularity if K.singularity > 0 else 1.0)
            tail_max = max(tail_max, tail)
            if val > best:
                best, wit, best_terms = val, (a, h), tuple(terms.tolist())
    return DiniReport(
        estimate=best,
        truncation_bound=tail_max,
        condition=condition,
        r=None if condition == "D1_plus" else r_use,
        shells=M,
        witness=wit,
        shell_terms=best_terms,
        h_grid=tuple(hs.tolist()),
        anchors=anchors,
    )


# ---------------------------------------------------------------------------
# the operator


def _cell_weights(K: KernelSpec, t: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """``int_{lo_j}^{hi_j} K(t, s) ds`` for every cell with ``hi_j <= t``."""
    d = K.dim
    out = np.zeros((lo.size, d, d))
    gen = getattr(K, "generator", None)
    if gen is not None and t < K.cutoff:
        out[:] = gen.semigroup(t - hi) - gen.semigroup(t - lo)
        return out
    for j in range(lo.size):
        if K.cell_integral is not None:
            out[j] = K.cell_integral(t, lo[j], hi[j])
            continue
        if t >= K.cutoff:
            continue
        res, err, info = scipy.integrate.quad_vec(lambda s: K(t, s), lo[j], hi[j], epsrel=1e-10,
                                                  epsabs=1e-14, limit=2000, full_output=True)
        # a diverging integral can report a small error; trust the status too
        if not info.success or err > 1e-6 * np.linalg.norm(res) + 1e-14:
            raise QuadratureFailure(
                f"quadrature on cell {j} = [{lo[j]:g}, {hi[j]:g}) at t={t:g} did not converge",
                cell=j, estimate=res, error=err,
            )
        out[j] = res
    return out


def apply_sio(K: KernelSpec, f: StepFunction, t_eval=None):
    """``Tf(t) = int_0^t K(t, s) f(s) ds`` at the left endpoints of ``f``'s grid.

    With ``t_eval`` given, returns an array of shape ``(len(t_eval), d)``
    instead of a step function.
    """
    vals = f.values if f.is_vector else f.values[:, None]
    if vals.shape[1] != K.dim:
        raise InvalidArgument(f"kernel acts on dimension {K.dim}, f has dimension {vals.shape[1]}")
    g = f.grid
    pts = g.left if t_eval is None else np.atleast_1d(np.asarray(t_eval, dtype=float))
    t = g.breakpoints
    out = np.zeros((pts.size, K.dim))
    for i, x in enumerate(pts):
        # cells meeting [0, x)
        m = int(np.searchsorted(t, x, side="left"))
        m = min(m, g.n)
        if m == 0:
            continue
        lo = t[:m]
        hi = np.minimum(t[1:m + 1], x)
        W = _cell_weights(K, float(x), lo, hi)
        out[i] = np.einsum("jab,jb->a", W, vals[:m])
    if t_eval is not None:
        return out
    return StepFunction(g, out if f.is_vector else out[:, 0])


@dataclass(frozen=True)
class DuhamelResult:
    u: StepFunction
    Au: StepFunction
    u_dot: StepFunction
    u_end: np.ndarray
    method: str


def _step_operators(gen: MatrixGenerator, widths: np.ndarray):
    """Per-cell ``E_i = exp(-Delta_i A)`` and ``G_i = A^{-1} (I - E_i)``."""
    E = gen.semigroup(widths)
    I = np.eye(gen.dim)
    # A G_i = I - E_i, solved without forming the inverse
    G = np.linalg.solve(gen.A[None, :, :], I[None, :, :] - E)
    return E, G


def _checked_generator(A) -> MatrixGenerator:
    gen = A if isinstance(A, MatrixGenerator) else MatrixGenerator(A)
    _require_sectorial(gen)
    if not gen.invertible:
        raise InvalidGenerator("A must be invertible")
    return gen


def duhamel_batch(A, grid, values: np.ndarray):
    """``(u, Au)`` at all n+1 breakpoints for a stack of step inputs.

    ``values`` has shape ``(n, d, P)``: P right-hand sides sharing one grid.
    """
    gen = _checked_generator(A)
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 3 or vals.shape[0] != grid.n or vals.shape[1] != gen.dim:
        raise InvalidArgument(f"expected values of shape ({grid.n}, {gen.dim}, P), got {vals.shape}")
    E, G = _step_operators(gen, grid.widths)
    Gf = np.einsum("iab,ibp->iap", G, vals)
    u = np.zeros((grid.n + 1,) + vals.shape[1:])
    for i in range(grid.n):
        u[i + 1] = E[i] @ u[i] + Gf[i]
    Au = np.einsum("ab,ibp->iap", gen.A, u)
    return u, Au


def duhamel_solve(A, f: StepFunction) -> DuhamelResult:
    """Exact solution of ``u' + A u = f``, ``u(0) = 0``, for step ``f``.

    Cell by cell, ``u(t_{i+1}) = E u(t_i) + A^{-1} (I - E) f_i`` with
    ``E = exp(-Delta_i A)``. ``u``, ``Au`` and ``u' = f - Au`` are sampled at
    left endpoints; ``u_end`` is ``u(T)``.
    """
    gen = _checked_generator(A)
    d = gen.dim
    vals = f.values if f.is_vector else f.values[:, None]
    if vals.shape[1] != d:
        raise InvalidArgument(f"generator has dimension {d}, f has dimension {vals.shape[1]}")
    u, Au = duhamel_batch(gen, f.grid, vals[:, :, None])
    u, Au = u[:, :, 0], Au[:-1, :, 0]
    udot = vals - Au
    wrap = (lambda x: x) if f.is_vector else (lambda x: x[:, 0])
    return DuhamelResult(
        u=StepFunction(f.grid, wrap(u[:-1])),
        Au=StepFunction(f.grid, wrap(Au)),
        u_dot=StepFunction(f.grid, wrap(udot)),
        u_end=u[-1].copy(),
        method=gen.method,
    )

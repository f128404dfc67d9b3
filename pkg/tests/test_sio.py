import math

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg

from halfline.errors import InvalidArgument, InvalidGenerator, QuadratureFailure
from halfline.grid import StepFunction, constant, make_graded_grid, make_uniform_grid
from halfline.sio import (
    MatrixGenerator,
    ProbePlan,
    apply_sio,
    convolution_kernel,
    dini_constant,
    duhamel_batch,
    duhamel_solve,
    semigroup_kernel,
    truncate,
    zero_kernel,
)

DIAG = np.diag([1.0, 2.0])
JORDAN = np.array([[1.0, 1.0], [0.0, 1.0]])


def bump(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = (u > 1) & (u < 2)
    out[inside] = np.exp(-1.0 / ((u[inside] - 1) * (2 - u[inside])))
    return out


def test_scalar_semigroup_kernel():
    K = semigroup_kernel([[3.0]])
    assert K(1.0, 0.25)[0, 0] == pytest.approx(3 * math.exp(-3 * 0.75), rel=1e-14)
    assert K(0.25, 1.0)[0, 0] == 0.0
    assert semigroup_kernel([[1.0]]).cell_integral(1.0, 0.0, 1.0)[0, 0] == pytest.approx(1 - math.exp(-1), rel=1e-14)


def test_diagonal_kernel_decouples():
    K = semigroup_kernel(DIAG)
    M = K(2.0, 0.5)
    np.testing.assert_allclose(M, np.diag([math.exp(-1.5), 2 * math.exp(-3.0)]), rtol=1e-14, atol=1e-300)


@pytest.mark.parametrize("A", [DIAG, JORDAN, np.array([[2.0, -1.0], [1.0, 2.0]])])
def test_cell_integral_matches_quadrature(A, rng):
    K = semigroup_kernel(A)
    for _ in range(10):
        s1, s2 = np.sort(rng.uniform(0, 3, 2))
        t = s2 + rng.uniform(0.05, 2)
        ref = scipy.integrate.quad_vec(lambda s: K(t, s), s1, s2, epsabs=1e-14, epsrel=1e-12)[0]
        np.testing.assert_allclose(K.cell_integral(t, s1, s2), ref, rtol=1e-8, atol=1e-12)


def test_generator_method_and_semigroup():
    d = MatrixGenerator(DIAG)
    j = MatrixGenerator(JORDAN)
    assert d.method == "eig" and j.method == "pade"
    for gen, A in ((d, DIAG), (j, JORDAN)):
        taus = np.array([0.0, 0.3, 2.5])
        ref = np.stack([scipy.linalg.expm(-x * A) for x in taus])
        np.testing.assert_allclose(gen.semigroup(taus), ref, rtol=1e-12, atol=1e-15)
    assert MatrixGenerator([[2.0]]).dim == 1


def test_kernel_bound_is_refinement_stable():
    for A, expect in ((DIAG, math.exp(-1)), (JORDAN, None)):
        gen = MatrixGenerator(A)
        coarse = gen.kernel_bound()
        fine = gen.kernel_bound(np.logspace(-6, 2, 1281))
        assert np.isfinite(coarse)
        assert abs(fine / coarse - 1) < 0.01
        if expect is not None:
            assert coarse == pytest.approx(expect, rel=1e-12)


def test_generator_errors():
    with pytest.raises(InvalidGenerator):
        semigroup_kernel([[-1.0]])
    with pytest.raises(InvalidGenerator):
        semigroup_kernel(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    with pytest.raises(InvalidGenerator):
        MatrixGenerator(np.ones((2, 3)))
    g = make_uniform_grid(1.0, 4)
    with pytest.raises(InvalidGenerator):
        duhamel_solve([[0.0]], constant(g, 1.0))


def test_d1_anchor():
    rep = dini_constant(semigroup_kernel([[1.0]]), "D1_plus", shells=30)
    assert abs(rep.estimate - 0.25) <= 0.01 * 0.25
    # closed form on the same h grid
    hs = np.array(rep.h_grid)
    closed = np.max((np.exp(hs) - 1) * (np.exp(-2 * hs) - np.exp(-2.0 ** 31 * hs)))
    assert rep.estimate == pytest.approx(closed, rel=1e-8)
    assert rep.bound_direction == "lower"


def test_d1_truncation_decays_geometrically():
    K = semigroup_kernel([[1.0]])
    bounds = [dini_constant(K, "D1_plus", shells=M).truncation_bound for M in (4, 6, 8, 10, 12)]
    assert bounds[-1] < 1e-8
    for a, b in zip(bounds, bounds[1:]):
        assert b < 0.5 * a


@pytest.mark.parametrize("r", [1.5, 2.0, 4.0])
def test_dr_prime_closed_form(r):
    rp = r / (r - 1)
    plan = ProbePlan(anchors=(math.inf,))
    rep = dini_constant(semigroup_kernel([[1.0]]), "Dr_prime_plus", shells=30, probes=plan, r=r)
    m = np.arange(1, 31)
    best = 0.0
    for h in rep.h_grid:
        shell = ((np.exp(-r * 2.0 ** m * h) - np.exp(-r * 2.0 ** (m + 1) * h)) / r) ** (1 / r)
        best = max(best, float(np.sum(h ** (1 / rp) * 2.0 ** (m / rp) * (np.exp(h) - 1) * shell)))
    assert rep.estimate == pytest.approx(best, rel=1e-8)
    assert np.isfinite(rep.truncation_bound)
    short = dini_constant(semigroup_kernel([[1.0]]), "Dr_prime_plus", shells=6, probes=plan, r=r)
    assert short.truncation_bound > rep.truncation_bound


def test_dini_of_zero_kernel():
    rep = dini_constant(zero_kernel(2), "D1_plus")
    assert (rep.estimate, rep.truncation_bound) == (0.0, 0.0)


def test_bump_kernel_against_dense_quadrature():
    K = convolution_kernel(lambda u: bump(u), 1, 0.0, "bump")
    plan = ProbePlan(h_min=2.0 ** -4, h_max=2.0, per_octave=4)
    rep = dini_constant(K, "D1_plus", shells=30, probes=plan)
    best = 0.0
    for h in rep.h_grid:
        lo, hi = max(2 * h, 1.0), min(2.0 ** 31 * h, 2.0 + h)
        if hi <= lo:
            continue
        u = np.linspace(lo, hi, 400_001)
        best = max(best, float(np.trapezoid(np.abs(bump(u) - bump(u - h)), u)))
    assert rep.estimate == pytest.approx(best, rel=1e-6)


def test_dini_errors():
    K = semigroup_kernel([[1.0]])
    with pytest.raises(InvalidArgument):
        dini_constant(K, shells=0)
    with pytest.raises(InvalidArgument):
        dini_constant(K, probes=ProbePlan(anchors=()))
    with pytest.raises(InvalidArgument):
        dini_constant(K, "Dr_prime_plus")
    with pytest.raises(InvalidArgument):
        dini_constant(K, "D2")


def test_apply_sio_closed_forms():
    g = make_uniform_grid(3.0, 30)
    Tf = apply_sio(semigroup_kernel([[1.0]]), constant(g, 1.0))
    np.testing.assert_allclose(Tf.values, 1 - np.exp(-g.left), rtol=1e-13, atol=1e-16)
    F = StepFunction(g, np.ones((30, 2)))
    TF = apply_sio(semigroup_kernel(DIAG), F)
    np.testing.assert_allclose(TF.values[:, 0], 1 - np.exp(-g.left), rtol=1e-13, atol=1e-16)
    np.testing.assert_allclose(TF.values[:, 1], 1 - np.exp(-2 * g.left), rtol=1e-13, atol=1e-16)
    zero = apply_sio(semigroup_kernel(DIAG), StepFunction(g, np.zeros((30, 2))))
    np.testing.assert_array_equal(zero.values, 0.0)
    pts = apply_sio(semigroup_kernel([[1.0]]), constant(g, 1.0), t_eval=[0.5, 3.0])
    np.testing.assert_allclose(pts[:, 0], 1 - np.exp(-np.array([0.5, 3.0])), rtol=1e-13)


def test_apply_sio_quadrature_path_matches_cell_integrals(rng):
    g = make_graded_grid(2.0, 12, 2.0)
    f = StepFunction(g, rng.normal(size=(12, 2)))
    exact = semigroup_kernel(JORDAN)
    gen = MatrixGenerator(JORDAN)
    generic = convolution_kernel(lambda u: JORDAN @ gen.semigroup(u), 2, 0.0)
    np.testing.assert_allclose(apply_sio(generic, f).values, apply_sio(exact, f).values, rtol=1e-8, atol=1e-12)


@pytest.mark.parametrize("A", [DIAG, JORDAN])
def test_apply_sio_is_linear(A, rng):
    K = semigroup_kernel(A)
    g = make_graded_grid(4.0, 40, 2.0)
    f = StepFunction(g, rng.normal(size=(40, 2)))
    h = StepFunction(g, rng.normal(size=(40, 2)))
    a, b = rng.normal(size=2)
    lhs = apply_sio(K, StepFunction(g, a * f.values + b * h.values)).values
    rhs = a * apply_sio(K, f).values + b * apply_sio(K, h).values
    scale = np.abs(a) * np.abs(apply_sio(K, f).values).max() + np.abs(b) * np.abs(apply_sio(K, h).values).max()
    assert np.abs(lhs - rhs).max() <= 1e-10 * scale


def test_nonintegrable_kernel_raises():
    K = convolution_kernel(lambda u: u ** -1.5, 1, 1.5)
    with pytest.raises(QuadratureFailure) as exc:
        apply_sio(K, constant(make_uniform_grid(1.0, 4), 1.0))
    assert exc.value.cell == 0


def test_truncated_kernel():
    K = truncate(semigroup_kernel([[1.0]]), 2.0)
    assert K(1.5, 0.5)[0, 0] == pytest.approx(math.exp(-1.0))
    assert K(2.5, 0.5)[0, 0] == 0.0
    g = make_uniform_grid(4.0, 8)
    Tf = apply_sio(K, constant(g, 1.0)).values
    assert np.all(Tf[g.left >= 2.0] == 0.0)
    with pytest.raises(InvalidArgument):
        truncate(K, 0.0)


def test_duhamel_identity_generator():
    g = make_uniform_grid(4.0, 64)
    x0 = np.array([2.0, -1.0])
    res = duhamel_solve(np.eye(2), StepFunction(g, np.tile(x0, (64, 1))))
    decay = 1 - np.exp(-g.left)
    np.testing.assert_allclose(res.u.values, np.outer(decay, x0), rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(res.Au.values, res.u.values, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(res.u_dot.values, np.outer(np.exp(-g.left), x0), rtol=1e-13)
    zero = duhamel_solve(np.eye(2), StepFunction(g, np.zeros((64, 2))))
    assert not zero.u.values.any() and not zero.Au.values.any() and not zero.u_end.any()


def _rk4(A, f_of_t, T, dt):
    y = np.zeros(A.shape[0])
    steps = int(round(T / dt))
    out = [y.copy()]
    for k in range(steps):
        t = k * dt

        def rhs(s, y):
            return f_of_t(s) - A @ y

        k1 = rhs(t, y)
        k2 = rhs(t + dt / 2, y + dt / 2 * k1)
        k3 = rhs(t + dt / 2, y + dt / 2 * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(y.copy())
    return np.array(out)


@pytest.mark.parametrize("e", [np.array([1.0, 0.0]), np.array([0.0, 1.0])])
def test_duhamel_jordan_against_rk4(e):
    T, dt = 2.0, 1e-4
    g = make_uniform_grid(T, 8)
    res = duhamel_solve(JORDAN, StepFunction(g, np.tile(e, (8, 1))))
    assert res.method == "pade"
    ref = _rk4(JORDAN, lambda s: e, T, dt)
    idx = np.rint(g.left / dt).astype(int)
    np.testing.assert_allclose(res.u.values, ref[idx], atol=1e-6)
    np.testing.assert_allclose(res.u_end, ref[-1], atol=1e-6)


def test_duhamel_matches_apply_sio(rng):
    g = make_graded_grid(3.0, 24, 2.0)
    f = StepFunction(g, rng.normal(size=(24, 2)))
    for A in (DIAG, JORDAN):
        np.testing.assert_allclose(duhamel_solve(A, f).Au.values, apply_sio(semigroup_kernel(A), f).values,
                                   rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("A", [DIAG, JORDAN])
def test_duhamel_finite_difference_residual(A, rng):
    g = make_graded_grid(4.0, 200, 2.0)
    f = StepFunction(g, rng.normal(size=(200, 2)))
    res = duhamel_solve(A, f)
    u = np.vstack([res.u.values, res.u_end])
    fd = np.diff(u, axis=0) / g.widths[:, None]
    # inside a cell u_dot' = -A u_dot, so |u_dot| varies by at most
    # Delta |A| max|u_dot| across it
    normA = np.linalg.norm(A, 2)
    lip = normA * np.linalg.norm(res.u_dot.values, axis=1) * np.exp(normA * g.widths)
    err = np.linalg.norm(fd - res.u_dot.values, axis=1)
    assert np.all(err <= 10 * g.widths * lip + 1e-12)


def test_duhamel_batch_shapes():
    g = make_uniform_grid(1.0, 5)
    u, Au = duhamel_batch(DIAG, g, np.ones((5, 2, 3)))
    assert u.shape == (6, 2, 3) and Au.shape == (6, 2, 3)
    with pytest.raises(InvalidArgument):
        duhamel_batch(DIAG, g, np.ones((5, 3, 1)))

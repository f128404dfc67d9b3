import itertools

import numpy as np
import pytest
from scipy import optimize
from hypothesis import given
from hypothesis import strategies as st

from halfline.errors import InvalidArgument, InvalidWeight
from halfline.grid import Grid, StepFunction, Weight, integrate, make_graded_grid, make_uniform_grid
from halfline.maximal import Side, one_sided_maximal_oracle
from halfline.weights import (
    Exponential,
    Power,
    Product,
    Ramp,
    WeightSpec,
    a1_constant,
    doubling_probe,
    family_from_dict,
    openness_probe,
    reverse_holder_probe,
    sawyer_constant,
)

from conftest import random_step, weights


def ones(T, n):
    g = make_uniform_grid(T, n)
    return Weight(g, np.ones(n))


def analytic(p):
    return (p - 1) ** (p - 1) / p ** p


@pytest.mark.parametrize("variant", ["minus", "plus"])
def test_constant_weight_anchor(variant):
    r = sawyer_constant(ones(1.0, 64), 2.0, variant)
    assert abs(r.constant - 0.25) <= 0.02 * 0.25
    assert r.bound_direction == "exact"
    a, b, c = r.witness
    assert a < b < c


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.5])
def test_constant_weight_matches_optimum(p):
    assert sawyer_constant(ones(1.0, 128), p).constant == pytest.approx(analytic(p), rel=2e-2)


def test_power_minus_half_is_stable():
    vals = [sawyer_constant(WeightSpec(Power(-0.5), make_graded_grid(1.0, n, 4.0)), 2.0).constant
            for n in (32, 64, 128, 256)]
    for a, b in zip(vals, vals[1:]):
        assert abs(b / a - 1) < 0.05
    assert np.isfinite(vals[-1])


def test_power_one_grows_like_log():
    vals = [sawyer_constant(WeightSpec(Power(1.0), make_uniform_grid(1.0, n)), 2.0).constant
            for n in (32, 64, 128)]
    steps = np.diff(vals)
    assert np.all(steps > 0)
    # roughly constant increments per doubling, i.e. linear in log n
    assert steps[1] / steps[0] == pytest.approx(1.0, abs=0.1)


def test_witness_is_lexicographically_smallest():
    # for w = 1 every scale attains 1/4; the smallest candidate triple puts
    # b inside the first cell
    for variant in ("minus", "plus"):
        r = sawyer_constant(ones(1.0, 16), 2.0, variant)
        assert r.witness == pytest.approx((0.0, 1 / 32, 1 / 16), abs=1e-15)


def test_jump_is_seen_at_every_scale():
    # the heavy cell is short, so only a triple with a inside the first cell
    # can centre on the jump
    w = Weight(Grid([0.0, 1.0, 1.1, 3.0]), [1.0, 9.0, 1.0])
    r = sawyer_constant(w, 2.0)
    assert r.constant == pytest.approx(9 * 0.25, rel=1e-12)
    assert r.free_axis == 0
    a, b, c = r.witness
    assert 0 < a < 1.0 == b < c <= 1.1


@given(weights(max_n=30), st.floats(1.1, 5.0))
def test_reflection_consistency(w, p):
    plus = sawyer_constant(w, p, "plus").constant
    minus_reflected = sawyer_constant(w.reflected(), p, "minus").constant
    assert plus == minus_reflected


def test_sampled_never_exceeds_exact(rng):
    equal = 0
    trials = 100
    for k in range(trials):
        f = random_step(rng, int(rng.integers(4, 120)), positive=True)
        w = Weight(f.grid, f.values)
        p = float(rng.uniform(1.2, 4.0))
        ex = sawyer_constant(w, p)
        sa = sawyer_constant(w, p, method="sampled", seed=k)
        assert sa.bound_direction == "lower"
        assert sa.evaluations <= 50 * w.grid.n
        assert sa.constant <= ex.constant
        equal += sa.constant == ex.constant
    assert equal >= 0.9 * trials


def _real_triple_objective(w, p, a, b, c):
    sigma = StepFunction(w.grid, w.values ** (-1.0 / (p - 1.0)))
    return integrate(w, b, c) * integrate(sigma, a, b) ** (p - 1) / (c - a) ** p


@pytest.mark.parametrize("seed", range(6))
def test_candidate_set_attains_the_real_sup(seed):
    rng = np.random.default_rng(seed)
    f = random_step(rng, 5, positive=True)
    w = Weight(f.grid, f.values)
    p = float(rng.uniform(1.3, 3.5))
    exact = sawyer_constant(w, p)
    T = w.grid.T
    # uniform lattice plus geometric zooms onto every breakpoint
    zoom = (w.grid.breakpoints[:, None] + np.outer([-1, 1], np.geomspace(1e-4, 0.5, 12) * T).ravel()[None, :])
    dense = np.union1d(np.linspace(0, T, 41), np.clip(zoom.ravel(), 0, T))
    tri = np.array(list(itertools.combinations(dense, 3)))
    Wp = np.concatenate([[0.0], np.cumsum(w.values * w.grid.widths)])
    Sp = np.concatenate([[0.0], np.cumsum(w.values ** (-1 / (p - 1)) * w.grid.widths)])

    def objective(x):
        Wi = np.interp(x, w.grid.breakpoints, Wp)
        Si = np.interp(x, w.grid.breakpoints, Sp)
        return (Wi[..., 2] - Wi[..., 1]) * (Si[..., 1] - Si[..., 0]) ** (p - 1) / (x[..., 2] - x[..., 0]) ** p

    lat = objective(tri)
    top = np.argsort(-lat)[:15]
    assert lat[top[0]] <= exact.constant * (1 + 1e-12)

    def neg(x):
        x = np.clip(x, 0, T)
        return -objective(x) if x[0] < x[1] < x[2] else 0.0

    polished = max(-optimize.minimize(neg, x0, method="Nelder-Mead",
                                      options={"xatol": 1e-13, "fatol": 1e-15, "maxiter": 4000}).fun
                   for x0 in tri[top])
    assert polished <= exact.constant * (1 + 1e-12)
    assert polished >= exact.constant * (1 - 1e-9)
    assert _real_triple_objective(w, p, *exact.witness) == pytest.approx(exact.constant, rel=1e-12)


def test_sawyer_errors():
    w = ones(1.0, 8)
    with pytest.raises(InvalidArgument):
        sawyer_constant(w, 1.0)
    with pytest.raises(InvalidArgument):
        sawyer_constant(w, 2.0, method="guess")
    with pytest.raises(InvalidArgument):
        sawyer_constant(ones(1.0, 300), 2.0)
    with pytest.raises(InvalidWeight):
        Weight(w.grid, np.r_[np.ones(7), -1.0])


def test_product_rule_mirrored_ramp_is_stable():
    fam = Product((Ramp(1.0, 1.0, mirrored=True), Ramp(0.0, 1.0)))
    for variant in ("minus", "plus"):
        vals = [sawyer_constant(WeightSpec(fam, make_uniform_grid(8.0, n)), 2.0, variant).constant
                for n in (32, 64, 128, 256)]
        for a, b in zip(vals, vals[1:]):
            assert abs(b / a - 1) < 0.05


def test_product_values_are_cellwise_products():
    g = make_graded_grid(2.0, 16, 2.0)
    fam = Product((Power(-0.5), Exponential(0.3)))
    w = WeightSpec(fam, g).materialize()
    a = WeightSpec(Power(-0.5), g).materialize().values
    b = WeightSpec(Exponential(0.3), g).materialize().values
    np.testing.assert_array_equal(w.values, a * b)
    assert w.rule == "product(average,average)"


def test_power_rule_fallback():
    g = make_graded_grid(1.0, 8, 3.0)
    assert WeightSpec(Power(-1.5), g).materialize().rule == "midpoint"
    assert WeightSpec(Power(-0.5), g).materialize().rule == "average"
    w = WeightSpec(Power(-0.5), g).materialize()
    # cell averages integrate t^-1/2 exactly
    assert integrate(w, 0, 1.0) == pytest.approx(2.0, rel=1e-13)


def test_family_round_trip():
    fam = Product((Power(-0.5), Ramp(2.0, 1.0, True), Exponential(-1.0)))
    assert family_from_dict(fam.to_dict()) == fam
    with pytest.raises(InvalidArgument):
        family_from_dict({"family": "gaussian"})


def test_a1_examples():
    assert a1_constant(ones(3.0, 40)) == 1.0
    pw = a1_constant(WeightSpec(Power(-0.5), make_graded_grid(1.0, 64, 3.0)))
    assert np.isfinite(pw) and pw >= 1.0
    growth = [a1_constant(WeightSpec(Ramp(1.0, 1.0), make_uniform_grid(T, 64)), "minus") for T in (4, 8, 16, 32)]
    assert np.all(np.diff(growth) > 0)


def test_a1_matches_oracle_maximal(rng):
    f = random_step(rng, 40, positive=True)
    w = Weight(f.grid, f.values)
    # minus class pairs with the forward operator
    m = one_sided_maximal_oracle(w, Side.FORWARD)
    assert a1_constant(w, "minus") == pytest.approx(np.max(m.values / w.values), rel=1e-12)


def test_reverse_holder_examples():
    r = reverse_holder_probe(ones(1.0, 64), 2.0, [0.1, 0.5])
    for c, _ in r.table.values():
        assert c == pytest.approx(1.0, abs=1e-12)
    r = reverse_holder_probe(WeightSpec(Power(-0.5), make_uniform_grid(1.0, 128)), 2.0, [0.1, 0.25, 0.5], "plus")
    cs = [r.table[d][0] for d in (0.1, 0.25, 0.5)]
    assert np.all(np.isfinite(cs)) and np.all(np.diff(cs) > 0)
    # the reported pair is the cheapest one
    assert r.delta == 0.1 and r.constant == cs[0]
    with pytest.raises(InvalidArgument):
        reverse_holder_probe(ones(1.0, 4), 2.0, [])


def test_reverse_holder_spike_witness():
    g = make_uniform_grid(1.0, 64)
    v = np.ones(64)
    v[40] = 1e-4
    r = reverse_holder_probe(Weight(g, v), 2.0, [0.1, 0.25, 0.5])
    for c, (b, _) in r.table.values():
        assert np.isfinite(c) and c > 1
        assert b == g.breakpoints[40]


def test_doubling_examples():
    for seed in range(3):
        assert doubling_probe(ones(1.0, 64), 1.0, 2000, seed=seed) <= 1.0 + 1e-12
    est = [doubling_probe(WeightSpec(Power(-0.5), make_uniform_grid(1.0, 128)), 0.5, 10_000, seed=s)
           for s in range(3)]
    assert np.all(np.isfinite(est))
    assert max(est) / min(est) - 1 < 0.10


def test_openness_examples():
    r = openness_probe(ones(1.0, 64), 2.0, [1.8, 1.5, 1.2, 1.05])
    assert r.q == 1.05 and r.found
    for row in r.trajectory:
        assert row["constants"][1] == pytest.approx(analytic(row["q"]), rel=0.02)
    r = openness_probe(WeightSpec(Power(-0.5), make_graded_grid(1.0, 64, 4.0)), 2.0, [1.8, 1.5, 1.2])
    assert r.found and r.q < 2
    grid = [1.95, 1.9, 1.85, 1.8, 1.7, 1.5, 1.2]
    r = openness_probe(WeightSpec(Power(0.9), make_graded_grid(1.0, 64, 4.0)), 2.0, grid)
    assert r.q == 1.9
    assert not r.trajectory[-1]["stable"]
    with pytest.raises(InvalidArgument):
        openness_probe(ones(1.0, 8), 2.0, [1.5, 1.8])

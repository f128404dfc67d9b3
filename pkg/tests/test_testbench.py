import math

import numpy as np
import pytest

from halfline.errors import ConfigError, InvalidArgument
from halfline.grid import make_uniform_grid
from halfline.testbench import (
    KINDS,
    ExperimentConfig,
    ExperimentReport,
    ProbeSpec,
    probe_family,
    run_experiment,
    sweep,
)

SMALL = dict(n=32, levels=2)


def test_resolution_fills_kind_defaults():
    cfg = ExperimentConfig("weak-type-constant").resolved()
    assert (cfg.T, cfg.n, cfg.seed, cfg.levels) == (8.0, 512, 0, 4)
    neg = ExperimentConfig("negative-control").resolved()
    assert neg.T_ladder == (4.0, 8.0, 16.0)
    assert neg.weights == ({"family": "exponential", "gamma": 1.0},)
    assert ExperimentConfig("embedding").resolved().q == 3.0


@pytest.mark.parametrize("bad", [
    dict(kind="nope"),
    dict(kind="coifman", n=1),
    dict(kind="coifman", T=-1.0),
    dict(kind="coifman", levels=1),
    dict(kind="coifman", weights=({"family": "nope"},)),
    dict(kind="coifman", weights=()),
    dict(kind="coifman", side="sideways"),
    dict(kind="coifman", generator=((1.0, 2.0),)),
    dict(kind="coifman", rule="simpson"),
    dict(kind="embedding", q=1.0),
    dict(kind="negative-control", T_ladder=(4.0,)),
    dict(kind="sawyer-equivalence", seed=1.5),
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**bad).resolved()


def test_probe_spec_validation():
    with pytest.raises(ConfigError):
        ProbeSpec(families=("indicators", "noise"))
    with pytest.raises(ConfigError):
        ProbeSpec(families=())
    with pytest.raises(ConfigError):
        ProbeSpec(count=-1)


def test_probe_family_contents():
    cfg = ExperimentConfig("weak-type-constant", n=64).resolved()
    g = make_uniform_grid(8.0, 64)
    probes = probe_family(cfg, g)
    labels = [lab for lab, _ in probes]
    assert len(labels) == len(set(labels))
    assert {"spike[0]", "spike[63]", "osc[1]", "random[3]", "ind[0,8)"} <= set(labels)
    again = probe_family(cfg, g)
    assert all(np.array_equal(a.values, b.values) for (_, a), (_, b) in zip(probes, again))
    other = probe_family(cfg, g, level=1)
    r0 = dict(probes)["random[0]"].values
    assert not np.array_equal(r0, dict(other)["random[0]"].values)


def test_report_round_trip_and_determinism():
    cfg = ExperimentConfig("weak-type-constant", **SMALL)
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert a == b
    assert a.to_dict(canonical=True) == b.to_dict(canonical=True)
    assert ExperimentReport.from_dict(a.to_dict()) == a
    assert a.config_hash == cfg.resolved().digest()
    assert [row["level"] for row in a.levels] == [0, 1]
    assert [row["n"] for row in a.levels] == [32, 64]


def test_weak_type_example():
    rep = run_experiment(ExperimentConfig("weak-type-constant", weights=({"family": "power", "beta": 0.0},),
                                          n=64, levels=3))
    assert rep.verdict == "pass"
    for row in rep.levels:
        assert row["bound"]["power(0)"] == pytest.approx(4.0)
        assert row["measured"]["power(0)"] <= 4.0 + 1e-9


def test_negative_control_example():
    rep = run_experiment(ExperimentConfig("negative-control", n=64))
    assert rep.verdict == "pass"
    s = next(iter(rep.series.values()))
    assert all(b >= 2 * a for a, b in zip(s, s[1:]))


def test_negative_control_fails_for_a_good_weight():
    rep = run_experiment(ExperimentConfig("negative-control", n=64,
                                          weights=({"family": "power", "beta": 0.0},)))
    assert rep.verdict == "fail"


def test_maxreg_example():
    rep = run_experiment(ExperimentConfig("maxreg-first-order", n=64, levels=3))
    assert rep.verdict == "pass", rep.criterion


def test_coifman_chain_dominates_strong_type():
    rep = run_experiment(ExperimentConfig("strong-type-lpw", n=32, levels=3))
    for row in rep.levels:
        for lab, strong in row["strong"].items():
            assert row["coifman"][lab] >= strong / row["maximal_q"][lab] * 0.95


def test_sweep_order_errors_and_edges():
    assert sweep([]) == []
    one = ExperimentConfig("embedding", **SMALL)
    assert sweep([one]) == [run_experiment(one)]
    bad = ExperimentConfig("maxreg-first-order", n=16, levels=2, generator=((-1.0,),))
    cfgs = [one, bad, ExperimentConfig("fefferman-stein", n=16, levels=2, label="fs")]
    out = sweep(cfgs)
    assert [r.label for r in out] == ["embedding", "maxreg-first-order", "fs"]
    assert out[1].verdict == "error" and out[0].verdict == "pass"
    assert "InvalidGenerator" in out[1].criterion
    with pytest.raises(InvalidArgument):
        sweep(cfgs, parallelism=0)


def test_sweep_parallel_matches_serial():
    cfgs = [ExperimentConfig(k, n=16, levels=2, seed=3) for k in ("embedding", "weak-type-constant", "lorentz-shimogaki")]
    a = sweep(cfgs, 1)
    b = sweep(cfgs, 3)
    assert [r.to_dict(canonical=True) for r in a] == [r.to_dict(canonical=True) for r in b]


def test_kind_list_is_complete():
    assert len(KINDS) == 13 and len(set(KINDS)) == 13

import json

import numpy as np
import pytest
from scipy import stats

from meco.model import INFINITE, scenario_to_dict
from meco.scenario import (BITS_PER_KB, GenSpec, default_spec, desk_spec, dump_spec, generate,
                           load_spec, trial_seed)


def test_default_constants():
    d = default_spec()
    assert d.T == 0.1 and d.B == 10e6 and d.N0 == 1e-9 and d.K == 30
    assert d.cloud_F == 6e9
    assert d.avg_path_gain == 1e-6
    assert d.R_range == (819200.0, 4096000.0)
    assert d.R_range == (100 * BITS_PER_KB, 500 * BITS_PER_KB)
    assert d.P_range == (0.0, 20e-11)
    assert d.C_range == (500.0, 1500.0)
    assert d.Fk_choices == pytest.approx([i * 1e8 for i in range(1, 11)])


def test_desk_family_only_rescales_data():
    a, b = default_spec(), desk_spec()
    assert b.R_range == (2e4, 1e5)
    assert a.with_(R_range=b.R_range) == b


@pytest.mark.parametrize("bad", [dict(K=0), dict(P_range=(1.0, 0.0)), dict(seed=-1),
                                 dict(R_range=(0.0, 1.0)), dict(Fk_choices=())])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        GenSpec(**bad)


def test_same_seed_same_scenario():
    spec = default_spec().with_(seed=123)
    assert generate(spec) == generate(spec)
    assert generate(spec) != generate(spec.with_(seed=124))


def test_user_streams_do_not_depend_on_cell_size():
    small = generate(default_spec().with_(K=3, seed=9))
    large = generate(default_spec().with_(K=30, seed=9))
    assert small.users == large.users[:3]


def test_stream_contract_is_frozen():
    # first user of seed 0; a change here breaks every stored scenario
    frozen = {"beta": 1.0, "C": 1064.4146216071338, "P": 4.8309839312543625e-11,
              "h2": 2.6742121017929485e-06, "R": 1184320.2433513496, "Fk": 100000000.0}
    assert scenario_to_dict(generate(default_spec().with_(K=1, seed=0)))["users"][0] == frozen


def test_ranges():
    s = generate(default_spec().with_(K=2000, seed=3))
    P, C, R = s.column("P"), s.column("C"), s.column("R")
    assert np.all((P >= 0) & (P < 2e-10))
    assert np.all((C >= 500) & (C < 1500))
    assert np.all((R >= 819200) & (R < 4096000))
    assert set(s.column("Fk")) <= set(default_spec().Fk_choices)


def test_channel_mean():
    h2 = generate(default_spec().with_(K=100_000, seed=1)).column("h2")
    assert abs(h2.mean() / 1e-6 - 1) < 0.02


def test_marginals_ks():
    spec = default_spec()
    s = generate(spec.with_(K=10_000, seed=2))
    alpha = 0.01
    checks = {
        "P": stats.kstest(s.column("P"), "uniform", args=(0, 2e-10)),
        "C": stats.kstest(s.column("C"), "uniform", args=(500, 1000)),
        "R": stats.kstest(s.column("R"), "uniform", args=(819200, 4096000 - 819200)),
        "h2": stats.kstest(s.column("h2"), "expon", args=(0, 1e-6)),
    }
    for name, res in checks.items():
        assert res.pvalue > alpha, name
    counts = np.array([np.sum(s.column("Fk") == v) for v in spec.Fk_choices])
    assert stats.chisquare(counts).pvalue > alpha


def test_spec_json_round_trip(tmp_path):
    spec = desk_spec(seed=2**64 - 1, cloud_F=INFINITE)
    p = tmp_path / "spec.json"
    dump_spec(spec, p)
    assert load_spec(p) == spec
    assert json.loads(p.read_text())["cloud_F"] == "inf"
    with pytest.raises(ValueError):
        GenSpec.from_dict({"bogus": 1})


def test_trial_seeds():
    seeds = [trial_seed(7, t) for t in range(1000)]
    assert len(set(seeds)) == 1000
    assert seeds[:3] == [trial_seed(7, 0), trial_seed(7, 1), trial_seed(7, 2)]
    assert trial_seed(7, 0) != trial_seed(8, 0)
    assert all(0 <= v < 2**64 for v in seeds)

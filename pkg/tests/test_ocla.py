import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_cut, footprint_points, lower_left_chain
from splitpoint.delaymodel import ResourceState, TrainingConfig, epoch_delay, resource_for_operating_point
from splitpoint.netprofile import build_profile, parse_architecture, random_architecture
from splitpoint.ocla import (
    VIRTUAL,
    CandidateSet,
    RegionStore,
    SelectionError,
    SplitRegionTable,
    build_region_table,
    check_partition,
    offline_phase,
    prune_profile_function,
    prune_tradeoff,
    select_cut_layer,
    tradeoff,
)

DK = 9992


def _arch(layers, length=64, channels=4):
    return build_profile(parse_architecture({"input": {"len": length, "channels": channels}, "layers": layers}))


def test_step1_reference(profile):
    assert prune_profile_function(profile, DK).layers == (1, 2, 3, 4, 5, 6)


def test_step1_nothing_to_prune():
    # pools only: activations shrink strictly, no parameters
    p = _arch([{"kind": "pool1d", "kernel": 2}] * 4 + [{"kind": "fully_connected", "out_features": 2}])
    assert prune_profile_function(p, 100).layers == (1, 2, 3, 4)


def test_step1_equal_footprint_prunes_deeper():
    p = _arch([{"kind": "pool1d", "kernel": 2}, {"kind": "dropout"}, {"kind": "fully_connected", "out_features": 2}])
    assert prune_profile_function(p, 100).layers == (1,)


def test_step1_chains_to_surviving_predecessor():
    # layer 3 is smaller than layer 2 but not smaller than layer 1
    p = _arch([
        {"kind": "pool1d", "kernel": 2},
        {"kind": "conv1d", "kernel": 1, "out_channels": 16},
        {"kind": "conv1d", "kernel": 1, "out_channels": 6},
        {"kind": "conv1d", "kernel": 1, "out_channels": 2},
        {"kind": "fully_connected", "out_features": 2},
    ])
    # act sizes: 128, 512, 192, 64
    assert prune_profile_function(p, 10**9).layers == (1, 4)


def test_tradeoff_values(profile):
    assert tradeoff(profile, 0, 1, DK) == math.inf
    assert tradeoff(profile, 2, 3, DK) == pytest.approx((157200 - 19600) * 32 / 156800, rel=1e-12)
    assert tradeoff(profile, 2, 3, DK) == pytest.approx(28.08, abs=5e-3)
    assert tradeoff(profile, 6, VIRTUAL, DK) < 0


def test_step2_reference(profile, offline):
    assert offline.step2.layers == (1, 3, 6)
    assert offline.step2.passes >= 2  # needs more than one sweep


def test_step2_matches_convex_hull(profile, offline):
    pts = footprint_points(profile, offline.step1.layers, DK)
    assert tuple(lower_left_chain(pts)) == offline.step2.layers


def test_step2_fixpoint_unchanged(profile, offline):
    again = prune_tradeoff(CandidateSet(offline.step2.layers, "after_step1"), profile, DK)
    assert again.layers == offline.step2.layers and again.passes == 1


def test_two_candidates_kept():
    p = _arch([{"kind": "conv1d", "kernel": 3, "out_channels": 8}, {"kind": "pool1d", "kernel": 4},
               {"kind": "fully_connected", "out_features": 2}])
    s1 = prune_profile_function(p, 1000)
    assert s1.layers == (1, 2)
    assert tradeoff(p, 1, 2, 1000) > 0
    assert prune_tradeoff(s1, p, 1000).layers == (1, 2)


def test_region_table_reference(table, profile):
    d13 = tradeoff(profile, 1, 3, DK)
    d36 = tradeoff(profile, 3, 6, DK)
    assert [(e.layer, e.low, e.high) for e in table.entries] == [(1, d13, math.inf), (3, d36, d13), (6, 0.0, d36)]
    assert d13 == pytest.approx(8.837e-3, rel=1e-3)
    assert d36 == pytest.approx(5.524e-3, rel=1e-3)
    assert table.boundaries == sorted(table.boundaries, reverse=True)


def test_single_candidate_table():
    p = _arch([{"kind": "pool1d", "kernel": 2}, {"kind": "fully_connected", "out_features": 2}])
    off = offline_phase(p, 10)
    assert [(e.layer, e.low, e.high) for e in off.table.entries] == [(1, 0.0, math.inf)]


def test_region_table_needs_step2(offline, profile):
    with pytest.raises(ValueError):
        build_region_table(offline.step1, profile, DK)


def test_select_extremes(table):
    assert select_cut_layer(table, resource_for_operating_point(1.0)) == 1
    assert select_cut_layer(table, resource_for_operating_point(1e-12)) == 6
    assert table.lookup(table.region_of(3).low) == 3  # boundary goes to the shallower layer


def test_select_requires_faster_server(table):
    with pytest.raises(SelectionError, match="faster"):
        select_cut_layer(table, ResourceState(1e9, 1e9, 1e6))
    with pytest.raises(SelectionError):
        select_cut_layer(table, ResourceState(2e9, 1e9, 1e6))


def test_lookup_many_matches_lookup(table):
    pts = np.logspace(-6, 2, 2001)
    pts = np.concatenate([pts, table.boundaries])
    assert table.lookup_many(pts).tolist() == [table.lookup(x) for x in pts]


def test_table_json_roundtrip(table, tmp_path):
    path = tmp_path / "t.json"
    table.save(path)
    back = SplitRegionTable.load(path)
    assert back.entries == table.entries
    assert back.arch_digest == table.arch_digest and back.dataset_size == DK


def test_corrupt_table_rejected(table):
    d = table.to_dict()
    d["entries"][1]["theta_high"] = 1.0
    with pytest.raises(ValueError):
        SplitRegionTable.from_dict(d)


def test_region_store(profile, tmp_path):
    store = RegionStore(tmp_path / "db.json")
    assert store.get(profile, DK) is None
    t = store.get_or_build(profile, DK)
    assert store.get(profile, DK).entries == t.entries
    assert store.get(profile, 10000) is None
    store.get_or_build(profile, 10000)
    assert len(store._read()) == 2


def test_large_dataset_boundaries_drop_parameters(arch):
    p = build_profile(arch)
    zero = build_profile(arch)
    object.__setattr__(zero, "cum_params", np.zeros_like(zero.cum_params))
    ref = offline_phase(zero, 10**9).table

    def gap(dk):
        t = offline_phase(p, dk).table
        assert t.layers == ref.layers
        return max(abs(a - b) / b for a, b in zip(t.boundaries, ref.boundaries))

    # relative shift of the (n, m) boundary is dParams / (D * dActs); worst pair here is 3 -> 6
    layers = ref.layers
    worst = max(
        (int(p.cum_params[m]) - int(p.cum_params[n])) / (int(p.act_size[n]) - int(p.act_size[m]))
        for n, m in zip(layers, layers[1:])
    )
    assert gap(10**9) == pytest.approx(worst / 10**9, rel=1e-3)
    assert gap(10**8) / gap(10**9) == pytest.approx(10, rel=1e-3)
    assert gap(10**11) < 1e-9


def _boundary_flip_check(profile, table, dk):
    cfg = TrainingConfig(dataset_size=dk, batch_size=100)
    layers = table.layers
    for n, nxt in zip(layers, layers[1:]):
        b = tradeoff(profile, n, nxt, dk)
        for factor, deeper_slower in ((1 + 1e-6, True), (1 - 1e-6, False)):
            res = resource_for_operating_point(b * factor, 3e9, 40.0)
            diff = epoch_delay(profile, nxt, res, cfg).total - epoch_delay(profile, n, res, cfg).total
            assert (diff > 0) == deeper_slower
        res = resource_for_operating_point(b, 3e9, 40.0)
        t1, t2 = epoch_delay(profile, n, res, cfg).total, epoch_delay(profile, nxt, res, cfg).total
        assert abs(t1 - t2) <= 1e-9 * t1


def test_boundary_flip_reference(profile, table):
    _boundary_flip_check(profile, table, DK)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(3, 15))
def test_random_networks(seed, n):
    p = build_profile(random_architecture(np.random.default_rng(seed), n))
    off = offline_phase(p, DK)
    check_partition(off.table)
    assert off.step2.layers and p.n_layers not in off.step2.layers
    assert set(off.step2.layers) <= set(off.step1.layers)
    assert tuple(lower_left_chain(footprint_points(p, off.step1.layers, DK))) == off.step2.layers
    _boundary_flip_check(p, off.table, DK)
    rng = np.random.default_rng(seed)
    for point in 10 ** rng.uniform(-5, 2, 50):
        res = resource_for_operating_point(point, 2e9, float(rng.uniform(1.5, 80)))
        assert select_cut_layer(off.table, res) == brute_force_cut(p, res.client_speed, res.server_speed, res.rate, DK)

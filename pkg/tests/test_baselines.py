import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_cut
from splitpoint.baselines import SelectorKind, exhaustive_optimal, exhaustive_optimal_many, naive_select
from splitpoint.delaymodel import ResourceState, TrainingConfig, epoch_delay, resource_for_operating_point
from splitpoint.netprofile import build_profile, parse_architecture, random_architecture

CFG = TrainingConfig(dataset_size=9992, batch_size=100)


def test_exhaustive_inside_layer3_region(profile, table):
    e = table.region_of(3)
    res = resource_for_operating_point((e.low * e.high) ** 0.5)
    cut, b = exhaustive_optimal(profile, res, CFG)
    assert cut == 3 and b == epoch_delay(profile, 3, res, CFG)


def test_two_layer_network():
    p = build_profile(parse_architecture({"input": {"len": 8, "channels": 1},
                                          "layers": [{"kind": "pool1d", "kernel": 2}, {"kind": "fully_connected", "out_features": 2}]}))
    assert exhaustive_optimal(p, ResourceState(1, 2, 3), CFG)[0] == 1


def test_exact_tie_goes_to_smaller_load(profile):
    # dropout layer 7 is indistinguishable from layer 6: equal delay, equal load
    deep = resource_for_operating_point(1e-9)
    assert epoch_delay(profile, 6, deep, CFG).total == epoch_delay(profile, 7, deep, CFG).total
    assert exhaustive_optimal(profile, deep, CFG)[0] == 6


def test_oracle_works_without_faster_server(profile):
    assert 1 <= exhaustive_optimal(profile, ResourceState(1e10, 1e9, 1e6), CFG)[0] <= 7


def test_naive(profile, table):
    assert naive_select(SelectorKind("naive", 3), profile) == 3
    assert naive_select(SelectorKind.parse("naive:1"), profile) == 1
    with pytest.raises(ValueError):
        naive_select(SelectorKind("naive", 8), profile)
    fast = resource_for_operating_point(table.region_of(1).low * 10)
    assert exhaustive_optimal(profile, fast, CFG)[0] != naive_select(SelectorKind("naive", 3), profile)


@pytest.mark.parametrize("text", ["ocla", "exhaustive", "naive:4"])
def test_selector_roundtrip(text):
    assert str(SelectorKind.parse(text)) == text


@pytest.mark.parametrize("text", ["naive", "naive:x", "greedy", "ocla:2"])
def test_selector_rejects(text):
    with pytest.raises(ValueError):
        SelectorKind.parse(text)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 9))
def test_linear_matches_quadratic(seed, n):
    rng = np.random.default_rng(seed)
    p = build_profile(random_architecture(rng, n))
    fk = rng.uniform(1e8, 1e10, 30)
    fs = fk * rng.uniform(0.5, 100, 30)
    r = 10 ** rng.uniform(4, 10, 30)
    many = exhaustive_optimal_many(p, fk, fs, r, CFG)
    for i in range(30):
        res = ResourceState(fk[i], fs[i], r[i])
        assert exhaustive_optimal(p, res, CFG)[0] == many[i] == brute_force_cut(p, fk[i], fs[i], r[i], 9992)

import itertools
import logging

import numpy as np
import pytest

from app.schemas.schemas import RadioParams
from app.services.allocator import (
    allocate_all,
    build_weights,
    hungarian_max_weight,
    select_uplink_rb,
)
from app.services.radio import Allocation, ChannelState, audit_allocation, downlink_rates


def _brute_force(w):
    rows, cols = w.shape
    if rows <= cols:
        perms = np.array(list(itertools.permutations(range(cols), rows)))
        return w[np.arange(rows), perms].sum(axis=1).max()
    perms = np.array(list(itertools.permutations(range(rows), cols)))
    return w[perms, np.arange(cols)].sum(axis=1).max()


def _random_channel(rng, num_users, num_bs):
    return ChannelState(
        user_gain=rng.uniform(0.002, 0.05, size=(num_users, num_bs)),
        cloud_gain=rng.uniform(0.01, 0.03, size=num_bs),
    )


def test_hungarian_small_example():
    result = hungarian_max_weight([[5.0, 3.0], [4.0, 1.0]])
    assert set(result.pairs) == {(0, 1), (1, 0)}
    assert result.total_weight == 7.0


def test_hungarian_single_cell():
    result = hungarian_max_weight([[2.5]])
    assert result.pairs == ((0, 0),)
    assert result.total_weight == 2.5


def test_hungarian_empty_and_invalid():
    assert len(hungarian_max_weight(np.zeros((0, 3)))) == 0
    assert len(hungarian_max_weight([])) == 0
    with pytest.raises(ValueError):
        hungarian_max_weight([[1.0, -1.0]])
    with pytest.raises(ValueError):
        hungarian_max_weight([[np.inf]])
    with pytest.raises(ValueError):
        hungarian_max_weight([1.0, 2.0])


@pytest.mark.parametrize("size", [2, 3, 4, 5, 6])
def test_hungarian_matches_brute_force(size):
    for seed in range(1000):
        w = np.random.default_rng(seed).integers(0, 10, size=(size, size)).astype(float)
        result = hungarian_max_weight(w)
        assert result.total_weight == _brute_force(w)
        rows, cols = zip(*result.pairs)
        assert len(set(rows)) == len(rows) == size
        assert len(set(cols)) == len(cols)


@pytest.mark.parametrize("shape", [(2, 5), (5, 2), (3, 4), (4, 3)])
def test_hungarian_rectangular(shape):
    for seed in range(200):
        w = np.random.default_rng(seed).integers(0, 10, size=shape).astype(float)
        result = hungarian_max_weight(w)
        assert len(result) == min(shape)
        assert result.total_weight == _brute_force(w)
        assert result.total_weight == sum(w[r, c] for r, c in result.pairs)


def test_weights_without_interference():
    params = RadioParams(noise_psd=1e-5, num_rbs=3)
    channel = ChannelState(user_gain=np.array([[0.01], [0.001]]), cloud_gain=np.array([0.02]))
    w = build_weights(0, [0, 1], [0, 2], Allocation.empty(1, 2, 3), channel, params)
    np.testing.assert_allclose(w, [[np.log2(1001.0)] * 2, [np.log2(101.0)] * 2])
    assert build_weights(0, [], [0, 1], Allocation.empty(1, 2, 3), channel, params).shape == (0, 2)


def test_weights_see_fixed_allocations():
    params = RadioParams(noise_psd=1e-5, num_rbs=2)
    channel = ChannelState(user_gain=np.array([[0.01, 0.005], [0.005, 0.01]]), cloud_gain=np.array([0.02, 0.02]))
    fixed = Allocation.empty(2, 2, 2)
    fixed.y[1, 0] = True
    w = build_weights(0, [0], [0, 1], fixed, channel, params)
    assert w[0, 0] < w[0, 1]
    assert w[0, 0] == pytest.approx(np.log2(1.0 + 0.01 / (0.005 + 1e-5)))


def test_uplink_selection():
    params = RadioParams(noise_psd=1e-5, num_rbs=3)
    channel = ChannelState(user_gain=np.full((1, 2), 0.01), cloud_gain=np.array([0.02, 0.02]))
    alloc = Allocation.empty(2, 1, 3)
    assert select_uplink_rb(0, False, alloc, channel, params) is None
    assert select_uplink_rb(0, True, alloc, channel, params) == 0
    alloc.x[0, 0, 0] = True
    assert select_uplink_rb(0, True, alloc, channel, params) == 1
    alloc.y[1, 1] = True
    assert select_uplink_rb(0, True, alloc, channel, params) == 2


def test_uplink_selection_respects_delay_cap(caplog):
    params = RadioParams(noise_psd=1e-5, num_rbs=2, payload=100.0, delay_cap=1.0)
    channel = ChannelState(user_gain=np.full((1, 1), 0.01), cloud_gain=np.array([0.02]))
    with caplog.at_level(logging.WARNING):
        assert select_uplink_rb(0, True, Allocation.empty(1, 1, 2), channel, params, slot=4) is None
    assert "falhou" in caplog.text


def test_single_bs_serves_everyone_and_syncs():
    params = RadioParams(noise_psd=1e-5, num_rbs=4)
    gains = np.array([[0.01], [0.02], [0.005]])
    channel = ChannelState(user_gain=gains, cloud_gain=np.array([0.02]))
    outcome = allocate_all([True], np.ones((1, 3), dtype=bool), channel, params)
    assert outcome.sync_success.tolist() == [True]
    assert outcome.unserved == []
    assert audit_allocation(outcome.allocation) == []
    rates = downlink_rates(outcome.allocation, channel, params)
    np.testing.assert_allclose(rates, np.log2(1.0 + gains[:, 0] / 1e-5))
    assert outcome.delays[0] == pytest.approx(1.0 / np.log2(1.0 + 0.02 / 1e-5))


def test_single_rb_all_sync_serves_nobody():
    params = RadioParams(num_rbs=1, delay_cap=1e9)
    channel = _random_channel(np.random.default_rng(0), 4, 3)
    assoc = np.zeros((3, 4), dtype=bool)
    assoc[0, :2] = assoc[1, 2:] = True
    outcome = allocate_all([True] * 3, assoc, channel, params, slot=2)
    # só um RB: o primeiro uplink o ocupa, os demais não têm onde transmitir
    assert outcome.sync_success.tolist() == [True, False, False]
    assert [f.bs for f in outcome.failures] == [1, 2]
    assert np.isinf(outcome.delays[1:]).all()
    assert not outcome.allocation.x.any()
    assert sorted(outcome.unserved) == [0, 1, 2, 3]


def test_surplus_users_are_left_unserved(caplog):
    params = RadioParams(num_rbs=2)
    channel = ChannelState(user_gain=np.array([[0.01], [0.03], [0.02]]), cloud_gain=np.array([0.02]))
    with caplog.at_level(logging.INFO):
        outcome = allocate_all([False], np.ones((1, 3), dtype=bool), channel, params)
    assert outcome.unserved == [0]
    assert not outcome.sync_success.any()
    assert np.isinf(outcome.delays[0])
    assert "sem RB" in caplog.text


def test_user_claimed_twice_is_served_once():
    params = RadioParams(num_rbs=3)
    channel = _random_channel(np.random.default_rng(3), 2, 2)
    assoc = np.array([[1, 1], [1, 0]], dtype=bool)
    outcome = allocate_all([False, False], assoc, channel, params)
    assert outcome.allocation.x[:, 0].sum() == 1
    assert audit_allocation(outcome.allocation) == []


def test_failed_sync_is_reported():
    params = RadioParams(num_rbs=3, payload=1e6, delay_cap=1.0)
    channel = _random_channel(np.random.default_rng(4), 2, 2)
    outcome = allocate_all([True, False], np.eye(2, dtype=bool), channel, params, slot=7)
    assert not outcome.sync_success.any()
    assert [(f.bs, f.slot) for f in outcome.failures] == [(0, 7)]
    assert outcome.failures[0].delay > 1.0


def test_random_actions_never_violate_constraints():
    for seed in range(200):
        rng = np.random.default_rng(seed)
        num_bs, num_users = 3, int(rng.integers(1, 7))
        params = RadioParams(num_rbs=int(rng.integers(1, 6)), delay_cap=float(rng.uniform(0.05, 2.0)))
        channel = _random_channel(rng, num_users, num_bs)
        assoc = rng.random((num_bs, num_users)) < 0.4
        syncs = rng.random(num_bs) < 0.5
        outcome = allocate_all(syncs, assoc, channel, params, refinement_rounds=int(rng.integers(1, 3)))
        alloc = outcome.allocation
        assert audit_allocation(alloc) == []
        assert not (alloc.x.any(axis=2) & ~assoc).any()
        assert not (alloc.y.any(axis=1) & ~syncs).any()
        assert np.all(outcome.delays[outcome.sync_success] <= params.delay_cap)


def test_refinement_never_lowers_total_rate():
    params = RadioParams(num_rbs=3, delay_cap=1e9)
    for seed in range(50):
        rng = np.random.default_rng(seed)
        channel = _random_channel(rng, 6, 3)
        assoc = np.zeros((3, 6), dtype=bool)
        assoc[rng.integers(0, 3, size=6), np.arange(6)] = True
        syncs = rng.random(3) < 0.5
        single = allocate_all(syncs, assoc, channel, params)
        refined = allocate_all(syncs, assoc, channel, params, refinement_rounds=3)
        assert downlink_rates(refined.allocation, channel, params).sum() >= downlink_rates(single.allocation, channel, params).sum()


def test_uplink_rbs_carry_nothing_else():
    for seed in range(200):
        rng = np.random.default_rng(seed)
        num_users = int(rng.integers(1, 8))
        params = RadioParams(num_rbs=int(rng.integers(3, 7)), delay_cap=1e9)
        channel = _random_channel(rng, num_users, 3)
        assoc = rng.random((3, num_users)) < 0.6
        outcome = allocate_all(np.ones(3, dtype=bool), assoc, channel, params, refinement_rounds=int(rng.integers(1, 3)))
        alloc = outcome.allocation
        assert outcome.sync_success.all()
        for bs in range(3):
            rb = alloc.uplink_rb(bs)
            assert alloc.y[:, rb].sum() == 1
            assert not alloc.x[:, :, rb].any()


def test_sync_delay_is_fixed_at_reservation():
    params = RadioParams(noise_psd=1e-5, num_rbs=8, delay_cap=1.0)
    channel = _random_channel(np.random.default_rng(9), 5, 3)
    assoc = np.zeros((3, 5), dtype=bool)
    assoc[[0, 0, 1, 2, 2], np.arange(5)] = True
    outcome = allocate_all([True] * 3, assoc, channel, params)
    # uplinks sem interferência: atraso = D / log2(1 + P g / (B N0))
    expected = 1.0 / np.log2(1.0 + channel.cloud_gain / 1e-5)
    np.testing.assert_allclose(outcome.delays, expected)
    assert outcome.failures == []
    assert outcome.unserved == []

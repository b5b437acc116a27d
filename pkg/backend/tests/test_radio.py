import logging

import numpy as np
import pytest

from app.schemas.schemas import RadioParams, Topology
from app.services.radio import (
    Allocation,
    ChannelState,
    FadingDraw,
    audit_allocation,
    build_channel,
    channel_gain,
    downlink_interference,
    downlink_interference_grid,
    downlink_rate,
    downlink_rates,
    draw_fading,
    uplink_delay,
    uplink_rate,
)

PARAMS = RadioParams(bandwidth=1.0, power=1.0, noise_psd=1e-5, num_rbs=2)


def test_channel_gain_examples():
    topology = Topology(bs_positions=[(0.0, 0.0)])
    assert channel_gain((100.0, 0.0), 0, topology, 1.0) == pytest.approx(0.01, rel=1e-12)
    assert channel_gain((4.0, 0.0), 0, topology, 2.0) == pytest.approx(0.5, rel=1e-12)
    assert channel_gain((4.0, 0.0), 0, topology, 2.0, "squared") == pytest.approx(0.125, rel=1e-12)


def test_zero_distance_is_clamped(caplog):
    topology = Topology(bs_positions=[(0.0, 0.0)])
    with caplog.at_level(logging.WARNING):
        gain = channel_gain((0.0, 0.0), 0, topology, 1.0)
    assert np.isfinite(gain)
    assert "limitando" in caplog.text


def test_isolated_link_rate():
    channel = ChannelState(user_gain=np.array([[0.01]]), cloud_gain=np.array([0.02]))
    alloc = Allocation.empty(1, 1, 2)
    alloc.x[0, 0, 0] = True
    assert abs(downlink_rate(0, 0, alloc, channel, PARAMS) - np.log2(1001.0)) < 1e-9


def test_interference_lowers_rate():
    channel = ChannelState(user_gain=np.array([[0.01, 0.005], [0.005, 0.01]]), cloud_gain=np.array([0.01, 0.01]))
    alloc = Allocation.empty(2, 2, 2)
    alloc.x[0, 0, 0] = True
    alone = downlink_rate(0, 0, alloc, channel, PARAMS)
    alloc.x[1, 1, 0] = True
    assert downlink_interference(0, 0, 0, alloc, channel, PARAMS) == pytest.approx(0.005)
    assert downlink_rate(0, 0, alloc, channel, PARAMS) < alone
    alloc.x[1, 1, 0] = False
    alloc.x[1, 1, 1] = True
    assert downlink_rate(0, 0, alloc, channel, PARAMS) == alone


def test_interference_sum_skips_the_victim():
    channel = ChannelState(user_gain=np.array([[0.01, 0.02]]), cloud_gain=np.array([0.01, 0.01]))
    alloc = Allocation.empty(2, 1, 1)
    alloc.x[0, 0, 0] = True
    alloc.x[1, 0, 0] = True
    assert downlink_interference(0, 0, 0, alloc, channel, PARAMS) == 0.0
    alloc.y[1, 0] = True
    assert downlink_interference(0, 0, 0, alloc, channel, PARAMS) == pytest.approx(0.02)


def test_interference_grid_matches_scalar(rng):
    channel = ChannelState(user_gain=rng.uniform(0.001, 0.02, size=(4, 3)), cloud_gain=rng.uniform(0.005, 0.01, size=3))
    alloc = Allocation.empty(3, 4, 3)
    alloc.x[1, 0, 2] = alloc.x[2, 1, 0] = True
    alloc.y[2, 1] = True
    grid = downlink_interference_grid([2, 3], 0, [0, 1, 2], alloc, channel, PARAMS)
    for i, u in enumerate([2, 3]):
        for j, rb in enumerate([0, 1, 2]):
            assert grid[i, j] == pytest.approx(downlink_interference(u, 0, rb, alloc, channel, PARAMS), rel=1e-12)


def test_uplink_rate_and_delay():
    channel = ChannelState(user_gain=np.zeros((1, 2)) + 0.01, cloud_gain=np.array([0.01, 0.004]))
    params = RadioParams(noise_psd=1e-5, payload=2.0, num_rbs=1)
    alloc = Allocation.empty(2, 1, 1)
    assert uplink_delay(0, alloc, channel, params) == float("inf")
    alloc.y[0, 0] = True
    alone = uplink_rate(0, alloc, channel, params)
    assert alone == pytest.approx(np.log2(1001.0))
    assert uplink_delay(0, alloc, channel, params) == pytest.approx(2.0 / alone)
    alloc.x[1, 0, 0] = True
    assert uplink_rate(0, alloc, channel, params) == pytest.approx(np.log2(1.0 + 0.01 / (0.004 + 1e-5)))


def test_downlink_rates_sum_per_user(rng):
    topology = Topology(bs_positions=[(-100.0, 0.0), (0.0, 0.0)])
    positions = np.array([[-90.0, 5.0], [10.0, -3.0], [0.0, 20.0]])
    channel = build_channel(positions, topology, draw_fading(3, 2, rng))
    alloc = Allocation.empty(2, 3, 2)
    alloc.x[0, 0, 0] = alloc.x[1, 1, 0] = True
    rates = downlink_rates(alloc, channel, PARAMS)
    assert rates[2] == 0.0
    assert rates[0] == downlink_rate(0, 0, alloc, channel, PARAMS)
    assert rates[1] == downlink_rate(1, 1, alloc, channel, PARAMS)


def test_fading_models(rng):
    flat = draw_fading(3, 2, rng, "none")
    assert np.all(flat.users == 1.0) and np.all(flat.cloud == 1.0)
    draws = draw_fading(20_000, 3, rng)
    assert abs(draws.users.mean() - 1.0) < 0.03
    assert np.all(draws.users > 0.0)


def test_fading_none_consumes_same_draws():
    a, b = np.random.default_rng(3), np.random.default_rng(3)
    draw_fading(4, 3, a, "none")
    draw_fading(4, 3, b, "rayleigh")
    assert a.random() == b.random()


def test_build_channel_uses_fading():
    topology = Topology(bs_positions=[(0.0, 0.0)], cloud_position=(0.0, 50.0))
    fading = FadingDraw(users=np.array([[2.0]]), cloud=np.array([3.0]))
    channel = build_channel(np.array([[10.0, 0.0]]), topology, fading)
    assert channel.user_gain[0, 0] == pytest.approx(0.2)
    assert channel.cloud_gain[0] == pytest.approx(3.0 / 50.0)


def test_audit_allocation():
    alloc = Allocation.empty(2, 3, 2)
    alloc.x[0, 0, 0] = alloc.x[1, 1, 0] = True
    alloc.y[0, 1] = True
    assert audit_allocation(alloc) == []

    double_booked = alloc.copy()
    double_booked.y[0, 0] = True
    assert "8f" in audit_allocation(double_booked)
    assert "8e" in audit_allocation(double_booked)

    two_rbs = alloc.copy()
    two_rbs.x[1, 0, 1] = True
    assert "8c" in audit_allocation(two_rbs)

    shared_rb = alloc.copy()
    shared_rb.x[0, 2, 0] = True
    assert set(audit_allocation(shared_rb)) >= {"8d", "8f"}

"""Network description and validation."""

import dataclasses

import pytest

from channet.errors import (
    BadSplitSum,
    CycleDetected,
    DisconnectedChannel,
    MultipleParents,
    TopologyError,
)
from channet.topology import (
    ChannelSpec,
    NetworkTopology,
    network_from_dict,
    network_to_dict,
    traversal_order,
    validate_topology,
)

from conftest import small_star


def chain(n):
    chans = {i: ChannelSpec(id=i, length=10.0) for i in range(1, n + 1)}
    junctions = {i: (i + 1,) for i in range(1, n)}
    splits = {i: (1.0,) for i in range(1, n)}
    return NetworkTopology(
        channels=chans, root_channel=1, junctions=junctions, split_fractions=splits
    )


def test_star_classification():
    topo = small_star()
    report = validate_topology(topo)
    assert topo.internal_channels == (1,)
    assert topo.terminal_channels == (2, 3, 4)
    # degree counts the incoming channel plus the three children
    assert report.junction_degrees == {1: 4}
    assert topo.parent_of(3) == 1
    assert topo.parent_of(1) is None
    assert topo.split_of(1, 4) == pytest.approx(0.2)


def test_traversal_parents_first():
    topo = small_star()
    order = traversal_order(topo)
    assert order[0] == topo.root_channel
    seen = set()
    for i in order:
        parent = topo.parent_of(i)
        assert parent is None or parent in seen
        seen.add(i)
    assert seen == set(topo.channels)


def test_chain_traversal():
    topo = chain(4)
    assert traversal_order(topo) == [1, 2, 3, 4]
    assert topo.terminal_channels == (4,)
    assert topo.internal_channels == (1, 2, 3)


def test_dict_round_trip():
    topo = small_star()
    again = network_from_dict(network_to_dict(topo))
    assert again == topo


def test_single_channel_network():
    topo = NetworkTopology(
        channels={7: ChannelSpec(id=7, length=5.0)},
        root_channel=7,
        junctions={},
        split_fractions={},
    )
    validate_topology(topo)
    assert topo.terminal_channels == (7,)
    assert topo.internal_channels == ()


def test_zero_split_fraction_allowed():
    topo = small_star()
    relaxed = dataclasses.replace(topo, split_fractions={1: (0.5, 0.5, 0.0)})
    validate_topology(relaxed)


def test_cycle_detected():
    chans = {i: ChannelSpec(id=i, length=10.0) for i in (1, 2)}
    topo = NetworkTopology(
        channels=chans,
        root_channel=1,
        junctions={1: (2,), 2: (1,)},
        split_fractions={1: (1.0,), 2: (1.0,)},
    )
    with pytest.raises(CycleDetected):
        validate_topology(topo)


def test_multiple_parents():
    chans = {i: ChannelSpec(id=i, length=10.0) for i in (1, 2, 3)}
    topo = NetworkTopology(
        channels=chans,
        root_channel=1,
        junctions={1: (2, 3), 3: (2,)},
        split_fractions={1: (0.5, 0.5), 3: (1.0,)},
    )
    with pytest.raises(MultipleParents):
        validate_topology(topo)


def test_disconnected_channel():
    chans = {i: ChannelSpec(id=i, length=10.0) for i in (1, 2, 9)}
    topo = NetworkTopology(
        channels=chans,
        root_channel=1,
        junctions={1: (2,)},
        split_fractions={1: (1.0,)},
    )
    with pytest.raises(DisconnectedChannel):
        validate_topology(topo)


def test_bad_split_sum():
    topo = small_star()
    broken = dataclasses.replace(topo, split_fractions={1: (0.5, 0.3, 0.1)})
    with pytest.raises(BadSplitSum):
        validate_topology(broken)


def test_negative_split_fraction():
    topo = small_star()
    broken = dataclasses.replace(topo, split_fractions={1: (1.2, -0.1, -0.1)})
    with pytest.raises(BadSplitSum):
        validate_topology(broken)


def test_unknown_junction_child():
    chans = {1: ChannelSpec(id=1, length=10.0)}
    topo = NetworkTopology(
        channels=chans,
        root_channel=1,
        junctions={1: (2,)},
        split_fractions={1: (1.0,)},
    )
    with pytest.raises(TopologyError):
        validate_topology(topo)


def test_missing_root():
    chans = {2: ChannelSpec(id=2, length=10.0)}
    topo = NetworkTopology(
        channels=chans, root_channel=1, junctions={}, split_fractions={}
    )
    with pytest.raises(TopologyError):
        validate_topology(topo)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"length": 0.0},
        {"length": -3.0},
        {"length": 10.0, "friction": -1e-3},
        {"length": 10.0, "friction_exponent": -0.5},
        {"length": 10.0, "gravity": 0.0},
        {"length": 10.0, "cells": 4},
    ],
)
def test_channel_spec_validation(kwargs):
    with pytest.raises(ValueError):
        ChannelSpec(id=1, **kwargs)

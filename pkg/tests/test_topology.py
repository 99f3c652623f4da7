"""Topology builder tests: counting formulas, wiring sanity, connectivity."""

from __future__ import annotations

from collections import defaultdict

import pytest

from flowplane.topology import (
    NetworkSpec,
    TopologyError,
    build_fat_tree,
    build_linear,
    parse_topology,
)


def adjacency(spec: NetworkSpec) -> dict[int, set[int]]:
    adj = defaultdict(set)
    for l in spec.links:
        adj[l.a_dpid].add(l.b_dpid)
        adj[l.b_dpid].add(l.a_dpid)
    return adj


def connected(spec: NetworkSpec) -> bool:
    adj = adjacency(spec)
    dpids = {s.dpid for s in spec.switches}
    seen = {next(iter(dpids))}
    frontier = list(seen)
    while frontier:
        cur = frontier.pop()
        for nxt in adj[cur]:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return seen == dpids


class TestFatTree:
    @pytest.mark.parametrize("k", [2, 4, 6])
    def test_counting_formulas(self, k):
        spec = build_fat_tree(k)
        assert len(spec.switches) == (k // 2) ** 2 + k * k
        assert len(spec.hosts) == k**3 // 4
        # core-agg and agg-edge layers each carry k * (k/2)^2 cables
        assert len(spec.links) == 2 * k * (k // 2) ** 2

    def test_k2_shape(self):
        spec = build_fat_tree(2)
        assert len(spec.switches) == 5
        assert len(spec.hosts) == 2

    def test_k4_shape(self):
        spec = build_fat_tree(4)
        assert len(spec.switches) == 20
        assert len(spec.hosts) == 16

    @pytest.mark.parametrize("k", [2, 4])
    def test_connected(self, k):
        assert connected(build_fat_tree(k))

    @pytest.mark.parametrize("bad", [3, 5, 0, -2, 1])
    def test_rejects_bad_arity(self, bad):
        with pytest.raises(TopologyError):
            build_fat_tree(bad)

    def test_valid_wiring(self):
        build_fat_tree(4).validate()  # raises on double-wired ports

    def test_hosts_unique_attachments(self):
        spec = build_fat_tree(4)
        attachments = {(h.dpid, h.port) for h in spec.hosts}
        assert len(attachments) == len(spec.hosts)


class TestLinear:
    def test_five_switch_chain(self):
        spec = build_linear(5)
        assert len(spec.switches) == 5
        assert len(spec.links) == 4
        assert len(spec.hosts) == 2
        assert spec.host_by_id("h1").dpid == 1
        assert spec.host_by_id("h2").dpid == 5

    def test_single_switch(self):
        spec = build_linear(1)
        assert len(spec.switches) == 1
        assert not spec.links
        assert {h.dpid for h in spec.hosts} == {1}
        assert len(spec.hosts) == 2

    def test_two_switches_one_link(self):
        spec = build_linear(2)
        assert len(spec.links) == 1

    def test_zero_rejected(self):
        with pytest.raises(TopologyError):
            build_linear(0)

    def test_no_hosts_option(self):
        assert not build_linear(3, hosts_at_ends=False).hosts

    def test_connected(self):
        assert connected(build_linear(8))


class TestSpecHelpers:
    def test_link_set_is_bidirectional(self):
        spec = build_linear(2)
        link = spec.links[0]
        assert spec.switch_link_set() == {
            (link.a_dpid, link.a_port, link.b_dpid, link.b_port),
            (link.b_dpid, link.b_port, link.a_dpid, link.a_port),
        }

    def test_dump_mentions_every_node(self):
        spec = build_linear(3)
        text = spec.dump()
        for s in spec.switches:
            assert f"dpid={s.dpid}" in text
        for h in spec.hosts:
            assert h.host_id in text

    def test_parse_topology(self):
        assert len(parse_topology("linear:5").switches) == 5
        assert len(parse_topology("fattree:2").switches) == 5
        with pytest.raises(TopologyError):
            parse_topology("ring:4")
        with pytest.raises(TopologyError):
            parse_topology("linear")
        with pytest.raises(TopologyError):
            parse_topology("linear:x")

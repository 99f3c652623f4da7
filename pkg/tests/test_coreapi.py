"""Socket call-channel tests and a fully socket-connected service deployment."""

from __future__ import annotations

import time

import pytest

from flowplane.broker import Broker, BrokerClient, BrokerConsumer, BrokerServer
from flowplane.core import (
    Core,
    CoreConfig,
    DistMode,
    FlowModRequest,
    UnknownDatapathError,
    UnknownPortError,
    UnknownRuleError,
)
from flowplane.coreapi import CoreApiServer, RemoteCore
from flowplane.fabric import Fabric
from flowplane.interservice import TopoQueryClient, TopoQueryServer
from flowplane.p2p import P2pDistributor, P2pStreamClient, P2pStreamServer
from flowplane.services import ForwardingService, FwdConfig, TopologyService
from flowplane.stack import _SubscriberLoop
from flowplane.topology import build_linear
from flowplane.wire import (
    Action,
    ActionKind,
    ETHERTYPE_DATA,
    EventKind,
    FlowModOp,
    Frame,
    MacAddr,
    Match,
    TOPIC_FOR_KIND,
    TopologyLinkEvent,
)

H1 = MacAddr.host(1)
H2 = MacAddr.host(2)


@pytest.fixture
def remote_core():
    fabric = Fabric(build_linear(2))
    core = Core()
    core.adopt(fabric)
    fabric.start()
    fabric.quiesce()
    server = CoreApiServer(core).start()
    client = RemoteCore(server.address)
    yield core, fabric, client
    client.close()
    server.stop()
    fabric.stop()


class TestRemoteCore:
    def test_packet_out_reaches_host(self, remote_core):
        core, fabric, client = remote_core
        h2 = fabric.hosts["h2"]
        _, port = h2.attachment
        f = Frame(dst=H2, src=H1, ethertype=ETHERTYPE_DATA, payload=b"remote")
        client.packet_out(2, port, f)
        fabric.quiesce()
        assert h2.inbox == [f]

    def test_flow_mod_roundtrip(self, remote_core):
        core, fabric, client = remote_core
        rule_id = client.flow_mod(
            FlowModRequest(
                dpid=1,
                priority=7,
                match=Match(eth_dst=H2),
                actions=(Action(ActionKind.OUTPUT, 1),),
                hard_timeout_s=30,
            )
        )
        fabric.quiesce()
        (rule,) = core.flows(1)
        assert rule.rule_id == rule_id
        assert rule.priority == 7
        assert rule.match == Match(eth_dst=H2)
        client.flow_mod(FlowModRequest(dpid=1, op=FlowModOp.REMOVE, rule_id=rule_id))
        fabric.quiesce()
        assert core.flows(1) == []

    def test_typed_errors_cross_the_socket(self, remote_core):
        _, _, client = remote_core
        f = Frame(dst=H2, src=H1, ethertype=ETHERTYPE_DATA, payload=b"")
        with pytest.raises(UnknownDatapathError):
            client.packet_out(99, 1, f)
        with pytest.raises(UnknownPortError):
            client.packet_out(1, 42, f)
        with pytest.raises(UnknownRuleError):
            client.flow_mod(FlowModRequest(dpid=1, op=FlowModOp.REMOVE, rule_id=555))

    def test_report_link_crosses_the_socket(self, remote_core):
        core, _, client = remote_core
        client.report_link(1, 2, 3, 4, True)
        deadline = time.monotonic() + 2
        while time.monotonic() < deadline:
            links = [e for e in core.event_log() if isinstance(e, TopologyLinkEvent)]
            if links:
                break
            time.sleep(0.01)
        assert links[0].src_dpid == 1 and links[0].up


class TestTopoQueryChannel:
    @pytest.fixture
    def query(self):
        class NullCore:
            def packet_out(self, *a):
                pass

            def report_link(self, *a):
                pass

        topo = TopologyService(NullCore(), discovery_interval=0)
        from flowplane.wire import TopologyDeviceEvent, TopologyPortEvent

        for dpid in (1, 2):
            topo.on_event(TopologyDeviceEvent(dpid=dpid, up=True))
            for port in (1, 2):
                topo.on_event(TopologyPortEvent(dpid=dpid, port=port, up=True))
        server = TopoQueryServer(topo).start()
        client = TopoQueryClient(server.address)
        yield topo, client
        client.close()
        server.stop()

    def test_learn_then_locate(self, query):
        topo, client = query
        client.learn_host(H1, 1, 2)
        loc = client.host_location(H1)
        assert (loc.dpid, loc.port) == (1, 2)
        assert topo.host_location(H1) == loc

    def test_unknown_host_is_none(self, query):
        _, client = query
        assert client.host_location(MacAddr.host(77)) is None

    def test_path_roundtrip_and_errors(self, query):
        topo, client = query
        from flowplane.services import DiscoveryPayload, UnknownHostError
        from flowplane.wire import PacketExceptionEvent

        topo.on_event(
            PacketExceptionEvent(
                dpid=2, in_port=1, frame=DiscoveryPayload(1, 1, 1).frame()
            )
        )
        topo.on_event(
            PacketExceptionEvent(
                dpid=1, in_port=1, frame=DiscoveryPayload(2, 1, 1).frame()
            )
        )
        client.learn_host(H1, 1, 2)
        client.learn_host(H2, 2, 2)
        hops = client.path_from_switch(1, H2)
        assert [(h.dpid, h.out_port) for h in hops] == [(1, 1), (2, 2)]
        with pytest.raises(UnknownHostError):
            client.path_from_switch(1, MacAddr.host(77))


def wait_until(predicate, timeout=10.0, interval=0.01):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(interval)
    return False


class TestStandaloneServices:
    def test_broker_mode_services_over_sockets_end_to_end(self):
        """Topology + forwarding connected to the core purely via sockets."""
        spec = build_linear(3)
        fabric = Fabric(spec)
        broker = Broker()
        core = Core(CoreConfig(mode=DistMode.BROKER), broker=broker)
        broker_server = BrokerServer(broker).start()
        api_server = CoreApiServer(core).start()

        topo_events = BrokerClient(broker_server.address)
        fwd_events = BrokerClient(broker_server.address)
        topo_core = RemoteCore(api_server.address)
        fwd_core = RemoteCore(api_server.address)

        topo = TopologyService(topo_core, discovery_interval=0)
        query_server = TopoQueryServer(topo).start()
        topo_client = TopoQueryClient(query_server.address)
        # the forwarding service reaches the topology service only via the
        # inter-service query channel, like a real split deployment
        fwd = ForwardingService(fwd_core, topo_client, FwdConfig(install_rules=False))
        loops = [
            _SubscriberLoop(
                BrokerConsumer(
                    topo_events,
                    "topo",
                    [
                        TOPIC_FOR_KIND[EventKind.DEVICE],
                        TOPIC_FOR_KIND[EventKind.PORT],
                        TOPIC_FOR_KIND[EventKind.PACKET],
                    ],
                    poll_interval=0.001,
                ),
                [topo],
                "topo-loop",
            ),
            _SubscriberLoop(
                BrokerConsumer(
                    fwd_events,
                    "fwd",
                    [TOPIC_FOR_KIND[EventKind.PACKET]],
                    poll_interval=0.001,
                ),
                [fwd],
                "fwd-loop",
            ),
        ]
        for l in loops:
            l.start()
        core.adopt(fabric)
        fabric.start()
        try:
            assert wait_until(lambda: core.datapaths() == [1, 2, 3])
            deadline = time.monotonic() + 10
            while topo.link_set() != spec.switch_link_set():
                assert time.monotonic() < deadline, "socket-mode discovery stalled"
                topo.run_discovery_round()
                time.sleep(0.05)
            for host in fabric.hosts.values():
                host.announce()
            assert wait_until(
                lambda: set(topo.hosts()) == {h.mac for h in spec.hosts}
            )
            samples = fabric.hosts["h1"].ping(H2, count=3, interval=0.001)
            assert all(not s.lost for s in samples)
        finally:
            for l in loops:
                l.stop()
            for c in (topo_events, fwd_events, topo_core, fwd_core, topo_client):
                c.close()
            query_server.stop()
            broker_server.stop()
            api_server.stop()
            fabric.stop()

    def test_p2p_mode_services_over_sockets_end_to_end(self):
        spec = build_linear(2)
        fabric = Fabric(spec)
        dist = P2pDistributor()
        core = Core(CoreConfig(mode=DistMode.P2P), p2p=dist)
        stream_server = P2pStreamServer(dist).start()
        api_server = CoreApiServer(core).start()

        topo_stream = P2pStreamClient(
            stream_server.address, {EventKind.DEVICE, EventKind.PORT, EventKind.PACKET}
        )
        fwd_stream = P2pStreamClient(stream_server.address, {EventKind.PACKET})
        topo_core = RemoteCore(api_server.address)
        fwd_core = RemoteCore(api_server.address)
        topo = TopologyService(topo_core, discovery_interval=0)
        fwd = ForwardingService(fwd_core, topo, FwdConfig(install_rules=False))
        loops = [
            _SubscriberLoop(topo_stream, [topo], "topo-loop"),
            _SubscriberLoop(fwd_stream, [fwd], "fwd-loop"),
        ]
        for l in loops:
            l.start()
        # subscriptions are live before any events exist (p2p has no history)
        assert wait_until(lambda: dist.subscription_count() == 2)
        core.adopt(fabric)
        fabric.start()
        try:
            assert wait_until(lambda: core.datapaths() == [1, 2])
            deadline = time.monotonic() + 10
            while topo.link_set() != spec.switch_link_set():
                assert time.monotonic() < deadline, "socket-mode discovery stalled"
                topo.run_discovery_round()
                time.sleep(0.05)
            for host in fabric.hosts.values():
                host.announce()
            assert wait_until(
                lambda: set(topo.hosts()) == {h.mac for h in spec.hosts}
            )
            samples = fabric.hosts["h1"].ping(H2, count=2, interval=0.001)
            assert all(not s.lost for s in samples)
        finally:
            for l in loops:
                l.stop()
            topo_stream.close()
            fwd_stream.close()
            topo_core.close()
            fwd_core.close()
            stream_server.stop()
            api_server.stop()
            fabric.stop()

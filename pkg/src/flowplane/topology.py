"""Network blueprints: switch/link/host layouts and the standard builders.

A ``NetworkSpec`` is a pure description; ``flowplane.fabric`` turns it into
live actors. Builders assign datapath ids and port numbers deterministically
so tests can treat the layout as ground truth:

linear chain (n switches):
    dpids 1..n; on each switch port 1 is the link toward the lower-numbered
    neighbor, the next port the link toward the higher one, hosts take the
    following ports. Hosts h1/h2 sit on the first and last switch.

fat-tree (even arity k):
    (k/2)^2 core switches get dpids 1..(k/2)^2; then per pod p (0-based),
    k/2 aggregation switches followed by k/2 edge switches. Edge ports
    1..k/2 face hosts, ports k/2+1..k face aggregation; aggregation ports
    1..k/2 face edges, k/2+1..k face its core group; core port p+1 faces
    pod p. Aggregation switch i of every pod uplinks to core group i
    (cores i*(k/2)+1 .. (i+1)*(k/2)). Hosts are numbered pod-major.
"""

from __future__ import annotations

from dataclasses import dataclass

from .wire import MacAddr


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class SwitchSpec:
    dpid: int
    n_ports: int


@dataclass(frozen=True)
class LinkSpec:
    """Undirected inter-switch cable between two (dpid, port) endpoints."""

    a_dpid: int
    a_port: int
    b_dpid: int
    b_port: int


@dataclass(frozen=True)
class HostSpec:
    host_id: str
    mac: MacAddr
    dpid: int
    port: int


@dataclass(frozen=True)
class NetworkSpec:
    switches: tuple[SwitchSpec, ...]
    links: tuple[LinkSpec, ...]
    hosts: tuple[HostSpec, ...]

    def validate(self) -> None:
        dpids = [s.dpid for s in self.switches]
        if len(set(dpids)) != len(dpids):
            raise TopologyError("duplicate dpid")
        ports_seen: set[tuple[int, int]] = set()
        by_dpid = {s.dpid: s for s in self.switches}
        endpoints = [(l.a_dpid, l.a_port) for l in self.links]
        endpoints += [(l.b_dpid, l.b_port) for l in self.links]
        endpoints += [(h.dpid, h.port) for h in self.hosts]
        for dpid, port in endpoints:
            if dpid not in by_dpid:
                raise TopologyError(f"endpoint references unknown switch {dpid}")
            if not 1 <= port <= by_dpid[dpid].n_ports:
                raise TopologyError(f"port {port} out of range on switch {dpid}")
            if (dpid, port) in ports_seen:
                raise TopologyError(f"port {dpid}:{port} wired twice")
            ports_seen.add((dpid, port))
        macs = [h.mac for h in self.hosts]
        if len(set(macs)) != len(macs):
            raise TopologyError("duplicate host MAC")

    def switch_link_set(self) -> frozenset[tuple[int, int, int, int]]:
        """Ground-truth directed link set: both directions of every cable."""
        out = set()
        for l in self.links:
            out.add((l.a_dpid, l.a_port, l.b_dpid, l.b_port))
            out.add((l.b_dpid, l.b_port, l.a_dpid, l.a_port))
        return frozenset(out)

    def host_by_id(self, host_id: str) -> HostSpec:
        for h in self.hosts:
            if h.host_id == host_id:
                return h
        raise KeyError(host_id)

    def dump(self) -> str:
        """One human-readable line per node and link, for debugging."""
        lines = [f"switch dpid={s.dpid} ports={s.n_ports}" for s in self.switches]
        lines += [
            f"link {l.a_dpid}:{l.a_port} <-> {l.b_dpid}:{l.b_port}" for l in self.links
        ]
        lines += [
            f"host {h.host_id} mac={h.mac} at {h.dpid}:{h.port}" for h in self.hosts
        ]
        return "\n".join(lines)


class _PortAlloc:
    """Hands out consecutive port numbers per switch."""

    def __init__(self) -> None:
        self._next: dict[int, int] = {}

    def take(self, dpid: int) -> int:
        port = self._next.get(dpid, 1)
        self._next[dpid] = port + 1
        return port

    def count(self, dpid: int) -> int:
        return self._next.get(dpid, 1) - 1


def build_linear(n_switches: int, hosts_at_ends: bool = True) -> NetworkSpec:
    """Chain s1-s2-...-sn with one host on each end switch."""
    if n_switches < 1:
        raise TopologyError(f"need at least 1 switch, got {n_switches}")
    alloc = _PortAlloc()
    links = []
    for i in range(1, n_switches):
        links.append(
            LinkSpec(a_dpid=i, a_port=alloc.take(i), b_dpid=i + 1, b_port=alloc.take(i + 1))
        )
    hosts = []
    if hosts_at_ends:
        hosts.append(HostSpec("h1", MacAddr.host(1), dpid=1, port=alloc.take(1)))
        hosts.append(HostSpec("h2", MacAddr.host(2), dpid=n_switches, port=alloc.take(n_switches)))
    switches = tuple(
        SwitchSpec(dpid=d, n_ports=max(alloc.count(d), 1)) for d in range(1, n_switches + 1)
    )
    spec = NetworkSpec(switches=switches, links=tuple(links), hosts=tuple(hosts))
    spec.validate()
    return spec


def build_fat_tree(k: int) -> NetworkSpec:
    """Standard k-ary fat-tree: (k/2)^2 cores, k pods of k switches, k^3/4 hosts."""
    if k < 2 or k % 2 != 0:
        raise TopologyError(f"fat-tree arity must be even and >= 2, got {k}")
    half = k // 2
    n_core = half * half

    def agg_dpid(pod: int, i: int) -> int:
        return n_core + pod * k + i + 1

    def edge_dpid(pod: int, j: int) -> int:
        return n_core + pod * k + half + j + 1

    switches = [SwitchSpec(dpid=c + 1, n_ports=k) for c in range(n_core)]
    for pod in range(k):
        for i in range(half):
            switches.append(SwitchSpec(dpid=agg_dpid(pod, i), n_ports=k))
        for j in range(half):
            switches.append(SwitchSpec(dpid=edge_dpid(pod, j), n_ports=k))

    links = []
    for pod in range(k):
        for j in range(half):  # edge uplinks: edge j -> every agg in the pod
            for i in range(half):
                links.append(
                    LinkSpec(
                        a_dpid=edge_dpid(pod, j),
                        a_port=half + 1 + i,
                        b_dpid=agg_dpid(pod, i),
                        b_port=1 + j,
                    )
                )
        for i in range(half):  # agg uplinks: agg i -> core group i
            for c in range(half):
                links.append(
                    LinkSpec(
                        a_dpid=agg_dpid(pod, i),
                        a_port=half + 1 + c,
                        b_dpid=i * half + c + 1,
                        b_port=pod + 1,
                    )
                )

    hosts = []
    for pod in range(k):
        for j in range(half):
            for m in range(half):
                index = pod * half * half + j * half + m + 1
                hosts.append(
                    HostSpec(
                        host_id=f"h{index}",
                        mac=MacAddr.host(index),
                        dpid=edge_dpid(pod, j),
                        port=m + 1,
                    )
                )

    spec = NetworkSpec(switches=tuple(switches), links=tuple(links), hosts=tuple(hosts))
    spec.validate()
    return spec


def parse_topology(text: str) -> NetworkSpec:
    """Parse a CLI topology string: ``linear:N`` or ``fattree:K``."""
    kind, _, arg = text.partition(":")
    if not arg:
        raise TopologyError(f"topology {text!r} needs an argument, e.g. linear:5")
    try:
        value = int(arg)
    except ValueError:
        raise TopologyError(f"bad topology size {arg!r}") from None
    if kind == "linear":
        return build_linear(value)
    if kind in ("fattree", "fat-tree"):
        return build_fat_tree(value)
    raise TopologyError(f"unknown topology kind {kind!r}")

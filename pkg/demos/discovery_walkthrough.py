#!/usr/bin/env python3
"""Watch topology discovery assemble the map of a k=4 fat-tree.

Builds the network, runs the control plane in INTERNAL mode, drives two
discovery rounds, lets the hosts announce themselves, and prints the map the
topology service built against the builder's ground truth.
"""

from flowplane import DistMode, Stack, StackConfig, build_fat_tree

spec = build_fat_tree(4)
print(f"ground truth: {len(spec.switches)} switches, "
      f"{len(spec.links)} cables, {len(spec.hosts)} hosts")
print(spec.dump())
print()

with Stack(spec, StackConfig(mode=DistMode.INTERNAL, discovery_interval=0)) as stack:
    stack.warm()  # drives discovery rounds and host announcements

    discovered = stack.topo.link_set()
    truth = spec.switch_link_set()
    print(f"discovered {len(discovered)} directed links "
          f"({'exact match' if discovered == truth else 'MISMATCH'})")

    print("\nhost locations:")
    for mac, loc in sorted(stack.topo.hosts().items(), key=lambda kv: str(kv[0])):
        print(f"  {mac} -> switch {loc.dpid} port {loc.port}")

    h1 = stack.host("h1")
    h16 = stack.host("h16")
    hops = stack.topo.shortest_path(h1.mac, h16.mac)
    print(f"\npath h1 -> h16 ({len(hops)} switches): "
          + " -> ".join(f"{h.dpid}:{h.out_port}" for h in hops))

    samples = h1.ping(h16.mac, count=5, interval=0.002)
    rtts = [f"{s.rtt_s * 1000:.2f}ms" for s in samples if not s.lost]
    print(f"ping h1 -> h16 with empty flow tables: {rtts}")

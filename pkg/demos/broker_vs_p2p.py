#!/usr/bin/env python3
"""Contrast the two event distribution backends on the same traffic.

The broker retains everything, so a consumer arriving late still replays the
whole run; a point-to-point subscriber only ever sees what was pushed after
it subscribed. The same asymmetry drives the latency difference: pings cross
the broker at poll-interval granularity, push streams almost immediately.
"""

from flowplane import DistMode, Stack, StackConfig, build_linear
from flowplane.broker import BrokerConsumer
from flowplane.wire import EventKind, decode_event

spec = build_linear(5)

print("== broker backend ==")
with Stack(spec, StackConfig(mode=DistMode.BROKER, discovery_interval=0)) as stack:
    stack.warm()
    stack.host("h1").ping(stack.host("h2").mac, count=20, interval=0.002)

    # a consumer that subscribes only now still sees the complete history
    latecomer = BrokerConsumer(stack.broker, "latecomer", ["events.packet"],
                               poll_interval=0.0001)
    replayed = 0
    while latecomer.get(timeout=0.05) is not None:
        replayed += 1
    print(f"latecomer replayed {replayed} packet events from offset 0")
    print(f"broker retained {stack.broker.total_records()} records across "
          f"{len(stack.broker.topics())} topics")

print("\n== point-to-point backend ==")
with Stack(spec, StackConfig(mode=DistMode.P2P, discovery_interval=0)) as stack:
    stack.warm()
    stack.host("h1").ping(stack.host("h2").mac, count=20, interval=0.002)

    late_sub = stack.p2p.subscribe({EventKind.PACKET})
    print(f"late subscriber sees history: {late_sub.get(timeout=0.05) is not None}")

    before = stack.core.event_log()[-1].seq
    stack.host("h1").ping(stack.host("h2").mac, count=1)
    fresh = late_sub.get(timeout=1.0)
    event = decode_event(fresh)
    print(f"...but receives live events: seq {event.seq} (> {before})")

print("\nRun `bench rt` / `bench tp` for the full latency and goodput numbers.")

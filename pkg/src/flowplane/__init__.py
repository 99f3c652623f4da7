"""Disaggregated SDN control plane over a simulated switch fabric.

The pieces, bottom up: ``wire`` (message/event types and codecs), ``switch``
and ``fabric`` (the simulated data plane), ``broker`` and ``p2p`` (the two
event distribution backends), ``core`` (the controller core with REST and
socket channels), ``services`` (topology discovery and reactive forwarding),
``stack`` (per-mode assembly), and ``bench`` (the experiment harness).
"""

from .core import Core, CoreConfig, DistMode, FlowModRequest
from .fabric import Fabric
from .stack import Stack, StackConfig
from .topology import build_fat_tree, build_linear, parse_topology
from .wire import (
    Action,
    ActionKind,
    Event,
    EventKind,
    FlowRule,
    Frame,
    MacAddr,
    Match,
    decode_event,
    decode_sb,
    encode_event,
    encode_sb,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ActionKind",
    "Core",
    "CoreConfig",
    "DistMode",
    "Event",
    "EventKind",
    "Fabric",
    "FlowModRequest",
    "FlowRule",
    "Frame",
    "MacAddr",
    "Match",
    "Stack",
    "StackConfig",
    "build_fat_tree",
    "build_linear",
    "decode_event",
    "decode_sb",
    "encode_event",
    "encode_sb",
    "parse_topology",
    "__version__",
]

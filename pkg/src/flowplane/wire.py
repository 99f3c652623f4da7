"""Southbound message and network-event types with their binary encodings.

Every value that crosses a process or channel boundary in this project is one
of two message families, each with a fixed-layout big-endian format so any
implementation can produce identical bytes without schema tooling:

Network events ("EVNT"):
    magic 0x45564E54 (4B) | version u8 = 1 | tag u8 | payload_len u32 | payload
    tags: 1 packet exception, 2 link, 3 device, 4 port, 5 flow rule
    every payload starts with: seq u64 | ts_micros u64

Southbound messages ("SBMG"):
    magic 0x53424D47 (4B) | version u8 = 1 | tag u8 | payload_len u32 | payload
    tags: 1 hello, 2 packet-in, 3 packet-out, 4 flow-mod, 5 port-status

Shared sub-layouts:
    frame:   dst 6B | src 6B | ethertype u16 | payload_len u32 | payload
    match:   presence u8 (bit0 in_port, bit1 eth_src, bit2 eth_dst,
             bit3 ethertype) | present fields in that order
    action:  kind u8 (1 OUTPUT, 2 FLOOD, 3 DROP, 4 CONTROLLER) | port u16
             (OUTPUT: the port; FLOOD: 0xFFFF; CONTROLLER: 0xFFFE; DROP: 0)
    rule:    rule_id u64 | priority u16 | match | action_count u8 | actions
             | hard_timeout_s u32 | packet_count u64 | byte_count u64

The rule layout deliberately omits the installation timestamp: it is local
switch state, so decoded rules come back with ``installed_at == 0.0``.

Encoding is a pure function of its argument and all types here are value
objects, safe to share across threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Union

EVENT_MAGIC = 0x45564E54  # "EVNT"
SB_MAGIC = 0x53424D47  # "SBMG"
WIRE_VERSION = 1

ETHERTYPE_DISCOVERY = 0x88CC
ETHERTYPE_ARP = 0x0806
ETHERTYPE_DATA = 0x0800

FLOOD_PORT = 0xFFFF
CONTROLLER_PORT = 0xFFFE
MAX_FRAME_PAYLOAD = 1500


class WireError(ValueError):
    """Base class for encode/decode failures."""


class EncodeError(WireError):
    """Value cannot be represented in the wire format."""


class DecodeError(WireError):
    """Input bytes are not a valid message."""


class BadMagicError(DecodeError):
    pass


class BadVersionError(DecodeError):
    pass


class BadTagError(DecodeError):
    pass


class TruncatedError(DecodeError):
    pass


class LengthMismatchError(DecodeError):
    pass


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class MacAddr:
    """A 6-octet hardware address."""

    octets: bytes

    def __post_init__(self) -> None:
        if len(self.octets) != 6:
            raise ValueError(f"MAC address needs 6 octets, got {len(self.octets)}")

    @classmethod
    def from_str(cls, text: str) -> "MacAddr":
        parts = text.split(":")
        if len(parts) != 6:
            raise ValueError(f"bad MAC address {text!r}")
        return cls(bytes(int(p, 16) for p in parts))

    @classmethod
    def host(cls, index: int) -> "MacAddr":
        """Deterministic MAC for host number ``index`` (02:00:00:00:hi:lo)."""
        if not 0 < index <= 0xFFFF:
            raise ValueError(f"host index out of range: {index}")
        return cls(bytes([0x02, 0, 0, 0, index >> 8, index & 0xFF]))

    @property
    def is_broadcast(self) -> bool:
        return self.octets == b"\xff" * 6

    def __str__(self) -> str:
        return ":".join(f"{b:02x}" for b in self.octets)


BROADCAST = MacAddr(b"\xff" * 6)


@dataclass(frozen=True)
class Frame:
    """Simplified Ethernet frame, the unit moved by the data plane."""

    dst: MacAddr
    src: MacAddr
    ethertype: int
    payload: bytes = b""


# Switch identifiers are plain 64-bit ints end to end.
DatapathId = int


class ActionKind(IntEnum):
    OUTPUT = 1
    FLOOD = 2
    DROP = 3
    CONTROLLER = 4


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    port: int | None = None

    def __post_init__(self) -> None:
        if self.kind is ActionKind.OUTPUT:
            if self.port is None:
                raise ValueError("OUTPUT action needs a port")
        elif self.port is not None:
            raise ValueError(f"{self.kind.name} action takes no port")


@dataclass(frozen=True)
class Match:
    """Flow-table match; ``None`` fields are wildcards."""

    in_port: int | None = None
    eth_src: MacAddr | None = None
    eth_dst: MacAddr | None = None
    ethertype: int | None = None

    def matches(self, frame: Frame, in_port: int) -> bool:
        if self.in_port is not None and self.in_port != in_port:
            return False
        if self.eth_src is not None and self.eth_src != frame.src:
            return False
        if self.eth_dst is not None and self.eth_dst != frame.dst:
            return False
        if self.ethertype is not None and self.ethertype != frame.ethertype:
            return False
        return True


@dataclass
class FlowRule:
    """Prioritized match+actions switch table entry.

    ``installed_at`` is a monotonic timestamp local to the installing switch
    and is not carried on the wire; a nonzero ``hard_timeout_s`` expires the
    rule once ``now - installed_at >= hard_timeout_s``.
    """

    rule_id: int
    priority: int
    match: Match
    actions: tuple[Action, ...]
    hard_timeout_s: int = 0
    installed_at: float = 0.0
    packet_count: int = 0
    byte_count: int = 0

    def __post_init__(self) -> None:
        self.actions = tuple(self.actions)

    def expired(self, now: float) -> bool:
        return self.hard_timeout_s > 0 and now - self.installed_at >= self.hard_timeout_s


class FlowModOp(IntEnum):
    ADD = 1
    REMOVE = 2
    MODIFY = 3


class RuleEventOp(IntEnum):
    ADDED = 1
    REMOVED = 2
    UPDATED = 3


# ---------------------------------------------------------------------------
# Southbound messages
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Hello:
    dpid: DatapathId
    ports: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "ports", tuple(self.ports))


@dataclass(frozen=True)
class PacketIn:
    dpid: DatapathId
    in_port: int
    frame: Frame


@dataclass(frozen=True)
class PacketOut:
    """Controller-to-switch send; ``out_port`` may be the FLOOD sentinel."""

    dpid: DatapathId
    out_port: int
    frame: Frame


@dataclass(frozen=True)
class FlowMod:
    dpid: DatapathId
    op: FlowModOp
    rule: FlowRule


@dataclass(frozen=True)
class PortStatus:
    dpid: DatapathId
    port: int
    up: bool


SbMessage = Union[Hello, PacketIn, PacketOut, FlowMod, PortStatus]


# ---------------------------------------------------------------------------
# Network events
# ---------------------------------------------------------------------------

class EventKind(IntEnum):
    """Event families; values double as wire tags and topic indices."""

    PACKET = 1
    LINK = 2
    DEVICE = 3
    PORT = 4
    FLOWRULE = 5


TOPIC_FOR_KIND = {
    EventKind.PACKET: "events.packet",
    EventKind.LINK: "events.link",
    EventKind.DEVICE: "events.device",
    EventKind.PORT: "events.port",
    EventKind.FLOWRULE: "events.flowrule",
}

ALL_EVENT_KINDS = frozenset(EventKind)


@dataclass(frozen=True)
class PacketExceptionEvent:
    """A frame missed every flow rule and was sent to the controller."""

    dpid: DatapathId
    in_port: int
    frame: Frame
    seq: int = 0
    ts_micros: int = 0


@dataclass(frozen=True)
class TopologyLinkEvent:
    src_dpid: DatapathId
    src_port: int
    dst_dpid: DatapathId
    dst_port: int
    up: bool
    seq: int = 0
    ts_micros: int = 0


@dataclass(frozen=True)
class TopologyDeviceEvent:
    dpid: DatapathId
    up: bool
    seq: int = 0
    ts_micros: int = 0


@dataclass(frozen=True)
class TopologyPortEvent:
    dpid: DatapathId
    port: int
    up: bool
    seq: int = 0
    ts_micros: int = 0


@dataclass(frozen=True)
class FlowRuleEvent:
    op: RuleEventOp
    dpid: DatapathId
    rule: FlowRule
    seq: int = 0
    ts_micros: int = 0

    def __hash__(self) -> int:  # rule is mutable; identity by (seq, op, dpid)
        return hash((self.op, self.dpid, self.seq, self.ts_micros))


Event = Union[
    PacketExceptionEvent,
    TopologyLinkEvent,
    TopologyDeviceEvent,
    TopologyPortEvent,
    FlowRuleEvent,
]

_EVENT_TAG = {
    PacketExceptionEvent: EventKind.PACKET,
    TopologyLinkEvent: EventKind.LINK,
    TopologyDeviceEvent: EventKind.DEVICE,
    TopologyPortEvent: EventKind.PORT,
    FlowRuleEvent: EventKind.FLOWRULE,
}


def event_kind(event: Event) -> EventKind:
    return _EVENT_TAG[type(event)]


# ---------------------------------------------------------------------------
# Byte reader
# ---------------------------------------------------------------------------

class Reader:
    """Cursor over immutable bytes; raises TruncatedError on underrun."""

    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedError(
                f"need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos


# ---------------------------------------------------------------------------
# Shared sub-layout packers
# ---------------------------------------------------------------------------

def pack_frame(frame: Frame) -> bytes:
    if len(frame.payload) > MAX_FRAME_PAYLOAD:
        raise EncodeError(
            f"frame payload {len(frame.payload)} exceeds {MAX_FRAME_PAYLOAD} bytes"
        )
    return (
        frame.dst.octets
        + frame.src.octets
        + struct.pack(">HI", frame.ethertype, len(frame.payload))
        + frame.payload
    )


def read_frame(r: Reader) -> Frame:
    dst = MacAddr(r.take(6))
    src = MacAddr(r.take(6))
    ethertype = r.u16()
    plen = r.u32()
    if plen > MAX_FRAME_PAYLOAD:
        raise LengthMismatchError(f"frame payload length {plen} out of range")
    return Frame(dst=dst, src=src, ethertype=ethertype, payload=r.take(plen))


def pack_match(match: Match) -> bytes:
    presence = 0
    parts = []
    if match.in_port is not None:
        presence |= 1
        parts.append(struct.pack(">H", match.in_port))
    if match.eth_src is not None:
        presence |= 2
        parts.append(match.eth_src.octets)
    if match.eth_dst is not None:
        presence |= 4
        parts.append(match.eth_dst.octets)
    if match.ethertype is not None:
        presence |= 8
        parts.append(struct.pack(">H", match.ethertype))
    return bytes([presence]) + b"".join(parts)


def read_match(r: Reader) -> Match:
    presence = r.u8()
    if presence & ~0x0F:
        raise DecodeError(f"unknown match presence bits 0x{presence:02x}")
    return Match(
        in_port=r.u16() if presence & 1 else None,
        eth_src=MacAddr(r.take(6)) if presence & 2 else None,
        eth_dst=MacAddr(r.take(6)) if presence & 4 else None,
        ethertype=r.u16() if presence & 8 else None,
    )


_ACTION_PORT_SENTINEL = {
    ActionKind.FLOOD: FLOOD_PORT,
    ActionKind.CONTROLLER: CONTROLLER_PORT,
    ActionKind.DROP: 0,
}


def pack_actions(actions: tuple[Action, ...]) -> bytes:
    if len(actions) > 255:
        raise EncodeError("more than 255 actions")
    parts = [bytes([len(actions)])]
    for a in actions:
        port = a.port if a.kind is ActionKind.OUTPUT else _ACTION_PORT_SENTINEL[a.kind]
        parts.append(struct.pack(">BH", a.kind, port))
    return b"".join(parts)


def read_actions(r: Reader) -> tuple[Action, ...]:
    count = r.u8()
    actions = []
    for _ in range(count):
        kind_raw = r.u8()
        port = r.u16()
        try:
            kind = ActionKind(kind_raw)
        except ValueError:
            raise BadTagError(f"unknown action kind {kind_raw}") from None
        actions.append(Action(kind, port if kind is ActionKind.OUTPUT else None))
    return tuple(actions)


def pack_rule(rule: FlowRule) -> bytes:
    return (
        struct.pack(">QH", rule.rule_id, rule.priority)
        + pack_match(rule.match)
        + pack_actions(rule.actions)
        + struct.pack(">IQQ", rule.hard_timeout_s, rule.packet_count, rule.byte_count)
    )


def read_rule(r: Reader) -> FlowRule:
    rule_id, priority = struct.unpack(">QH", r.take(10))
    match = read_match(r)
    actions = read_actions(r)
    hard_timeout_s, packet_count, byte_count = struct.unpack(">IQQ", r.take(20))
    return FlowRule(
        rule_id=rule_id,
        priority=priority,
        match=match,
        actions=actions,
        hard_timeout_s=hard_timeout_s,
        packet_count=packet_count,
        byte_count=byte_count,
    )


# ---------------------------------------------------------------------------
# Event codec
# ---------------------------------------------------------------------------

def _frame_message(magic: int, tag: int, payload: bytes) -> bytes:
    return struct.pack(">IBBI", magic, WIRE_VERSION, tag, len(payload)) + payload


def encode_event(event: Event) -> bytes:
    """Serialize an event; equal events always produce equal bytes."""
    kind = event_kind(event)
    prefix = struct.pack(">QQ", event.seq, event.ts_micros)
    try:
        if isinstance(event, PacketExceptionEvent):
            body = struct.pack(">QH", event.dpid, event.in_port) + pack_frame(event.frame)
        elif isinstance(event, TopologyLinkEvent):
            body = struct.pack(
                ">QHQHB",
                event.src_dpid,
                event.src_port,
                event.dst_dpid,
                event.dst_port,
                int(event.up),
            )
        elif isinstance(event, TopologyDeviceEvent):
            body = struct.pack(">QB", event.dpid, int(event.up))
        elif isinstance(event, TopologyPortEvent):
            body = struct.pack(">QHB", event.dpid, event.port, int(event.up))
        elif isinstance(event, FlowRuleEvent):
            body = struct.pack(">BQ", event.op, event.dpid) + pack_rule(event.rule)
        else:
            raise EncodeError(f"not an event: {event!r}")
    except struct.error as exc:
        raise EncodeError(str(exc)) from None
    return _frame_message(EVENT_MAGIC, kind, prefix + body)


def _decode_envelope(data: bytes, expect_magic: int) -> tuple[int, Reader]:
    r = Reader(data)
    magic = r.u32()
    if magic != expect_magic:
        raise BadMagicError(f"magic 0x{magic:08X} != 0x{expect_magic:08X}")
    version = r.u8()
    if version != WIRE_VERSION:
        raise BadVersionError(f"unknown version {version}")
    tag = r.u8()
    plen = r.u32()
    payload = r.take(plen)
    if r.remaining:
        raise LengthMismatchError(f"{r.remaining} trailing bytes after payload")
    return tag, Reader(payload)


def decode_event(data: bytes) -> Event:
    """Inverse of encode_event; rejects malformed input with distinct errors."""
    tag, r = _decode_envelope(data, EVENT_MAGIC)
    try:
        kind = EventKind(tag)
    except ValueError:
        raise BadTagError(f"unknown event tag {tag}") from None
    seq = r.u64()
    ts_micros = r.u64()
    if kind is EventKind.PACKET:
        dpid = r.u64()
        in_port = r.u16()
        event: Event = PacketExceptionEvent(
            dpid=dpid, in_port=in_port, frame=read_frame(r), seq=seq, ts_micros=ts_micros
        )
    elif kind is EventKind.LINK:
        event = TopologyLinkEvent(
            src_dpid=r.u64(),
            src_port=r.u16(),
            dst_dpid=r.u64(),
            dst_port=r.u16(),
            up=bool(r.u8()),
            seq=seq,
            ts_micros=ts_micros,
        )
    elif kind is EventKind.DEVICE:
        event = TopologyDeviceEvent(dpid=r.u64(), up=bool(r.u8()), seq=seq, ts_micros=ts_micros)
    elif kind is EventKind.PORT:
        event = TopologyPortEvent(
            dpid=r.u64(), port=r.u16(), up=bool(r.u8()), seq=seq, ts_micros=ts_micros
        )
    else:
        op_raw = r.u8()
        try:
            op = RuleEventOp(op_raw)
        except ValueError:
            raise BadTagError(f"unknown rule-event op {op_raw}") from None
        event = FlowRuleEvent(
            op=op, dpid=r.u64(), rule=read_rule(r), seq=seq, ts_micros=ts_micros
        )
    if r.remaining:
        raise LengthMismatchError(f"{r.remaining} unread payload bytes")
    return event


# ---------------------------------------------------------------------------
# Southbound codec
# ---------------------------------------------------------------------------

_SB_TAG_HELLO = 1
_SB_TAG_PACKET_IN = 2
_SB_TAG_PACKET_OUT = 3
_SB_TAG_FLOW_MOD = 4
_SB_TAG_PORT_STATUS = 5


def encode_sb(msg: SbMessage) -> bytes:
    try:
        if isinstance(msg, Hello):
            tag = _SB_TAG_HELLO
            body = struct.pack(">QH", msg.dpid, len(msg.ports)) + b"".join(
                struct.pack(">H", p) for p in msg.ports
            )
        elif isinstance(msg, PacketIn):
            tag = _SB_TAG_PACKET_IN
            body = struct.pack(">QH", msg.dpid, msg.in_port) + pack_frame(msg.frame)
        elif isinstance(msg, PacketOut):
            tag = _SB_TAG_PACKET_OUT
            body = struct.pack(">QH", msg.dpid, msg.out_port) + pack_frame(msg.frame)
        elif isinstance(msg, FlowMod):
            tag = _SB_TAG_FLOW_MOD
            body = struct.pack(">QB", msg.dpid, msg.op) + pack_rule(msg.rule)
        elif isinstance(msg, PortStatus):
            tag = _SB_TAG_PORT_STATUS
            body = struct.pack(">QHB", msg.dpid, msg.port, int(msg.up))
        else:
            raise EncodeError(f"not a southbound message: {msg!r}")
    except struct.error as exc:
        raise EncodeError(str(exc)) from None
    return _frame_message(SB_MAGIC, tag, body)


def decode_sb(data: bytes) -> SbMessage:
    tag, r = _decode_envelope(data, SB_MAGIC)
    if tag == _SB_TAG_HELLO:
        dpid = r.u64()
        count = r.u16()
        msg: SbMessage = Hello(dpid=dpid, ports=tuple(r.u16() for _ in range(count)))
    elif tag == _SB_TAG_PACKET_IN:
        msg = PacketIn(dpid=r.u64(), in_port=r.u16(), frame=read_frame(r))
    elif tag == _SB_TAG_PACKET_OUT:
        msg = PacketOut(dpid=r.u64(), out_port=r.u16(), frame=read_frame(r))
    elif tag == _SB_TAG_FLOW_MOD:
        dpid = r.u64()
        op_raw = r.u8()
        try:
            op = FlowModOp(op_raw)
        except ValueError:
            raise BadTagError(f"unknown flow-mod op {op_raw}") from None
        msg = FlowMod(dpid=dpid, op=op, rule=read_rule(r))
    elif tag == _SB_TAG_PORT_STATUS:
        msg = PortStatus(dpid=r.u64(), port=r.u16(), up=bool(r.u8()))
    else:
        raise BadTagError(f"unknown southbound tag {tag}")
    if r.remaining:
        raise LengthMismatchError(f"{r.remaining} unread payload bytes")
    return msg

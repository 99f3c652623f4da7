"""Publish-subscribe event distribution: in-memory topic logs, polled by offset.

Topics are append-only logs with dense offsets starting at 0; records are
immutable once appended and retained for the whole run. Consumers pull by
offset and may commit progress, so a reconnecting consumer can resume where
it left off, and a fresh consumer replays the full history. Nothing here
knows who the producers or consumers are; publishing succeeds with zero
consumers attached.

The broker also runs out of process: a length-prefixed binary
request/response protocol over a stream socket, request tags
{1 publish, 2 poll, 3 commit, 4 committed-offset}:

    request:  u32 body_len | tag u8 | body
    response: u32 body_len | status u8 (0 ok) | body (error: u16 len | utf-8)
    strings:  u16 len | utf-8 bytes

``BrokerClient`` speaks that protocol and exposes the same operation
contract as ``Broker``, so ``BrokerConsumer`` works over either. Consumers
sleep ``poll_interval`` between empty polls; that interval, not the
transport, is the dominant latency of this backend.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

MAX_RECORD_BYTES = 64 * 1024
DEFAULT_POLL_INTERVAL = 0.001


class BrokerError(Exception):
    pass


class OffsetOutOfRangeError(BrokerError):
    pass


class RecordTooLargeError(BrokerError):
    pass


@dataclass(frozen=True)
class Record:
    offset: int
    data: bytes


@dataclass
class _TopicLog:
    name: str
    records: list[Record] = field(default_factory=list)


class Broker:
    """In-process event broker; all operations are thread-safe."""

    def __init__(self) -> None:
        self._topics: dict[str, _TopicLog] = {}
        self._committed: dict[tuple[str, str], int] = {}
        self._lock = threading.Lock()
        self._appended = threading.Condition(self._lock)

    def _topic(self, name: str) -> _TopicLog:
        topic = self._topics.get(name)
        if topic is None:
            topic = self._topics[name] = _TopicLog(name)
        return topic

    def publish(self, topic: str, data: bytes) -> int:
        """Append a record; returns its offset (= previous log length)."""
        if len(data) > MAX_RECORD_BYTES:
            raise RecordTooLargeError(
                f"record of {len(data)} bytes exceeds {MAX_RECORD_BYTES}"
            )
        with self._lock:
            t = self._topic(topic)
            offset = len(t.records)
            t.records.append(Record(offset=offset, data=data))
            self._appended.notify_all()
            return offset

    def poll(
        self,
        consumer_id: str,
        topic: str,
        from_offset: int,
        max_records: int = 64,
        max_wait: float = 0.0,
    ) -> list[Record]:
        """Records from ``from_offset`` in offset order, up to ``max_records``.

        Blocks up to ``max_wait`` seconds when nothing is available, then
        returns an empty batch.
        """
        deadline = time.monotonic() + max_wait
        with self._lock:
            t = self._topic(topic)
            if from_offset > len(t.records):
                raise OffsetOutOfRangeError(
                    f"offset {from_offset} beyond log length {len(t.records)}"
                )
            while from_offset == len(t.records):
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return []
                self._appended.wait(timeout=remaining)
            return t.records[from_offset : from_offset + max_records]

    def commit(self, consumer_id: str, topic: str, offset: int) -> None:
        """Record ``offset`` as the consumer's next read position."""
        with self._lock:
            t = self._topic(topic)
            if offset > len(t.records):
                raise OffsetOutOfRangeError(
                    f"cannot commit {offset} beyond log length {len(t.records)}"
                )
            self._committed[(consumer_id, topic)] = offset

    def committed(self, consumer_id: str, topic: str) -> int | None:
        with self._lock:
            return self._committed.get((consumer_id, topic))

    # -- introspection ------------------------------------------------------

    def record_count(self, topic: str) -> int:
        with self._lock:
            t = self._topics.get(topic)
            return len(t.records) if t else 0

    def total_records(self) -> int:
        with self._lock:
            return sum(len(t.records) for t in self._topics.values())

    def topics(self) -> list[str]:
        with self._lock:
            return sorted(self._topics)


class BrokerConsumer:
    """Offset-tracking puller over one or more topics.

    ``resume=True`` starts each topic at its committed offset; otherwise the
    consumer replays from 0. Progress is committed after every record handed
    out. Empty polls sleep ``poll_interval`` before the next attempt, which
    makes the interval the floor of this backend's delivery latency.
    """

    def __init__(
        self,
        broker,
        consumer_id: str,
        topics: list[str],
        poll_interval: float = DEFAULT_POLL_INTERVAL,
        batch_size: int = 64,
        resume: bool = False,
    ):
        self.broker = broker
        self.consumer_id = consumer_id
        self.topics = list(topics)
        self.poll_interval = poll_interval
        self.batch_size = batch_size
        self._offsets: dict[str, int] = {}
        for t in self.topics:
            start = broker.committed(consumer_id, t) if resume else None
            self._offsets[t] = start if start is not None else 0
        self._buffer: list[tuple[str, Record]] = []

    def get(self, timeout: float | None = 0.0) -> bytes | None:
        """Next record's bytes across this consumer's topics, or None."""
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            if self._buffer:
                topic, record = self._buffer.pop(0)
                self._offsets[topic] = record.offset + 1
                self.broker.commit(self.consumer_id, topic, record.offset + 1)
                return record.data
            got_any = False
            for t in self.topics:
                batch = self.broker.poll(
                    self.consumer_id, t, self._offsets[t], self.batch_size, 0.0
                )
                if batch:
                    got_any = True
                    self._buffer.extend((t, r) for r in batch)
            if got_any:
                continue
            if deadline is not None and time.monotonic() >= deadline:
                return None
            time.sleep(self.poll_interval)


# ---------------------------------------------------------------------------
# Socket transport
# ---------------------------------------------------------------------------

_REQ_PUBLISH = 1
_REQ_POLL = 2
_REQ_COMMIT = 3
_REQ_COMMITTED = 4


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack(">H", len(raw)) + raw


class _Cursor:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise BrokerError("truncated request")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def read_str(self) -> str:
        (n,) = struct.unpack(">H", self.take(2))
        return self.take(n).decode("utf-8")


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    while n > 0:
        chunk = sock.recv(n)
        if not chunk:
            raise ConnectionError("peer closed")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


class _BrokerRequestHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        broker: Broker = self.server.broker  # type: ignore[attr-defined]
        sock = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        try:
            while True:
                (body_len,) = struct.unpack(">I", _recv_exact(sock, 4))
                body = _recv_exact(sock, body_len)
                try:
                    reply = self._dispatch(broker, body)
                    sock.sendall(struct.pack(">IB", len(reply) + 1, 0) + reply)
                except (BrokerError, struct.error) as exc:
                    msg = str(exc).encode("utf-8")
                    sock.sendall(
                        struct.pack(">IB", len(msg) + 3, 1)
                        + struct.pack(">H", len(msg))
                        + msg
                    )
        except (ConnectionError, OSError):
            return

    @staticmethod
    def _dispatch(broker: Broker, body: bytes) -> bytes:
        cur = _Cursor(body)
        (tag,) = cur.take(1)
        if tag == _REQ_PUBLISH:
            topic = cur.read_str()
            (n,) = struct.unpack(">I", cur.take(4))
            offset = broker.publish(topic, cur.take(n))
            return struct.pack(">Q", offset)
        if tag == _REQ_POLL:
            consumer = cur.read_str()
            topic = cur.read_str()
            from_offset, max_records, wait_micros = struct.unpack(">QIQ", cur.take(20))
            batch = broker.poll(
                consumer, topic, from_offset, max_records, wait_micros / 1e6
            )
            parts = [struct.pack(">I", len(batch))]
            for record in batch:
                parts.append(struct.pack(">QI", record.offset, len(record.data)))
                parts.append(record.data)
            return b"".join(parts)
        if tag == _REQ_COMMIT:
            consumer = cur.read_str()
            topic = cur.read_str()
            (offset,) = struct.unpack(">Q", cur.take(8))
            broker.commit(consumer, topic, offset)
            return b""
        if tag == _REQ_COMMITTED:
            consumer = cur.read_str()
            topic = cur.read_str()
            offset = broker.committed(consumer, topic)
            if offset is None:
                return struct.pack(">B", 0)
            return struct.pack(">BQ", 1, offset)
        raise BrokerError(f"unknown request tag {tag}")


class BrokerServer:
    """Serves a Broker over TCP; one thread per connection."""

    def __init__(self, broker: Broker, host: str = "127.0.0.1", port: int = 0):
        class _Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = _Server((host, port), _BrokerRequestHandler)
        self._server.broker = broker  # type: ignore[attr-defined]
        self.address: tuple[str, int] = self._server.server_address
        self._thread = threading.Thread(
            target=lambda: self._server.serve_forever(poll_interval=0.05),
            name="broker-server",
            daemon=True,
        )

    def start(self) -> "BrokerServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=2)


class BrokerClient:
    """Socket client with the same contract as Broker (one serial channel)."""

    def __init__(self, address: tuple[str, int], connect_timeout: float = 5.0):
        self._sock = socket.create_connection(address, timeout=connect_timeout)
        self._sock.settimeout(None)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._lock = threading.Lock()

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    def _call(self, body: bytes) -> bytes:
        with self._lock:
            self._sock.sendall(struct.pack(">I", len(body)) + body)
            (length,) = struct.unpack(">I", _recv_exact(self._sock, 4))
            reply = _recv_exact(self._sock, length)
        status = reply[0]
        if status != 0:
            (n,) = struct.unpack(">H", reply[1:3])
            message = reply[3 : 3 + n].decode("utf-8")
            if "offset" in message:
                raise OffsetOutOfRangeError(message)
            raise BrokerError(message)
        return reply[1:]

    def publish(self, topic: str, data: bytes) -> int:
        if len(data) > MAX_RECORD_BYTES:
            raise RecordTooLargeError(
                f"record of {len(data)} bytes exceeds {MAX_RECORD_BYTES}"
            )
        body = bytes([_REQ_PUBLISH]) + _pack_str(topic) + struct.pack(">I", len(data)) + data
        return struct.unpack(">Q", self._call(body))[0]

    def poll(
        self,
        consumer_id: str,
        topic: str,
        from_offset: int,
        max_records: int = 64,
        max_wait: float = 0.0,
    ) -> list[Record]:
        body = (
            bytes([_REQ_POLL])
            + _pack_str(consumer_id)
            + _pack_str(topic)
            + struct.pack(">QIQ", from_offset, max_records, int(max_wait * 1e6))
        )
        reply = self._call(body)
        cur = _Cursor(reply)
        (count,) = struct.unpack(">I", cur.take(4))
        records = []
        for _ in range(count):
            offset, n = struct.unpack(">QI", cur.take(12))
            records.append(Record(offset=offset, data=cur.take(n)))
        return records

    def commit(self, consumer_id: str, topic: str, offset: int) -> None:
        self._call(
            bytes([_REQ_COMMIT])
            + _pack_str(consumer_id)
            + _pack_str(topic)
            + struct.pack(">Q", offset)
        )

    def committed(self, consumer_id: str, topic: str) -> int | None:
        reply = self._call(
            bytes([_REQ_COMMITTED]) + _pack_str(consumer_id) + _pack_str(topic)
        )
        if reply[0] == 0:
            return None
        return struct.unpack(">Q", reply[1:9])[0]

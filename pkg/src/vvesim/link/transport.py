"""Datagram transports and the message endpoint built on top of them."""

from __future__ import annotations

import logging
import queue
import socket
import threading
import time
from collections import Counter

from ..errors import PeerLostError, ProtocolError
from .protocol import VERSION, MsgType, Sequencer, WireMessage, decode, encode

log = logging.getLogger(__name__)


class UdpTransport:
    """One UDP socket. If ``peer`` is omitted it is learned from the first
    datagram received."""

    def __init__(self, bind=("127.0.0.1", 0), peer=None):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind(bind)
        self.peer = tuple(peer) if peer else None

    @property
    def address(self):
        return self.sock.getsockname()

    def send(self, data: bytes):
        if self.peer is None:
            raise ConnectionError("peer address unknown")
        self.sock.sendto(data, self.peer)

    def recv(self, timeout: float):
        self.sock.settimeout(timeout)
        try:
            data, addr = self.sock.recvfrom(65536)
        except (socket.timeout, BlockingIOError):
            return None
        except OSError:
            if self.sock.fileno() < 0:
                return None
            raise
        if self.peer is None:
            self.peer = addr
        return data

    def close(self):
        self.sock.close()


class LoopbackTransport:
    """In-memory datagram pipe; see :func:`loopback_pair`."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue):
        self.inbox = inbox
        self.outbox = outbox
        self.closed = False

    def send(self, data: bytes):
        if not self.closed:
            self.outbox.put(bytes(data))

    def recv(self, timeout: float):
        try:
            return self.inbox.get(timeout=timeout)
        except queue.Empty:
            return None

    def close(self):
        self.closed = True


def loopback_pair():
    a, b = queue.Queue(), queue.Queue()
    return LoopbackTransport(a, b), LoopbackTransport(b, a)


class Endpoint:
    """Encodes outgoing messages and funnels decoded incoming ones into a
    single ordered queue consumed by the owning loop.

    A background thread receives and decodes; undecodable datagrams are
    counted by error type and dropped. An optional second thread emits
    HEARTBEAT messages. :meth:`receive` raises :class:`PeerLostError` when
    nothing at all has arrived for ``peer_timeout`` seconds.
    """

    def __init__(self, transport, heartbeat_interval: float | None = None,
                 peer_timeout: float | None = None, clock=time.monotonic):
        self.transport = transport
        self.peer_timeout = peer_timeout
        self.clock = clock
        self.inbox: queue.Queue = queue.Queue()
        self.errors: Counter = Counter()
        self.received = Counter()
        self.sent = Counter()
        self.seq = Sequencer()
        self.last_rx = clock()
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._threads = [threading.Thread(target=self._rx_loop, daemon=True)]
        if heartbeat_interval:
            self._threads.append(threading.Thread(
                target=self._hb_loop, args=(heartbeat_interval,), daemon=True))
        for t in self._threads:
            t.start()

    def send(self, msg_type: MsgType, payload=None, t_us: int = 0, seq: int | None = None,
             version: int = VERSION) -> WireMessage:
        with self._lock:
            if seq is None:
                seq = self.seq.next(msg_type)
            msg = WireMessage(msg_type, seq, t_us, payload, version)
            self.transport.send(encode(msg))
            self.sent[msg_type] += 1
        return msg

    def resend(self, msg: WireMessage):
        with self._lock:
            self.transport.send(encode(msg))
            self.sent[msg.msg_type] += 1

    def receive(self, timeout: float, check_peer: bool = True):
        """Next message in arrival order, or ``None`` after ``timeout``."""
        deadline = self.clock() + timeout
        while True:
            remaining = deadline - self.clock()
            step = max(0.0, min(remaining, 0.05))
            try:
                return self.inbox.get(timeout=step) if step > 0 else self.inbox.get_nowait()
            except queue.Empty:
                pass
            if check_peer and self.peer_timeout and self.clock() - self.last_rx > self.peer_timeout:
                raise PeerLostError(f"no traffic from peer for {self.peer_timeout:.2f} s")
            if remaining <= 0:
                return None

    def drain(self) -> list:
        out = []
        while True:
            try:
                out.append(self.inbox.get_nowait())
            except queue.Empty:
                return out

    def _rx_loop(self):
        while not self._stop.is_set():
            try:
                data = self.transport.recv(0.05)
            except OSError:
                return
            if data is None:
                continue
            try:
                msg = decode(data)
            except ProtocolError as exc:
                self.errors[type(exc).__name__] += 1
                continue
            self.last_rx = self.clock()
            self.received[msg.msg_type] += 1
            if msg.msg_type is not MsgType.HEARTBEAT:
                self.inbox.put(msg)

    def _hb_loop(self, interval: float):
        while not self._stop.wait(interval):
            try:
                self.send(MsgType.HEARTBEAT)
            except (OSError, ConnectionError):
                # peer not known yet or socket closing
                pass

    def close(self):
        self._stop.set()
        for t in self._threads:
            t.join(timeout=1.0)
        self.transport.close()

"""Startup synchronisation: HELLO -> START(t0) -> ACK."""

from __future__ import annotations

import secrets
import time
from dataclasses import dataclass, field

from ..errors import HandshakeFailure, IncompatiblePeerError
from .protocol import VERSION, MsgType, StartPayload, WireMessage
from .transport import Endpoint


@dataclass
class Session:
    role: str
    t0_us: int
    nonce: int
    start: WireMessage | None = None
    early: list = field(default_factory=list)


def controller_handshake(ep: Endpoint, timeout: float, nonce: int | None = None,
                         version: int = VERSION) -> Session:
    """Send HELLO every ``timeout/5`` until a matching START arrives, then ACK it."""
    nonce = secrets.randbits(64) if nonce is None else nonce
    deadline = time.monotonic() + timeout
    retry = timeout / 5.0
    while time.monotonic() < deadline:
        ep.send(MsgType.HELLO, nonce, version=version)
        resend_at = min(time.monotonic() + retry, deadline)
        while (remaining := resend_at - time.monotonic()) > 0:
            msg = ep.receive(remaining, check_peer=False)
            if msg is None:
                break
            if msg.msg_type is MsgType.BYE:
                raise IncompatiblePeerError("environment refused the session")
            if msg.msg_type is MsgType.START and msg.payload.nonce == nonce:
                ep.send(MsgType.ACK, nonce, t_us=msg.payload.t0_us)
                return Session("controller", msg.payload.t0_us, nonce, msg)
    raise HandshakeFailure(f"no START from environment within {timeout:.2f} s")


def environment_handshake(ep: Endpoint, timeout: float, t0_us: int | None = None,
                          lead_s: float = 0.0) -> Session:
    """Answer the first HELLO with START and wait for the ACK.

    ``t0_us`` defaults to the wall clock plus ``lead_s``. A POSE arriving
    before the ACK counts as an implicit ACK and is kept in
    ``Session.early``.
    """
    deadline = time.monotonic() + timeout
    retry = timeout / 5.0
    start = None
    nonce = None
    while (remaining := deadline - time.monotonic()) > 0:
        msg = ep.receive(min(remaining, retry), check_peer=False)
        if msg is None:
            if start is not None:
                ep.resend(start)
            continue
        if msg.msg_type is MsgType.HELLO:
            if msg.version != VERSION:
                ep.send(MsgType.BYE)
                raise IncompatiblePeerError(
                    f"peer speaks protocol version {msg.version}, expected {VERSION}")
            if start is None:
                nonce = msg.payload
                if t0_us is None:
                    t0_us = time.time_ns() // 1000 + int(lead_s * 1e6)
                start = ep.send(MsgType.START, StartPayload(t0_us, nonce), t_us=t0_us)
            elif msg.payload == nonce:
                ep.resend(start)
        elif start is not None and msg.msg_type is MsgType.ACK and msg.payload == nonce:
            return Session("environment", t0_us, nonce, start)
        elif start is not None and msg.msg_type is MsgType.POSE:
            return Session("environment", t0_us, nonce, start, [msg])
    raise HandshakeFailure(f"handshake not completed within {timeout:.2f} s")

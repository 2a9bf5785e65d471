"""Binary datagram codec.

Every datagram is a 20-byte little-endian header followed by a
type-specific payload::

    magic u32 | version u8 | msg_type u8 | pad u16 (zero) | seq u32 | t_us u64

Payloads: HELLO and ACK carry a u64 nonce, START carries ``t0`` u64 and the
echoed nonce, POSE six f64, ACTORS a u16 count followed by ``count``
records of (u32 id, four f64). HEARTBEAT and BYE are empty.

:func:`decode` is total: any byte string yields a :class:`WireMessage` or a
:class:`~vvesim.errors.ProtocolError` subclass.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import IntEnum

from ..errors import (BadMagicError, InvalidInputError, MalformedPayloadError,
                      TruncatedError, UnsupportedTypeError)
from .transform import PosePayload

MAGIC = 0x56564531
VERSION = 1

_HEADER = struct.Struct("<IBBHIQ")
HEADER_SIZE = _HEADER.size
_U64 = struct.Struct("<Q")
_START = struct.Struct("<QQ")
_POSE = struct.Struct("<6d")
_COUNT = struct.Struct("<H")
_ACTOR = struct.Struct("<I4d")


class MsgType(IntEnum):
    HELLO = 1
    START = 2
    ACK = 3
    POSE = 4
    ACTORS = 5
    HEARTBEAT = 6
    BYE = 7


@dataclass(frozen=True)
class StartPayload:
    t0_us: int
    nonce: int


@dataclass(frozen=True)
class ActorRecord:
    id: int
    x: float
    y: float
    heading: float
    speed: float


@dataclass(frozen=True)
class WireMessage:
    msg_type: MsgType
    seq: int
    t_us: int
    payload: object = None
    version: int = VERSION


_FIXED_SIZE = {MsgType.HELLO: 8, MsgType.START: 16, MsgType.ACK: 8, MsgType.POSE: 48,
               MsgType.HEARTBEAT: 0, MsgType.BYE: 0}


def _check_uint(value, bits, label):
    if not isinstance(value, int) or not 0 <= value < (1 << bits):
        raise InvalidInputError(f"{label} must be an unsigned {bits}-bit integer")


def _check_finite(values, label):
    for v in values:
        if not math.isfinite(v):
            raise InvalidInputError(f"{label} contains a non-finite value")


def encode(msg: WireMessage) -> bytes:
    t = MsgType(msg.msg_type)
    _check_uint(msg.version, 8, "version")
    _check_uint(msg.seq, 32, "seq")
    _check_uint(msg.t_us, 64, "t_us")
    p = msg.payload
    if t in (MsgType.HELLO, MsgType.ACK):
        _check_uint(p, 64, "nonce")
        body = _U64.pack(p)
    elif t is MsgType.START:
        _check_uint(p.t0_us, 64, "t0_us")
        _check_uint(p.nonce, 64, "nonce")
        body = _START.pack(p.t0_us, p.nonce)
    elif t is MsgType.POSE:
        vals = (p.x, p.y, p.psi, p.v, p.beta, p.r)
        _check_finite(vals, "pose")
        body = _POSE.pack(*vals)
    elif t is MsgType.ACTORS:
        _check_uint(len(p), 16, "actor count")
        ids = [a.id for a in p]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("actor ids must be unique")
        parts = [_COUNT.pack(len(p))]
        for a in p:
            _check_uint(a.id, 32, "actor id")
            vals = (a.x, a.y, a.heading, a.speed)
            _check_finite(vals, "actor record")
            parts.append(_ACTOR.pack(a.id, *vals))
        body = b"".join(parts)
    else:
        if p is not None:
            raise InvalidInputError(f"{t.name} carries no payload")
        body = b""
    return _HEADER.pack(MAGIC, msg.version, int(t), 0, msg.seq, msg.t_us) + body


def decode(data: bytes) -> WireMessage:
    data = bytes(data)
    if len(data) < 4:
        raise TruncatedError(f"{len(data)} bytes is shorter than the magic")
    (magic,) = struct.unpack_from("<I", data)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic 0x{magic:08x}")
    if len(data) < HEADER_SIZE:
        raise TruncatedError(f"header needs {HEADER_SIZE} bytes, got {len(data)}")
    _, version, raw_type, pad, seq, t_us = _HEADER.unpack_from(data)
    try:
        t = MsgType(raw_type)
    except ValueError:
        raise UnsupportedTypeError(f"unknown msg_type {raw_type}") from None
    if pad != 0:
        raise MalformedPayloadError("non-zero header padding")
    body = data[HEADER_SIZE:]
    if t is MsgType.ACTORS:
        payload = _decode_actors(body)
    else:
        size = _FIXED_SIZE[t]
        if len(body) < size:
            raise TruncatedError(f"{t.name} payload needs {size} bytes, got {len(body)}")
        if len(body) > size:
            raise MalformedPayloadError(f"{t.name} payload has {len(body) - size} extra bytes")
        if t in (MsgType.HELLO, MsgType.ACK):
            payload = _U64.unpack(body)[0]
        elif t is MsgType.START:
            payload = StartPayload(*_START.unpack(body))
        elif t is MsgType.POSE:
            vals = _POSE.unpack(body)
            if not all(math.isfinite(v) for v in vals):
                raise MalformedPayloadError("non-finite pose value")
            payload = PosePayload(*vals)
        else:
            payload = None
    return WireMessage(t, seq, t_us, payload, version)


def _decode_actors(body: bytes):
    if len(body) < _COUNT.size:
        raise TruncatedError("ACTORS payload lacks its count")
    (count,) = _COUNT.unpack_from(body)
    need = _COUNT.size + count * _ACTOR.size
    if len(body) < need:
        raise TruncatedError(f"ACTORS count {count} needs {need} bytes, got {len(body)}")
    if len(body) > need:
        raise MalformedPayloadError(f"ACTORS count {count} leaves {len(body) - need} extra bytes")
    records = []
    seen = set()
    for i in range(count):
        rid, x, y, heading, speed = _ACTOR.unpack_from(body, _COUNT.size + i * _ACTOR.size)
        if not all(math.isfinite(v) for v in (x, y, heading, speed)):
            raise MalformedPayloadError(f"non-finite value in actor {rid}")
        if rid in seen:
            raise MalformedPayloadError(f"duplicate actor id {rid}")
        seen.add(rid)
        records.append(ActorRecord(rid, x, y, heading, speed))
    return tuple(records)


class Sequencer:
    """Per-type monotonically increasing sequence numbers for one sender."""

    def __init__(self):
        self._next = {}

    def next(self, msg_type: MsgType) -> int:
        seq = self._next.get(msg_type, 0)
        self._next[msg_type] = (seq + 1) & 0xFFFFFFFF
        return seq

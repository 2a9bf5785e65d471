import math
import struct
import threading
import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vvesim.errors import (BadMagicError, HandshakeFailure, IncompatiblePeerError,
                           InvalidInputError, MalformedPayloadError, PeerLostError,
                           ProtocolError, TraceIngestError, TruncatedError,
                           UnsupportedTypeError)
from vvesim.link import (MAGIC, ActorRecord, DelayLine, FrameTransform, LatencyModel, MsgType,
                         PosePayload, StartPayload, WireMessage, decode, encode,
                         inverse_transform, latency_apply, transform_pose)
from vvesim.link.handshake import controller_handshake, environment_handshake
from vvesim.link.protocol import HEADER_SIZE, Sequencer
from vvesim.link.trace import (PoseRecorder, TraceRow, read_trace, replay_trace, vve_replay,
                               write_trace)
from vvesim.link.transport import Endpoint, UdpTransport, loopback_pair

# -- codec ---------------------------------------------------------------------------

def test_golden_heartbeat_bytes():
    raw = encode(WireMessage(MsgType.HEARTBEAT, 0, 0))
    assert raw == bytes([0x31, 0x45, 0x56, 0x56, 0x01, 0x06]) + bytes(14)
    assert len(raw) == HEADER_SIZE == 20


def test_header_layout_little_endian():
    raw = encode(WireMessage(MsgType.BYE, 0x01020304, 0x0A0B0C0D0E0F1011))
    assert raw[8:12] == bytes([4, 3, 2, 1])
    assert raw[12:20] == bytes([0x11, 0x10, 0x0F, 0x0E, 0x0D, 0x0C, 0x0B, 0x0A])


def test_two_actor_round_trip():
    msg = WireMessage(MsgType.ACTORS, 7, 123456,
                      (ActorRecord(1, 81.0, -2.5, 1.57, 1.4),
                       ActorRecord(2, 83.0, 6.0, -1.57, 1.4)))
    raw = encode(msg)
    assert len(raw) == HEADER_SIZE + 2 + 2 * 36
    assert decode(raw) == msg


def test_decode_typed_errors():
    good = encode(WireMessage(MsgType.POSE, 1, 2, PosePayload(1, 2, 3, 4, 5, 6)))
    with pytest.raises(BadMagicError):
        decode(b"\x00" + good[1:])
    with pytest.raises(TruncatedError):
        decode(good[:3])
    with pytest.raises(TruncatedError):
        decode(good[:15])
    with pytest.raises(TruncatedError):
        decode(good[:-1])
    with pytest.raises(MalformedPayloadError):
        decode(good + b"\x00")
    with pytest.raises(UnsupportedTypeError):
        decode(good[:5] + b"\x09" + good[6:])
    with pytest.raises(MalformedPayloadError):
        decode(good[:6] + b"\x01\x00" + good[8:])
    nan_pose = good[:HEADER_SIZE] + struct.pack("<6d", math.nan, 0, 0, 0, 0, 0)
    with pytest.raises(MalformedPayloadError):
        decode(nan_pose)
    actors = encode(WireMessage(MsgType.ACTORS, 0, 0, (ActorRecord(1, 0, 0, 0, 0),)))
    with pytest.raises(TruncatedError):
        decode(actors[:HEADER_SIZE] + b"\x02\x00" + actors[HEADER_SIZE + 2:])
    with pytest.raises(MalformedPayloadError):
        decode(actors + b"\x00")
    dup = actors[:HEADER_SIZE] + b"\x02\x00" + actors[HEADER_SIZE + 2:] * 2
    with pytest.raises(MalformedPayloadError):
        decode(dup)


def test_encode_rejects_invalid():
    with pytest.raises(InvalidInputError):
        encode(WireMessage(MsgType.POSE, 0, 0, PosePayload(math.inf, 0, 0, 0, 0, 0)))
    with pytest.raises(InvalidInputError):
        encode(WireMessage(MsgType.HEARTBEAT, -1, 0))
    with pytest.raises(InvalidInputError):
        encode(WireMessage(MsgType.ACTORS, 0, 0, (ActorRecord(1, 0, 0, 0, 0),) * 2))


finite = st.floats(allow_nan=False, allow_infinity=False)
u32 = st.integers(0, 2**32 - 1)
u64 = st.integers(0, 2**64 - 1)
actor = st.builds(ActorRecord, u32, finite, finite, finite, finite)
payloads = {
    MsgType.HELLO: u64,
    MsgType.ACK: u64,
    MsgType.START: st.builds(StartPayload, u64, u64),
    MsgType.POSE: st.builds(PosePayload, finite, finite, finite, finite, finite, finite),
    MsgType.ACTORS: st.lists(actor, max_size=6, unique_by=lambda a: a.id).map(tuple),
    MsgType.HEARTBEAT: st.none(),
    MsgType.BYE: st.none(),
}
messages = st.sampled_from(list(MsgType)).flatmap(
    lambda t: st.builds(WireMessage, st.just(t), u32, u64, payloads[t], st.integers(0, 255)))


@given(messages)
def test_round_trip_identity(msg):
    raw = encode(msg)
    assert decode(raw) == msg
    assert encode(decode(raw)) == raw


@given(st.binary(max_size=200))
def test_decode_total_on_random_bytes(data):
    try:
        decode(data)
    except ProtocolError:
        pass


@given(messages, st.data())
def test_decode_total_on_mutations(msg, data):
    raw = bytearray(encode(msg))
    for _ in range(data.draw(st.integers(1, 4))):
        i = data.draw(st.integers(0, len(raw) - 1))
        raw[i] = data.draw(st.integers(0, 255))
    cut = data.draw(st.integers(0, len(raw)))
    try:
        decode(bytes(raw[:cut]))
    except ProtocolError:
        pass


def test_sequencer_per_type():
    s = Sequencer()
    assert [s.next(MsgType.POSE) for _ in range(3)] == [0, 1, 2]
    assert s.next(MsgType.ACTORS) == 0


# -- frame transform -----------------------------------------------------------------

def test_identity_and_quarter_turn():
    p = PosePayload(3.0, -2.0, 0.4, 5.0, 0.01, 0.2)
    assert transform_pose(p, FrameTransform()) == p
    q = transform_pose(PosePayload(1.0, 0.0, 0.0, 2.0, 0.0, 0.0),
                       FrameTransform(rotation=math.pi / 2))
    assert q.x == pytest.approx(0.0, abs=1e-16) and q.y == pytest.approx(1.0)
    assert q.psi == pytest.approx(math.pi / 2) and q.v == 2.0


def test_rotation_normalised():
    assert FrameTransform(rotation=3 * math.pi).rotation == pytest.approx(math.pi)
    assert FrameTransform(rotation=-math.pi).rotation == math.pi


@given(x=st.floats(-1e3, 1e3), y=st.floats(-1e3, 1e3), psi=st.floats(-10, 10),
       ox=st.floats(-1e3, 1e3), oy=st.floats(-1e3, 1e3), th=st.floats(-7, 7),
       vx=st.floats(-1e3, 1e3), vy=st.floats(-1e3, 1e3))
def test_transform_round_trip(x, y, psi, ox, oy, th, vx, vy):
    t = FrameTransform((ox, oy), th, (vx, vy))
    p = PosePayload(x, y, psi, 1.0, 0.0, 0.0)
    back = inverse_transform(transform_pose(p, t), t)
    assert math.hypot(back.x - x, back.y - y) <= 1e-12 * max(1.0, abs(x), abs(y), abs(ox),
                                                             abs(oy), abs(vx), abs(vy))
    assert math.remainder(back.psi - psi, 2 * math.pi) == pytest.approx(0.0, abs=1e-12)


# -- latency -------------------------------------------------------------------------

def test_latency_passthrough_and_constant_shift():
    stream = [(t, i) for i, t in enumerate(range(0, 100_000, 10_000))]
    assert list(latency_apply(stream, LatencyModel())) == stream
    shifted = list(latency_apply(stream, LatencyModel(base_delay_ms=20.0)))
    assert shifted == [(t + 20_000, i) for t, i in stream]


def test_latency_rejects_certain_drop():
    with pytest.raises(InvalidInputError):
        LatencyModel(drop_prob=1.0)
    with pytest.raises(InvalidInputError):
        LatencyModel(base_delay_ms=-1.0)


def test_latency_seeded_order_preserving():
    model = LatencyModel(base_delay_ms=5.0, jitter_ms=4.0, drop_prob=0.2, seed=9)
    stream = [(t * 1000, t) for t in range(2000)]
    a = list(latency_apply(stream, model))
    b = list(latency_apply(stream, model))
    assert a == b
    items = [i for _, i in a]
    assert items == sorted(items)
    assert all(r2 >= r1 for (r1, _), (r2, _) in zip(a, a[1:]))
    assert 300 < 2000 - len(a) < 500
    c = list(latency_apply(stream, LatencyModel(5.0, 4.0, 0.2, seed=10)))
    assert c != a


def test_delay_line_pop_ready():
    line = DelayLine(LatencyModel(base_delay_ms=1.0))
    line.submit("a", 0)
    line.submit("b", 500)
    assert line.pop_ready(999) == []
    assert line.pop_ready(1000) == ["a"]
    assert line.pop_ready(10_000) == ["b"]


# -- endpoint + handshake ---------------------------------------------------------------

@pytest.fixture
def endpoints():
    a, b = loopback_pair()
    ctrl, env = Endpoint(a, 0.05, 0.5), Endpoint(b, 0.05, 0.5)
    yield ctrl, env
    ctrl.close()
    env.close()


def run_env(env, out, **kw):
    try:
        out["env"] = environment_handshake(env, 2.0, **kw)
    except Exception as exc:  # surfaced by the asserting thread
        out["env"] = exc


def test_handshake_shares_t0(endpoints):
    ctrl, env = endpoints
    out = {}
    th = threading.Thread(target=run_env, args=(env, out), kwargs={"t0_us": 424242})
    th.start()
    s = controller_handshake(ctrl, 2.0)
    th.join()
    assert s.t0_us == out["env"].t0_us == 424242


def test_handshake_times_out_without_environment():
    a, _ = loopback_pair()
    ep = Endpoint(a)
    t = time.monotonic()
    with pytest.raises(HandshakeFailure):
        controller_handshake(ep, 0.3)
    assert 0.25 <= time.monotonic() - t < 1.5
    ep.close()


def test_handshake_version_mismatch(endpoints):
    ctrl, env = endpoints
    out = {}
    th = threading.Thread(target=run_env, args=(env, out))
    th.start()
    with pytest.raises(IncompatiblePeerError):
        controller_handshake(ctrl, 2.0, version=2)
    th.join()
    assert isinstance(out["env"], IncompatiblePeerError)


def test_stale_duplicate_start_is_ignored(endpoints):
    ctrl, env = endpoints
    out = {}
    th = threading.Thread(target=run_env, args=(env, out), kwargs={"t0_us": 5})
    th.start()
    s = controller_handshake(ctrl, 2.0)
    th.join()
    env.resend(out["env"].start)
    time.sleep(0.1)
    stale = ctrl.drain()
    assert [m.msg_type for m in stale] == [MsgType.START]
    assert stale[0].seq == s.start.seq
    assert ctrl.sent[MsgType.ACK] == 1


def test_peer_lost_detected():
    a, b = loopback_pair()
    ctrl = Endpoint(a, None, 0.3)
    with pytest.raises(PeerLostError):
        ctrl.receive(2.0)
    ctrl.close()
    b.close()


def test_endpoint_counts_garbage(endpoints):
    ctrl, env = endpoints
    env.transport.send(b"junk")
    env.transport.send(b"\x31\x45\x56\x56" + bytes(4))
    time.sleep(0.15)
    assert ctrl.errors["BadMagicError"] == 1
    assert ctrl.errors["TruncatedError"] == 1


def test_udp_transport_round_trip():
    rx = UdpTransport(("127.0.0.1", 0))
    tx = UdpTransport(("127.0.0.1", 0), rx.address)
    tx.send(b"ping")
    assert rx.recv(1.0) == b"ping"
    rx.send(b"pong")  # peer learned from the first datagram
    assert tx.recv(1.0) == b"pong"
    tx.close()
    rx.close()


# -- trace replay ------------------------------------------------------------------------

def straight_trace(n=200, v=15.0, dt_us=10_000):
    return [TraceRow(i * dt_us, v * i * dt_us / 1e6, 0.0, 0.0, v) for i in range(n)]


def test_trace_round_trip_and_errors(tmp_path):
    rows = straight_trace(5)
    path = tmp_path / "t.csv"
    write_trace(path, rows)
    assert read_trace(path) == rows
    path.write_text("t_us,x,y,psi,v\n0,1,2,3,4\n10,1,2,3\n")
    with pytest.raises(TraceIngestError, match="line 3"):
        read_trace(path)
    path.write_text("t_us,x,y,psi,v\n10,1,2,3,4\n5,1,2,3,4\n")
    with pytest.raises(TraceIngestError, match="line 3"):
        read_trace(path)
    path.write_text("t_us,x,y,psi,v\n0,1,abc,3,4\n")
    with pytest.raises(TraceIngestError, match="line 2"):
        read_trace(path)
    path.write_text("time,x,y\n")
    with pytest.raises(TraceIngestError, match="line 1"):
        read_trace(path)
    path.write_text("")
    assert read_trace(path) == []


def test_replay_empty_and_identity_bits():
    sent = []
    rep = replay_trace([], FrameTransform(), "max", lambda *a: sent.append(a))
    assert rep.rows == 0 and sent == []
    rows = straight_trace(10)
    replay_trace(rows, FrameTransform(), "max", lambda *a: sent.append(a))
    for (seq, t_us, pose), row in zip(sent, rows):
        assert t_us == row.t_us
        assert (pose.x, pose.y, pose.psi, pose.v) == (row.x, row.y, row.psi, row.v)


def test_replay_realtime_pacing():
    stamps = []
    rows = [TraceRow(0, 0, 0, 0, 0), TraceRow(100_000, 1, 0, 0, 10)]
    replay_trace(rows, FrameTransform(), "realtime",
                 lambda *a: stamps.append(time.monotonic()))
    assert stamps[1] - stamps[0] == pytest.approx(0.1, abs=0.02)


def test_pose_recorder_freshest_rule():
    rec = PoseRecorder()
    p = PosePayload(0, 0, 0, 0, 0, 0)
    for seq in (0, 1, 3, 2, 5):
        rec.on_message(WireMessage(MsgType.POSE, seq, seq * 10, p))
    assert rec.newest == 5 and rec.discarded == 1 and rec.gaps == 2


def test_vve_replay_identity_and_rotation():
    rows = straight_trace()
    rep = vve_replay(rows, FrameTransform())
    assert rep["compared"] == len(rows)
    assert rep["rms_position_error_m"] <= 1e-9
    t = FrameTransform((5.0, -3.0), 0.7, (100.0, 40.0))
    rep = vve_replay(rows, t)
    assert rep["rms_position_error_m"] <= 1e-9
    assert rep["max_round_trip_error_m"] <= 1e-9


def test_vve_replay_latency_error_reported():
    rep = vve_replay(straight_trace(), FrameTransform(), latency=LatencyModel(20.0))
    assert rep["max_position_error_m"] == pytest.approx(0.020 * 15.0, rel=1e-6)


def test_vve_replay_over_udp():
    rep = vve_replay(straight_trace(), FrameTransform(), transport="udp")
    assert rep["received"] == 200
    assert rep["rms_position_error_m"] <= 1e-9

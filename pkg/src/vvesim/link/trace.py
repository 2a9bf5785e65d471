"""Recorded-trace ingestion, POSE replay and the replay overlap check."""

from __future__ import annotations

import csv
import math
import threading
import time
from dataclasses import dataclass

import numpy as np

from ..errors import TraceIngestError
from .latency import DelayLine, LatencyModel
from .protocol import MsgType, decode, encode, WireMessage
from .transform import FrameTransform, PosePayload, inverse_transform, transform_pose
from .transport import UdpTransport, loopback_pair

TRACE_HEADER = ["t_us", "x", "y", "psi", "v"]


@dataclass(frozen=True)
class TraceRow:
    t_us: int
    x: float
    y: float
    psi: float
    v: float

    def pose(self) -> PosePayload:
        return PosePayload(self.x, self.y, self.psi, self.v, 0.0, 0.0)


@dataclass(frozen=True)
class ReplayReport:
    rows: int
    span_us: int


def read_trace(path) -> list[TraceRow]:
    """Parse a ``t_us,x,y,psi,v`` CSV; rows must be time-sorted."""
    rows = []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise TraceIngestError(f"cannot open trace: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return rows
        if [h.strip() for h in header] != TRACE_HEADER:
            raise TraceIngestError(f"expected header {','.join(TRACE_HEADER)}", line=1)
        prev = None
        for line_no, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(TRACE_HEADER):
                raise TraceIngestError(f"expected 5 fields, got {len(rec)}", line=line_no)
            try:
                t_us = int(rec[0])
                vals = [float(f) for f in rec[1:]]
            except ValueError as exc:
                raise TraceIngestError(f"unparsable field: {exc}", line=line_no) from None
            if t_us < 0 or t_us >= 1 << 64:
                raise TraceIngestError("t_us out of range", line=line_no)
            if not all(math.isfinite(v) for v in vals):
                raise TraceIngestError("non-finite value", line=line_no)
            if prev is not None and t_us < prev:
                raise TraceIngestError(f"timestamp {t_us} precedes {prev}", line=line_no)
            prev = t_us
            rows.append(TraceRow(t_us, *vals))
    return rows


def write_trace(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for r in rows:
            w.writerow([r.t_us, repr(r.x), repr(r.y), repr(r.psi), repr(r.v)])


def replay_trace(rows, transform: FrameTransform, pacing: str, send,
                 clock=time.monotonic, sleep=time.sleep) -> ReplayReport:
    """Emit each row through ``send(seq, t_us, pose)`` after mapping it with
    ``transform``. ``realtime`` pacing reproduces the recorded spacing;
    ``max`` sends back to back."""
    if pacing not in ("realtime", "max"):
        raise ValueError(f"pacing must be realtime or max, got {pacing!r}")
    if not rows:
        return ReplayReport(0, 0)
    first = rows[0].t_us
    start = clock()
    for seq, row in enumerate(rows):
        if pacing == "realtime":
            delay = start + (row.t_us - first) / 1e6 - clock()
            if delay > 0:
                sleep(delay)
        send(seq, row.t_us, transform_pose(row.pose(), transform))
    return ReplayReport(len(rows), rows[-1].t_us - first)


class PoseRecorder:
    """Environment-side sink: applies the freshest visible pose at each
    incoming message's timestamp (identity frame)."""

    def __init__(self, latency: LatencyModel | None = None):
        latency = latency or LatencyModel()
        self.line = None if latency.is_passthrough else DelayLine(latency, 2)
        self.newest = -1
        self.current = None
        self.samples = []
        self.discarded = 0
        self.gaps = 0

    def on_message(self, msg: WireMessage):
        if msg.msg_type is not MsgType.POSE:
            return
        if self.line is None:
            self._apply(msg)
        else:
            self.line.submit(msg, msg.t_us)
            for m in self.line.pop_ready(msg.t_us):
                self._apply(m)
        if self.current is not None:
            self.samples.append((msg.t_us, self.current))

    def _apply(self, msg):
        if msg.seq <= self.newest:
            self.discarded += 1
            return
        if self.newest >= 0 and msg.seq > self.newest + 1:
            self.gaps += msg.seq - self.newest - 1
        self.newest = msg.seq
        self.current = msg.payload


def vve_replay(rows, transform: FrameTransform, pacing: str = "max", transport: str = "loopback",
               latency: LatencyModel | None = None, timeout: float = 5.0) -> dict:
    """Stream a trace to an environment node and measure the overlap between
    what it saw and the transformed trace."""
    recorder = PoseRecorder(latency)
    if transport == "udp":
        rx = UdpTransport(("127.0.0.1", 0))
        tx = UdpTransport(("127.0.0.1", 0), rx.address)
    elif transport == "loopback":
        tx, rx = loopback_pair()
    else:
        raise ValueError(f"unknown transport {transport!r}")
    n = len(rows)
    received = []
    done = threading.Event()

    def sink():
        deadline = time.monotonic() + timeout + (rows[-1].t_us - rows[0].t_us) / 1e6 if rows else 0
        got = 0
        while got < n and time.monotonic() < deadline:
            data = rx.recv(0.05)
            if data is None:
                continue
            msg = decode(data)
            got += 1
            received.append(msg)
            recorder.on_message(msg)
        done.set()

    th = threading.Thread(target=sink, daemon=True)
    th.start()

    def send(seq, t_us, pose):
        tx.send(encode(WireMessage(MsgType.POSE, seq, t_us, pose)))
        if transport == "udp" and seq % 64 == 63:
            # keep the receive buffer from overflowing on back-to-back sends
            time.sleep(0.001)

    report = replay_trace(rows, transform, pacing, send)
    th.join(timeout + 1.0)
    tx.close()
    rx.close()

    by_t = {r.t_us: r for r in rows}
    errs, round_trip = [], []
    for t_us, pose in recorder.samples:
        row = by_t[t_us]
        want = transform_pose(row.pose(), transform)
        errs.append(math.hypot(pose.x - want.x, pose.y - want.y))
        back = inverse_transform(pose, transform)
        round_trip.append(math.hypot(back.x - row.x, back.y - row.y))
    errs = np.array(errs)
    rt = np.array(round_trip)
    return {
        "rows": report.rows,
        "span_us": report.span_us,
        "received": len(received),
        "compared": int(errs.size),
        "gaps": recorder.gaps,
        "discarded_old": recorder.discarded,
        "rms_position_error_m": float(math.sqrt(np.mean(errs ** 2))) if errs.size else 0.0,
        "max_position_error_m": float(errs.max()) if errs.size else 0.0,
        "max_round_trip_error_m": float(rt.max()) if rt.size else 0.0,
        "transport": transport,
        "pacing": pacing,
    }

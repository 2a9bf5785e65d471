"""Two-node hardware-in-the-loop emulation.

The *controller* node owns the ego vehicle model, the agent and every
ego-side evaluation. The *environment* node owns the pedestrians. The
controller streams POSE (mapped into the virtual frame), the environment
answers with ACTORS in the virtual frame, which the controller maps back.

Lockstep mode: the controller sends POSE ``k`` and blocks until ACTORS
``k`` arrives, retransmitting on timeout; the environment advances its
world exactly once per new POSE and replays its cached reply for
duplicates. Latency injection is evaluated in virtual time: ACTORS ``k``
becomes visible to the controller at ``t_k + delay``; until then the
freshest earlier snapshot is used.

Free-running mode: both nodes pace to the wall clock from the shared
``t0``; nothing blocks on the peer.
"""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import HandshakeFailure, InvalidInputError, PeerLostError
from ..sim.engine import EngineParts, EgoSide, Simulator, StepResult, metrics_row
from ..sim.scenario import ActorSnapshot, ActorWorld, Scenario
from .handshake import controller_handshake, environment_handshake
from .latency import DelayLine, LatencyModel
from .protocol import ActorRecord, MsgType
from .transform import FrameTransform, PosePayload, transform_pose
from .transport import Endpoint

log = logging.getLogger(__name__)

STREAM_ACTORS = 1
STREAM_POSE = 2


@dataclass(frozen=True)
class LinkConfig:
    bind_host: str = "127.0.0.1"
    bind_port: int = 47001
    peer_host: str = "127.0.0.1"
    peer_port: int = 47002
    mode: str = "lockstep"
    handshake_timeout: float = 5.0
    heartbeat_interval: float = 0.2
    peer_timeout: float = 2.0
    step_timeout: float = 0.25
    pose_rate_hz: float = 100.0
    actors_rate_hz: float = 20.0
    base_delay_ms: float = 0.0
    jitter_ms: float = 0.0
    drop_prob: float = 0.0
    latency_seed: int = 0
    frame_x0: float = 0.0
    frame_y0: float = 0.0
    frame_theta: float = 0.0
    frame_xv: float = 0.0
    frame_yv: float = 0.0

    def __post_init__(self):
        if self.mode not in ("lockstep", "free"):
            raise InvalidInputError(f"link mode must be lockstep or free, got {self.mode!r}")
        for name in ("handshake_timeout", "peer_timeout", "step_timeout", "pose_rate_hz",
                     "actors_rate_hz"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        self.latency()

    def latency(self) -> LatencyModel:
        return LatencyModel(self.base_delay_ms, self.jitter_ms, self.drop_prob,
                            self.latency_seed)

    def transform(self) -> FrameTransform:
        return FrameTransform((self.frame_x0, self.frame_y0), self.frame_theta,
                              (self.frame_xv, self.frame_yv))

    def swapped(self) -> "LinkConfig":
        """The same link seen from the other node."""
        from dataclasses import replace
        return replace(self, bind_host=self.peer_host, bind_port=self.peer_port,
                       peer_host=self.bind_host, peer_port=self.bind_port)


@dataclass
class LinkStats:
    actors_received: int = 0
    actors_applied: int = 0
    gaps: int = 0
    stale_steps: int = 0
    dropped: int = 0
    discarded_old: int = 0
    retransmits: int = 0
    protocol_errors: dict = field(default_factory=dict)


@dataclass
class ControllerResult:
    rows: list
    states: list
    outcome: dict
    stats: LinkStats
    session_t0_us: int


def _outcome(res: StepResult | None, steps: int) -> dict:
    if res is None:
        return {"steps": steps}
    i = res.info
    return {"steps": steps, "t": i.t, "collision": i.collision, "zone_entered": i.zone_entered,
            "stopped": i.stopped, "compliant": i.compliant, "end_of_path": i.end_of_path,
            "timeout": i.timeout}


class ActorFeed:
    """Controller-side view of the actor stream: latency in virtual time,
    freshest-snapshot-wins, gap and staleness accounting."""

    def __init__(self, transform: FrameTransform, latency: LatencyModel, stats: LinkStats):
        self.transform = transform
        self.line = None if latency.is_passthrough else DelayLine(latency, STREAM_ACTORS)
        self.stats = stats
        self.current = None
        self.current_seq = -1
        self.received_seq = -1

    def offer(self, msg, now_us: int):
        self.stats.actors_received += 1
        self.received_seq = max(self.received_seq, msg.seq)
        if self.line is None or msg.seq == 0:
            self._apply(msg)
            return
        if self.line.submit(msg, msg.t_us) is None:
            self.stats.dropped += 1
        self.release(now_us)

    def release(self, now_us: int):
        if self.line is not None:
            for msg in self.line.pop_ready(now_us):
                self._apply(msg)

    def _apply(self, msg):
        if msg.seq <= self.current_seq:
            self.stats.discarded_old += 1
            return
        if self.current_seq >= 0 and msg.seq > self.current_seq + 1:
            self.stats.gaps += msg.seq - self.current_seq - 1
        self.current_seq = msg.seq
        self.stats.actors_applied += 1
        t = self.transform
        snaps = []
        for a in msg.payload:
            x, y = t.inverse_point(a.x, a.y)
            snaps.append(ActorSnapshot(a.id, x, y, t.inverse_heading(a.heading), a.speed))
        self.current = snaps


def run_controller(ep: Endpoint, policy, scenario: Scenario, parts: EngineParts,
                   link: LinkConfig, on_row=None) -> ControllerResult:
    """Drive the ego side of a HIL session until a terminal step.

    ``on_row`` receives each metrics row as it is produced, so a caller can
    persist partial results if the peer disappears mid-run.
    """
    session = controller_handshake(ep, link.handshake_timeout)
    t0 = session.t0_us
    cfg = parts.cfg
    dt_us = cfg.dt_agent_us
    stats = LinkStats()
    feed = ActorFeed(link.transform(), link.latency(), stats)
    ego = EgoSide(scenario, parts)
    ego.reset()
    transform = link.transform()
    n_actors = len(scenario.actors)
    last_sent = None

    def wait_actors(seq: int, now_us: int):
        """Lockstep: block until ACTORS ``seq`` has arrived."""
        nonlocal last_sent
        while feed.received_seq < seq:
            msg = ep.receive(link.step_timeout)
            if msg is None:
                stats.retransmits += 1
                if last_sent is None:
                    last_sent = ep.send(MsgType.ACK, session.nonce, t_us=t0)
                else:
                    ep.resend(last_sent)
                continue
            _handle(msg, now_us)
        feed.release(now_us)

    def _handle(msg, now_us):
        if msg.msg_type is MsgType.ACTORS:
            feed.offer(msg, now_us)
        elif msg.msg_type is MsgType.START and msg.payload.nonce == session.nonce:
            ep.send(MsgType.ACK, session.nonce, t_us=t0)
        elif msg.msg_type is MsgType.BYE:
            raise PeerLostError("environment closed the session")

    def send_pose(seq: int, t_us: int):
        nonlocal last_sent
        x = ego.x
        pose = transform_pose(PosePayload(float(x[3]), float(x[4]), float(x[5]),
                                          float(x[1]), float(x[0]), float(x[2])), transform)
        last_sent = ep.send(MsgType.POSE, pose, t_us=t_us, seq=seq)

    lockstep = link.mode == "lockstep"
    if lockstep:
        wait_actors(0, t0)
    else:
        _sleep_until_us(t0)
        while feed.current is None:
            msg = ep.receive(link.step_timeout)
            if msg is not None:
                _handle(msg, t0)
    res = ego.evaluate(feed.current, None)
    rows, states = [], []
    pose_every = max(1, int(round(1.0 / (link.pose_rate_hz * cfg.dt_dynamics))))
    pose_seq = 0
    try:
        while True:
            action = int(policy(res.obs))
            k = ego.step_index + 1
            now_us = t0 + k * dt_us
            if lockstep:
                ego.apply(action)
                send_pose(k, now_us)
                wait_actors(k, now_us)
            else:
                u = ego.control_for(action)
                done = 0
                while done < cfg.substeps:
                    n = min(pose_every, cfg.substeps - done)
                    ego.model.integrate(ego.x, u, cfg.dt_dynamics, n, cfg.integrator,
                                        t0=ego.t + done * cfg.dt_dynamics)
                    done += n
                    pose_seq += 1
                    send_pose(pose_seq, t0 + ego.step_index * dt_us
                              + int(round(done * cfg.dt_dynamics * 1e6)))
                ego.step_index += 1
                _sleep_until_us(now_us)
                for msg in ep.drain():
                    _handle(msg, now_us)
                feed.release(now_us)
            if feed.current_seq < k:
                stats.stale_steps += 1
            res = ego.evaluate(feed.current, action)
            states.append(ego.x.copy())
            row = metrics_row(res, ego.x, n_actors)
            rows.append(row)
            if on_row is not None:
                on_row(row)
            if res.terminal:
                break
    finally:
        try:
            ep.send(MsgType.BYE)
        except OSError:
            pass
    stats.protocol_errors = dict(ep.errors)
    return ControllerResult(rows, states, _outcome(res, ego.step_index), stats, t0)


def _sleep_until_us(t_us: int):
    delay = t_us / 1e6 - time.time()
    if delay > 0:
        time.sleep(delay)


@dataclass
class EnvironmentResult:
    ticks: int
    poses: list
    gaps: int
    discarded_old: int
    duplicates: int
    protocol_errors: dict


def run_environment(ep: Endpoint, scenario: Scenario, link: LinkConfig, dt_agent: float,
                    seed, die_after_ticks: int | None = None,
                    max_duration: float = 60.0) -> EnvironmentResult:
    """Serve the pedestrian world to one controller session."""
    lockstep = link.mode == "lockstep"
    session = environment_handshake(ep, link.handshake_timeout,
                                    lead_s=0.0 if lockstep else 0.2)
    t0 = session.t0_us
    world = ActorWorld(scenario)
    transform = link.transform()
    pose_line = None if link.latency().is_passthrough else DelayLine(link.latency(), STREAM_POSE)
    replies = {}
    poses = []
    counters = {"gaps": 0, "old": 0, "dup": 0}
    newest_pose = -1

    def actors_msg(seq, t_us):
        recs = []
        for a in world.snapshot():
            x, y = transform.point(a.x, a.y)
            recs.append(ActorRecord(a.id, x, y, transform.heading(a.heading), a.speed))
        replies[seq] = ep.send(MsgType.ACTORS, tuple(recs), t_us=t_us, seq=seq)
        replies.pop(seq - 8, None)

    def note_pose(msg):
        nonlocal newest_pose
        if msg.seq <= newest_pose:
            counters["old"] += 1
            return False
        if newest_pose >= 0 and msg.seq > newest_pose + 1:
            counters["gaps"] += msg.seq - newest_pose - 1
        newest_pose = msg.seq
        p = msg.payload
        poses.append((msg.t_us - t0, p.x, p.y, p.psi, p.v))
        return True

    def take_pose(msg, now_us):
        if pose_line is None:
            return note_pose(msg)
        pose_line.submit(msg, msg.t_us)
        for m in pose_line.pop_ready(now_us):
            note_pose(m)
        return True

    world.reset(seed)
    actors_msg(0, t0)
    ticks = 0
    pending = list(session.early)
    started = time.monotonic()
    if lockstep:
        while time.monotonic() - started < max_duration:
            msg = pending.pop(0) if pending else ep.receive(link.peer_timeout)
            if msg is None:
                continue
            t = msg.msg_type
            if t is MsgType.POSE:
                if msg.seq == ticks + 1:
                    world.advance(dt_agent)
                    ticks += 1
                    take_pose(msg, msg.t_us)
                    actors_msg(ticks, msg.t_us)
                    if die_after_ticks is not None and ticks >= die_after_ticks:
                        _die(ep)
                        break
                elif msg.seq in replies:
                    counters["dup"] += 1
                    ep.resend(replies[msg.seq])
            elif t is MsgType.ACK:
                counters["dup"] += 1
                if 0 in replies:
                    ep.resend(replies[0])
            elif t is MsgType.HELLO and msg.payload == session.nonce:
                ep.resend(session.start)
            elif t is MsgType.BYE:
                break
    else:
        period_us = int(round(1e6 / link.actors_rate_hz))
        _sleep_until_us(t0)
        done = False
        while not done and time.monotonic() - started < max_duration:
            ticks += 1
            now_us = t0 + ticks * period_us
            _sleep_until_us(now_us)
            world.advance(period_us / 1e6)
            for msg in ep.drain():
                if msg.msg_type is MsgType.POSE:
                    take_pose(msg, now_us)
                elif msg.msg_type is MsgType.BYE:
                    done = True
            if pose_line is not None:
                for m in pose_line.pop_ready(now_us):
                    note_pose(m)
            if not done:
                actors_msg(ticks, now_us)
            if die_after_ticks is not None and ticks >= die_after_ticks:
                _die(ep)
                break
            if not done and time.monotonic() - ep.last_rx > link.peer_timeout:
                raise PeerLostError(f"no traffic from controller for {link.peer_timeout:.2f} s")
    return EnvironmentResult(ticks, poses, counters["gaps"], counters["old"], counters["dup"],
                             dict(ep.errors))


def _die(ep: Endpoint):
    """Fault injection: stop answering without a goodbye."""
    log.warning("fault injection: environment going silent")
    if os.environ.get("VVESIM_HARD_EXIT") == "1":
        os._exit(17)
    ep.close()


def mil_reference(policy, scenario: Scenario, parts: EngineParts, seed, record=True):
    """Single-process run of the same episode, for the deviation report."""
    sim = Simulator(scenario, parts)
    obs = sim.reset(seed)
    rows, states = [], []
    n = len(scenario.actors)
    res = None
    while True:
        res = sim.step(int(policy(obs)))
        obs = res.obs
        states.append(sim.ego.x.copy())
        if record:
            rows.append(metrics_row(res, sim.ego.x, n))
        if res.terminal:
            break
    return rows, states, _outcome(res, sim.ego.step_index)


def deviation_report(hil: ControllerResult, mil_states: list, mil_outcome: dict,
                     link: LinkConfig, seed) -> dict:
    """Compare the HIL trajectory against the single-process reference."""
    n = min(len(hil.states), len(mil_states))
    labels = ("beta", "v", "r", "x", "y", "psi", "d_omega_f", "d_omega_r")
    if n:
        a = np.array(hil.states[:n])
        b = np.array(mil_states[:n])
        diff = np.abs(a - b)
        max_dev = {k: float(diff[:, i].max()) for i, k in enumerate(labels)}
        pos = np.hypot(a[:, 3] - b[:, 3], a[:, 4] - b[:, 4])
        rms_pos = float(math.sqrt(np.mean(pos * pos)))
    else:
        max_dev = {k: 0.0 for k in labels}
        rms_pos = 0.0
    identical = (len(hil.states) == len(mil_states)
                 and all(np.array_equal(p, q) for p, q in zip(hil.states, mil_states)))
    return {
        "seed": seed,
        "mode": link.mode,
        "latency": asdict(link.latency()),
        "bit_identical": bool(identical),
        "steps_hil": len(hil.states),
        "steps_mil": len(mil_states),
        "compared_steps": n,
        "max_abs_deviation": max_dev,
        "rms_position_deviation_m": rms_pos,
        "outcome_hil": hil.outcome,
        "outcome_mil": mil_outcome,
        "link": asdict(hil.stats),
    }


def open_endpoint(link: LinkConfig, transport=None) -> Endpoint:
    from .transport import UdpTransport
    if transport is None:
        transport = UdpTransport((link.bind_host, link.bind_port),
                                 (link.peer_host, link.peer_port))
    return Endpoint(transport, link.heartbeat_interval, link.peer_timeout)


__all__ = ["ActorFeed", "ControllerResult", "EnvironmentResult", "HandshakeFailure",
           "LinkConfig", "LinkStats", "deviation_report", "mil_reference", "open_endpoint",
           "run_controller", "run_environment"]

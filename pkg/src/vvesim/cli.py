"""``vvesim`` command-line entry point.

Subcommands: ``mil-train``, ``mil-eval``, ``hil-run``, ``vve-replay`` and
``print-config``. Every run subcommand writes ``manifest.json`` into its
output directory, including failed runs.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import math
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .agent.network import QNetwork
from .agent.training import EPISODE_LOG_FIELDS, greedy_policy, rollout, train
from .config import ENV_VAR, RunConfig, load_config, render
from .csvio import METRICS_FIELDS, CsvWriter, write_csv, write_json_atomic
from .errors import (ConfigError, HandshakeFailure, InvalidInputError, ModelIncompatibleError,
                     PeerLostError, SimulationFault, TraceIngestError)
from .link.hil import (deviation_report, mil_reference, open_endpoint, run_controller,
                       run_environment)
from .link.trace import TRACE_HEADER, TraceRow, read_trace, vve_replay, write_trace
from .sim.engine import Simulator

log = logging.getLogger("vvesim")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_HANDSHAKE = 3
EXIT_SIM_FAULT = 4
EXIT_MODEL = 5
EXIT_PEER_LOST = 6
EXIT_INGEST = 7

_EXIT_FOR = [
    (ConfigError, EXIT_CONFIG),
    (InvalidInputError, EXIT_CONFIG),
    (HandshakeFailure, EXIT_HANDSHAKE),
    (SimulationFault, EXIT_SIM_FAULT),
    (ModelIncompatibleError, EXIT_MODEL),
    (PeerLostError, EXIT_PEER_LOST),
    (TraceIngestError, EXIT_INGEST),
]


def exit_code_for(exc: BaseException) -> int:
    for cls, code in _EXIT_FOR:
        if isinstance(exc, cls):
            return code
    return EXIT_FAILURE


def artifact_version() -> str:
    """Package version, suffixed with the git commit when run from a checkout."""
    here = Path(__file__).resolve().parent
    try:
        sha = subprocess.run(["git", "rev-parse", "--short", "HEAD"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if sha.returncode == 0 and sha.stdout.strip():
            dirty = subprocess.run(["git", "status", "--porcelain", "--", "."], cwd=here,
                                   capture_output=True, text=True, timeout=5)
            suffix = ".dirty" if dirty.stdout.strip() else ""
            return f"{__version__}+g{sha.stdout.strip()}{suffix}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return _jsonable(v.item())
    return v


class Run:
    """Collects manifest fields and writes the manifest atomically at the end."""

    def __init__(self, command: str, args, cfg: RunConfig | None, out: Path):
        self.out = out
        out.mkdir(parents=True, exist_ok=True)
        self.doc = {
            "command": command,
            "argv": list(args.argv),
            "version": artifact_version(),
            "seed": getattr(args, "seed", None),
            "config": cfg.snapshot() if cfg else None,
            "started": _now(),
            "outputs": {},
        }

    def output(self, name: str, filename: str) -> Path:
        path = self.out / filename
        self.doc["outputs"][name] = str(path)
        return path

    def finish(self, status="ok", error: BaseException | None = None, **extra):
        self.doc["finished"] = _now()
        self.doc["status"] = status
        if error is not None:
            self.doc["error"] = {"type": type(error).__name__, "message": str(error),
                                 "exit_code": exit_code_for(error)}
        self.doc.update(extra)
        write_json_atomic(self.out / "manifest.json", _jsonable(self.doc))


def _load(args, extra=()) -> RunConfig:
    """Config file, then ``--set`` overrides, then dedicated flags."""
    overrides = list(args.set or []) + list(extra)
    if getattr(args, "seed", None) is not None:
        overrides.append(f"scenario.seed={args.seed}")
    cfg = load_config(args.config, overrides)
    if hasattr(args, "seed") and args.seed is None:
        args.seed = cfg.scenario.seed
    return cfg


def _check_model(net: QNetwork, sim: Simulator):
    spec = net.spec
    want = (sim.parts.grid.size, sim.parts.scales.fusion_dim, sim.n_actions)
    got = (spec.grid_input_dim, spec.fusion_input_dim, spec.output_dim)
    if want != got:
        raise ModelIncompatibleError(
            f"model expects (grid, fusion, actions) = {got}, simulator provides {want}")


def summarize(rows: list, weights, outcome) -> dict:
    """Summary statistics of one evaluated episode."""
    hist = {"red": 0, "orange": 0, "blue": 0, "clear": 0}
    order = ["red", "orange", "blue", "clear"]
    best = None
    for row in rows:
        bands = [row[k] for k in row if k.startswith("band_")]
        hist[min(bands, key=order.index) if bands else "clear"] += 1
        i = 1
        while f"ttz_veh_{i}" in row:
            pair = (row[f"ttz_veh_{i}"], row[f"ttz_ped_{i}"])
            if best is None or max(pair) < max(best[0]):
                best = (pair, row["t"], i)
            i += 1
    err = np.array([r["v"] - r["v_ref"] for r in rows]) if rows else np.zeros(0)
    return {
        "stopped_before_crosswalk": bool(outcome.stopped_before_zone),
        "collision": bool(outcome.collision),
        "steps": outcome.steps,
        "total_reward": outcome.total_reward,
        "mean_step_reward": outcome.total_reward / outcome.steps if outcome.steps else 0.0,
        "final_speed": rows[-1]["v"] if rows else None,
        "final_x": rows[-1]["x"] if rows else None,
        "min_ttz_pair": None if best is None else {
            "ttz_vehicle": best[0][0], "ttz_actor": best[0][1], "t": best[1], "actor": best[2]},
        "band_histogram": hist,
        "speed_tracking_rms": float(math.sqrt(np.mean(err ** 2))) if err.size else 0.0,
        "reward_weights": {"w_v": weights.w_v, "w_j": weights.w_j,
                           "p_collision": weights.p_collision, "b_stop": weights.b_stop},
    }


def cmd_print_config(args) -> int:
    cfg = load_config(args.config, args.set or [])
    sys.stdout.write(render(cfg))
    return EXIT_OK


def cmd_mil_train(args) -> int:
    cfg = _load(args, [] if args.episodes is None else [f"agent.episodes={args.episodes}"])
    run = Run("mil-train", args, cfg, Path(args.out))
    model_path = run.output("model", "model.json")
    log_path = run.output("episode_log", "episodes.csv")
    sim = Simulator(cfg.build_scenario(), cfg.engine_parts())
    writer = CsvWriter(log_path, EPISODE_LOG_FIELDS)
    every = max(1, cfg.agent.episodes // 20)

    def on_episode(row):
        writer.write(row)
        if row["episode"] % every == 0:
            log.info("episode %d  mean step reward %.3f  epsilon %.3f", row["episode"],
                     row["mean_step_reward"], row["epsilon"])

    try:
        result = train(sim, cfg.agent, args.seed, on_episode)
    except BaseException as exc:
        writer.close()
        run.finish("failed", exc)
        raise
    writer.close()
    result.net.save(model_path)
    means = [r["mean_step_reward"] for r in result.log]
    k = min(100, len(means))
    run.finish("ok", episodes=len(result.log), total_steps=result.steps,
               leading_mean_step_reward=float(np.mean(means[:k])) if k else None,
               trailing_mean_step_reward=float(np.mean(means[-k:])) if k else None)
    return EXIT_OK


def cmd_mil_eval(args) -> int:
    cfg = _load(args, [] if args.v0 is None else [f"scenario.v_init={args.v0}"])
    run = Run("mil-eval", args, cfg, Path(args.out))
    try:
        net = QNetwork.load(args.model)
        sim = Simulator(cfg.build_scenario(), cfg.engine_parts())
        _check_model(net, sim)
        policy = greedy_policy(net)
        summaries = []
        for i in range(args.episodes):
            seed = args.seed if args.episodes == 1 else [args.seed, i]
            name = "metrics.csv" if args.episodes == 1 else f"metrics_{i:03d}.csv"
            out = rollout(policy, sim, seed, record=True)
            write_csv(run.output(f"metrics_{i}", name), METRICS_FIELDS, out.rows)
            if args.trace_out and i == 0:
                write_trace(run.output("trace", args.trace_out), [
                    TraceRow(int(round(r["t"] * 1e6)), r["x"], r["y"], r["psi"], r["v"])
                    for r in out.rows])
            s = summarize(out.rows, sim.parts.weights, out)
            s["seed"] = seed
            summaries.append(s)
        doc = summaries[0] if len(summaries) == 1 else {
            "episodes": len(summaries),
            "stopped_before_crosswalk": sum(s["stopped_before_crosswalk"] for s in summaries),
            "collisions": sum(s["collision"] for s in summaries),
            "episodes_with_red": sum(s["band_histogram"]["red"] > 0 for s in summaries),
            "per_episode": summaries,
        }
        write_json_atomic(run.output("summary", "summary.json"), _jsonable(doc))
    except BaseException as exc:
        run.finish("failed", exc)
        raise
    run.finish("ok")
    print(Path(run.out / "summary.json"))
    return EXIT_OK


def _addr(text: str):
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"address {text!r} is not host:port", key="link")
    return host, int(port)


def cmd_hil_run(args) -> int:
    overrides = []
    if args.bind:
        h, p = _addr(args.bind)
        overrides += [f"link.bind_host={h}", f"link.bind_port={p}"]
    if args.peer:
        h, p = _addr(args.peer)
        overrides += [f"link.peer_host={h}", f"link.peer_port={p}"]
    cfg = _load(args, overrides)
    run = Run(f"hil-run:{args.role}", args, cfg, Path(args.out))
    ep = None
    try:
        scenario = cfg.build_scenario()
        parts = cfg.engine_parts()
        if args.role == "controller":
            if not args.model:
                raise ConfigError("--model is required for the controller role", key="model")
            net = QNetwork.load(args.model)
            _check_model(net, Simulator(scenario, parts))
            policy = greedy_policy(net)
            writer = CsvWriter(run.output("metrics", "metrics.csv"), METRICS_FIELDS)
            ep = open_endpoint(cfg.link)
            try:
                result = run_controller(ep, policy, scenario, parts, cfg.link,
                                        on_row=writer.write)
            finally:
                writer.close()
            _, mil_states, mil_outcome = mil_reference(
                policy, scenario, cfg.engine_parts(), args.seed)
            report = deviation_report(result, mil_states, mil_outcome, cfg.link, args.seed)
            write_json_atomic(run.output("deviation", "deviation.json"), _jsonable(report))
            run.finish("ok", outcome=result.outcome, bit_identical=report["bit_identical"])
        else:
            ep = open_endpoint(cfg.link)
            env = run_environment(ep, scenario, cfg.link, cfg.scenario.dt_agent, args.seed,
                                  die_after_ticks=args.die_after_ticks)
            write_trace(run.output("poses", "env_poses.csv"),
                        [TraceRow(int(t), x, y, psi, v) for t, x, y, psi, v in env.poses])
            run.finish("ok", ticks=env.ticks, gaps=env.gaps, duplicates=env.duplicates,
                       discarded_old=env.discarded_old)
    except BaseException as exc:
        cause = "heartbeat-timeout" if isinstance(exc, PeerLostError) else None
        run.finish("failed", exc, cause=cause)
        raise
    finally:
        if ep is not None:
            ep.close()
    return EXIT_OK


def cmd_vve_replay(args) -> int:
    overrides = []
    if args.origin is not None:
        overrides += [f"link.frame_x0={args.origin[0]}", f"link.frame_y0={args.origin[1]}"]
    if args.rotation is not None:
        overrides.append(f"link.frame_theta={args.rotation}")
    if args.offset is not None:
        overrides += [f"link.frame_xv={args.offset[0]}", f"link.frame_yv={args.offset[1]}"]
    cfg = _load(args, overrides)
    run = Run("vve-replay", args, cfg, Path(args.out))
    try:
        rows = read_trace(args.trace)
        report = vve_replay(rows, cfg.link.transform(), args.pacing, args.transport,
                            cfg.link.latency())
        report["trace"] = str(args.trace)
        write_json_atomic(run.output("report", "replay_report.json"), _jsonable(report))
    except BaseException as exc:
        run.finish("failed", exc)
        raise
    run.finish("ok", rms_position_error_m=report["rms_position_error_m"])
    print(Path(run.out / "replay_report.json"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vvesim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True, out=True):
        sp.add_argument("--config", help=f"INI file (default: ${ENV_VAR})")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config key; repeatable")
        if seed:
            sp.add_argument("--seed", type=int, help="overrides scenario.seed")
        if out:
            sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("print-config", help="print the fully resolved configuration")
    common(sp, seed=False, out=False)
    sp.set_defaults(func=cmd_print_config)

    sp = sub.add_parser("mil-train", help="train the agent against the simulator")
    common(sp)
    sp.add_argument("--episodes", type=int, help="overrides agent.episodes")
    sp.set_defaults(func=cmd_mil_train)

    sp = sub.add_parser("mil-eval", help="greedy evaluation of a trained model")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--v0", type=float, help="initial speed, overrides scenario.v_init")
    sp.add_argument("--episodes", type=int, default=1,
                    help="number of seeded evaluations (seeds [seed, i] when > 1)")
    sp.add_argument("--trace-out", help="also write the ego trajectory as a replay trace")
    sp.set_defaults(func=cmd_mil_eval)

    sp = sub.add_parser("hil-run", help="one node of a two-process HIL session")
    common(sp)
    sp.add_argument("--role", choices=("controller", "environment"), required=True)
    sp.add_argument("--model", help="trained model (controller role)")
    sp.add_argument("--bind", help="local host:port, overrides link.bind_*")
    sp.add_argument("--peer", help="peer host:port, overrides link.peer_*")
    sp.add_argument("--die-after-ticks", type=int,
                    help="fault injection: environment goes silent after N ticks")
    sp.set_defaults(func=cmd_hil_run)

    sp = sub.add_parser("vve-replay", help="replay a recorded trace through the link")
    common(sp, seed=False)
    sp.add_argument("--trace", required=True, help=f"CSV with header {','.join(TRACE_HEADER)}")
    sp.add_argument("--origin", type=float, nargs=2, metavar=("X0", "Y0"))
    sp.add_argument("--rotation", type=float, metavar="THETA")
    sp.add_argument("--offset", type=float, nargs=2, metavar=("XV", "YV"))
    sp.add_argument("--pacing", choices=("realtime", "max"), default="max")
    sp.add_argument("--transport", choices=("loopback", "udp"), default="udp")
    sp.set_defaults(func=cmd_vve_replay)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:
        code = exit_code_for(exc)
        log.error("%s: %s", type(exc).__name__, exc)
        if code == EXIT_FAILURE:
            log.debug("traceback", exc_info=True)
        return code

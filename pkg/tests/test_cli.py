import json
import math
import os
import socket
import subprocess
import sys

import pytest

from vvesim.agent import NetworkSpec, QNetwork
from vvesim.cli import (EXIT_CONFIG, EXIT_INGEST, EXIT_MODEL, EXIT_OK, EXIT_PEER_LOST,
                        EXIT_HANDSHAKE, main)
from vvesim.config import load_config, render
from vvesim.csvio import METRICS_FIELDS, read_csv
from vvesim.link.trace import TraceRow, write_trace
from vvesim.sim import Longitudinal

SMALL_NET = ["--set", "agent.hidden_dims=16,16,16", "--set", "agent.fusion_layer_dim=8"]


def scripted_model(tmp_path, action, name=None):
    path = tmp_path / (name or f"scripted_{int(action)}.json")
    QNetwork.constant(NetworkSpec(), int(action)).save(path)
    return path


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def free_port():
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


# -- configuration -------------------------------------------------------------------

def test_print_config_round_trips(tmp_path, capsys):
    assert main(["print-config"]) == EXIT_OK
    text = capsys.readouterr().out
    for section in ("[vehicle]", "[tire]", "[wheel]", "[scenario]", "[agent]", "[link]"):
        assert section in text
    path = tmp_path / "cfg.ini"
    path.write_text(text)
    assert render(load_config(path)) == text


def test_config_file_env_and_flag_precedence(tmp_path, monkeypatch):
    path = tmp_path / "cfg.ini"
    path.write_text("[vehicle]\nm = 1800\n[scenario]\nv_set = 12.5\n")
    monkeypatch.setenv("VVESIM_CONFIG", str(path))
    cfg = load_config(overrides=["vehicle.m=2000"])
    assert cfg.vehicle.m == 2000.0 and cfg.scenario.v_set == 12.5


def test_unknown_key_names_key(tmp_path, caplog):
    assert main(["print-config", "--set", "vehicle.mass=3"]) == EXIT_CONFIG
    assert "vehicle.mass" in caplog.text
    path = tmp_path / "bad.ini"
    path.write_text("[tire]\nc_x = -5\n")
    assert main(["print-config", "--config", str(path)]) == EXIT_CONFIG


# -- mil-train / mil-eval -------------------------------------------------------------

def test_train_zero_episodes(tmp_path):
    out = tmp_path / "t0"
    assert main(["mil-train", "--episodes", "0", "--out", str(out), "--seed", "3"]) == EXIT_OK
    assert read_csv(out / "episodes.csv") == []
    QNetwork.load(out / "model.json")
    m = manifest(out)
    assert m["status"] == "ok" and m["seed"] == 3
    assert m["config"]["agent"]["episodes"] == 0
    assert m["started"] <= m["finished"]


def test_train_is_byte_reproducible(tmp_path):
    logs = []
    for name in ("a", "b"):
        out = tmp_path / name
        args = ["mil-train", "--episodes", "2", "--seed", "5", "--out", str(out)] + SMALL_NET
        assert main(args) == EXIT_OK
        logs.append((out / "episodes.csv").read_bytes())
        rows = read_csv(out / "episodes.csv")
        assert [r["episode"] for r in rows] == [0, 1]
    assert logs[0] == logs[1]


def test_eval_hard_brake_stand_in_stops(tmp_path):
    out = tmp_path / "ev"
    model = scripted_model(tmp_path, Longitudinal.HARD_BRAKE)
    assert main(["mil-eval", "--model", str(model), "--v0", "15", "--out", str(out),
                 "--trace-out", "trace.csv"]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["stopped_before_crosswalk"] is True
    assert summary["collision"] is False
    rows = read_csv(out / "metrics.csv")
    assert list(rows[0]) == list(METRICS_FIELDS)
    assert rows[0]["v"] < 15.0
    assert summary["band_histogram"]["red"] == 0
    assert (out / "trace.csv").exists()


def test_eval_never_brake_stand_in_collides(tmp_path):
    out = tmp_path / "ev"
    model = scripted_model(tmp_path, Longitudinal.HOLD_SET_SPEED)
    cfg = tmp_path / "ped.ini"
    cfg.write_text("[scenario]\npedestrian_xs = 82.0\npedestrian_span = 0.5\n"
                   "pedestrian_speed = 0.0\nrandomize_actor_phase = false\n")
    assert main(["mil-eval", "--config", str(cfg), "--model", str(model),
                 "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["collision"] is True
    assert summary["band_histogram"]["red"] > 0
    assert summary["stopped_before_crosswalk"] is False


def test_eval_multiple_episodes(tmp_path):
    out = tmp_path / "ev"
    model = scripted_model(tmp_path, Longitudinal.HARD_BRAKE)
    assert main(["mil-eval", "--model", str(model), "--episodes", "3",
                 "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["episodes"] == 3 and summary["stopped_before_crosswalk"] == 3
    assert (out / "metrics_002.csv").exists()


def test_eval_dimension_mismatch(tmp_path):
    out = tmp_path / "ev"
    path = tmp_path / "wrong.json"
    QNetwork(NetworkSpec(output_dim=7)).save(path)
    assert main(["mil-eval", "--model", str(path), "--out", str(out)]) == EXIT_MODEL
    m = manifest(out)
    assert m["status"] == "failed"
    assert m["error"]["exit_code"] == EXIT_MODEL


# -- vve-replay -----------------------------------------------------------------------

def write_straight_trace(path, n=100, v=15.0):
    write_trace(path, [TraceRow(i * 10_000, v * i * 0.01, 0.0, 0.0, v) for i in range(n)])


def test_vve_replay_identity_and_rotation(tmp_path):
    trace = tmp_path / "trace.csv"
    write_straight_trace(trace)
    out = tmp_path / "r1"
    assert main(["vve-replay", "--trace", str(trace), "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "replay_report.json").read_text())
    assert rep["rows"] == 100 and rep["rms_position_error_m"] <= 1e-9
    out = tmp_path / "r2"
    assert main(["vve-replay", "--trace", str(trace), "--rotation", "1.1", "--origin", "3",
                 "4", "--offset", "-7", "2", "--transport", "loopback",
                 "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "replay_report.json").read_text())
    assert rep["max_round_trip_error_m"] <= 1e-9
    assert manifest(out)["config"]["link"]["frame_theta"] == 1.1


def test_vve_replay_latency_error_visible(tmp_path):
    trace = tmp_path / "trace.csv"
    write_straight_trace(trace)
    out = tmp_path / "r"
    assert main(["vve-replay", "--trace", str(trace), "--set", "link.base_delay_ms=20",
                 "--transport", "loopback", "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "replay_report.json").read_text())
    assert rep["max_position_error_m"] == pytest.approx(0.3, rel=1e-6)


def test_vve_replay_ingest_error(tmp_path, caplog):
    trace = tmp_path / "bad.csv"
    trace.write_text("t_us,x,y,psi,v\n0,0,0,0,0\n10,0,0,0\n")
    out = tmp_path / "r"
    assert main(["vve-replay", "--trace", str(trace), "--out", str(out)]) == EXIT_INGEST
    assert "line 3" in caplog.text
    assert manifest(out)["status"] == "failed"


# -- hil-run ---------------------------------------------------------------------------

def cli(*args, env=None):
    return subprocess.Popen([sys.executable, "-m", "vvesim", *args], env=env,
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE)


def test_hil_handshake_failure(tmp_path):
    out = tmp_path / "c"
    model = scripted_model(tmp_path, Longitudinal.HARD_BRAKE)
    a, b = free_port(), free_port()
    code = main(["hil-run", "--role", "controller", "--model", str(model),
                 "--bind", f"127.0.0.1:{a}", "--peer", f"127.0.0.1:{b}",
                 "--set", "link.handshake_timeout=0.5", "--out", str(out)])
    assert code == EXIT_HANDSHAKE
    assert manifest(out)["error"]["type"] == "HandshakeFailure"


def test_hil_two_processes_bit_identical(tmp_path):
    model = scripted_model(tmp_path, Longitudinal.HARD_BRAKE)
    a, b = free_port(), free_port()
    env = cli("hil-run", "--role", "environment", "--bind", f"127.0.0.1:{b}",
              "--peer", f"127.0.0.1:{a}", "--seed", "4", "--out", str(tmp_path / "env"))
    ctrl = cli("hil-run", "--role", "controller", "--model", str(model), "--seed", "4",
               "--bind", f"127.0.0.1:{a}", "--peer", f"127.0.0.1:{b}",
               "--out", str(tmp_path / "ctrl"))
    assert ctrl.wait(60) == EXIT_OK, ctrl.stderr.read().decode()
    assert env.wait(30) == EXIT_OK, env.stderr.read().decode()
    dev = json.loads((tmp_path / "ctrl" / "deviation.json").read_text())
    assert dev["bit_identical"] is True
    assert dev["outcome_hil"]["compliant"] is True
    assert read_csv(tmp_path / "ctrl" / "metrics.csv")
    assert (tmp_path / "env" / "env_poses.csv").exists()


def test_hil_peer_killed_gives_heartbeat_timeout(tmp_path):
    model = scripted_model(tmp_path, Longitudinal.COAST)
    a, b = free_port(), free_port()
    hard = dict(os.environ, VVESIM_HARD_EXIT="1")
    env = cli("hil-run", "--role", "environment", "--bind", f"127.0.0.1:{b}",
              "--peer", f"127.0.0.1:{a}", "--die-after-ticks", "10",
              "--out", str(tmp_path / "env"), env=hard)
    ctrl = cli("hil-run", "--role", "controller", "--model", str(model),
               "--bind", f"127.0.0.1:{a}", "--peer", f"127.0.0.1:{b}",
               "--set", "link.peer_timeout=0.5", "--out", str(tmp_path / "ctrl"))
    assert ctrl.wait(60) == EXIT_PEER_LOST
    env.wait(30)
    m = manifest(tmp_path / "ctrl")
    assert m["status"] == "failed" and m["cause"] == "heartbeat-timeout"
    rows = read_csv(tmp_path / "ctrl" / "metrics.csv")
    assert len(rows) == 10
    assert all(math.isfinite(r["x"]) for r in rows)


def test_csv_round_trip_numpy_scalars(tmp_path):
    import numpy as np
    from vvesim.csvio import write_csv
    row = {"t": np.float64(0.1), "x": 1 / 3, "y": float("inf"), "psi": -0.0, "v": np.float32(2.5),
           "v_ref": 15.0, "beta": 1e-300, "r": 0.0, "action": np.int64(3), "reward": -1.25,
           "ttz_veh_1": None, "ttz_ped_1": 2.0, "ttz_veh_2": 3.0, "ttz_ped_2": 4.0,
           "band_1": "green", "band_2": "clear"}
    write_csv(tmp_path / "m.csv", METRICS_FIELDS, [row])
    back = read_csv(tmp_path / "m.csv")[0]
    for k, v in row.items():
        if v is None or isinstance(v, str):
            assert back[k] == v
        else:
            assert back[k] == float(v) and type(back[k]) in (int, float)

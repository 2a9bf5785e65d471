import math

import numpy as np
import pytest

from vvesim.agent import (MomentumSGD, NetworkSpec, QNetwork, ReplayBuffer, TrainConfig,
                          Transition, act, ddqn_target, rollout, greedy_policy, sync_target,
                          train, train_step)
from vvesim.agent.ddqn import loss_and_grads
from vvesim.errors import InvalidInputError, ModelIncompatibleError
from vvesim.sim import Longitudinal, Simulator
from vvesim.sim.engine import AgentObservation

SMALL = NetworkSpec(grid_input_dim=8, fusion_input_dim=4, hidden_dims=(6, 6, 6),
                    fusion_layer_dim=5, output_dim=3)


def obs_for(spec, rng, n=None):
    shape = (spec.grid_input_dim,) if n is None else (n, spec.grid_input_dim)
    fshape = (spec.fusion_input_dim,) if n is None else (n, spec.fusion_input_dim)
    return (rng.integers(0, 2, shape).astype(float), rng.uniform(-1, 1, fshape))


def forward_oracle(net, grid, fusion):
    """Per-sample loops with explicit sums: an independent second implementation."""
    out = []
    for g, fz in zip(grid, fusion):
        h = list(g)
        for w, b in zip(net.weights[:-2], net.biases[:-2]):
            h = [max(sum(h[i] * w[i, j] for i in range(len(h))) + b[j], 0.0)
                 for j in range(w.shape[1])]
        z = h + list(fz)
        w, b = net.weights[-2], net.biases[-2]
        f = [max(sum(z[i] * w[i, j] for i in range(len(z))) + b[j], 0.0)
             for j in range(w.shape[1])]
        w, b = net.weights[-1], net.biases[-1]
        out.append([sum(f[i] * w[i, j] for i in range(len(f))) + b[j]
                    for j in range(w.shape[1])])
    return np.array(out)


def test_forward_matches_independent_oracle(rng):
    net = QNetwork.initialize(SMALL, rng)
    for b in net.biases:
        b[:] = rng.uniform(-0.1, 0.1, b.shape)
    grid, fusion = obs_for(SMALL, rng, 7)
    np.testing.assert_allclose(net.forward(grid, fusion), forward_oracle(net, grid, fusion),
                               rtol=1e-12, atol=1e-12)


def test_zero_network_outputs_zero(rng):
    net = QNetwork(NetworkSpec())
    grid, fusion = obs_for(NetworkSpec(), rng, 3)
    assert np.all(net.forward(grid, fusion) == 0.0)


def test_dead_grid_path_is_affine_in_fusion(rng):
    net = QNetwork(SMALL)
    w = net.weights[-2]
    w[6:, :4] = np.eye(4)  # fusion inputs pass straight through to f
    net.biases[-2][:] = 10.0  # keep every ReLU active on [-1, 1]
    head = rng.normal(size=net.weights[-1].shape)
    net.weights[-1][:] = head
    net.biases[-1][:] = [0.1, 0.2, 0.3]
    grid, fusion = obs_for(SMALL, rng, 5)
    f = np.concatenate([fusion + 10.0, np.full((5, 1), 10.0)], axis=1)
    np.testing.assert_allclose(net.forward(grid, fusion), f @ head + net.biases[-1],
                               rtol=1e-13)


def fd_check(spec, rng, coords=20, h=1e-5):
    net = QNetwork.initialize(spec, rng)
    for b in net.biases:
        b[:] = rng.uniform(-0.05, 0.05, b.shape)
    grid, fusion = obs_for(spec, rng, 4)
    d_q = rng.normal(size=(4, spec.output_dim))
    _, acts = net.forward(grid, fusion, keep=True)
    gw, gb = net.backward(acts, d_q)

    def loss():
        return float(np.sum(d_q * net.forward(grid, fusion)))

    worst = 0.0
    for params, grads in ((net.weights, gw), (net.biases, gb)):
        for p, g in zip(params, grads):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for k in rng.choice(flat.size, min(coords, flat.size), replace=False):
                old = flat[k]
                flat[k] = old + h
                up = loss()
                flat[k] = old - h
                down = loss()
                flat[k] = old
                num = (up - down) / (2 * h)
                scale = max(abs(num), abs(gflat[k]))
                if scale > 1e-8:
                    worst = max(worst, abs(num - gflat[k]) / scale)
    return worst


def test_gradients_match_central_differences_small(rng):
    assert fd_check(SMALL, rng) <= 1e-5


def test_gradients_match_central_differences_default_topology(rng):
    assert fd_check(NetworkSpec(), rng) <= 1e-5


def test_loss_gradient_is_mse_derivative(rng):
    net = QNetwork.initialize(SMALL, rng)
    grid, fusion = obs_for(SMALL, rng, 6)
    actions = rng.integers(0, 3, 6)
    q = net.forward(grid, fusion)
    y = q[np.arange(6), actions]
    loss, gw, gb = loss_and_grads(net, grid, fusion, actions, y)
    assert loss == 0.0
    assert all(np.all(g == 0) for g in gw + gb)


def test_act_greedy_and_ties(rng):
    net = QNetwork.constant(SMALL, 1)
    obs = AgentObservation(*obs_for(SMALL, rng))
    assert act(net, obs, 0.0, rng) == 1
    net.biases[-1][:] = [0.1, 0.9, 0.3]
    assert act(net, obs, 0.0, rng) == 1
    net.biases[-1][:] = [0.5, 0.5, 0.1]
    assert act(net, obs, 0.0, rng) == 0
    with pytest.raises(InvalidInputError):
        act(net, obs, 1.5, rng)


def test_act_full_exploration_is_uniform(rng):
    spec = NetworkSpec(8, 4, (6, 6, 6), 5, 5)
    net = QNetwork.constant(spec, 0)
    obs = AgentObservation(*obs_for(spec, rng))
    n = 100_000
    counts = np.bincount([act(net, obs, 1.0, rng) for _ in range(n)], minlength=5)
    p = 1 / 5
    sigma = math.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma)


def two_action_net(values):
    spec = NetworkSpec(1, 1, (1, 1, 1), 1, 2)
    net = QNetwork(spec)
    net.biases[-1][:] = values
    return net


def test_ddqn_target_distinguishes_from_dqn():
    online, target = two_action_net([1.0, 2.0]), two_action_net([5.0, 0.0])
    nxt = AgentObservation(np.zeros(1), np.zeros(1))
    assert ddqn_target(1.0, nxt, False, online, target, 0.9) == 1.0
    assert ddqn_target(-10.0, nxt, True, online, target, 0.9) == -10.0
    assert ddqn_target(0.7, nxt, False, online, target, 0.0) == 0.7


def test_sync_target_copy_semantics(rng):
    net = QNetwork.initialize(SMALL, rng)
    target = net.copy()
    net.weights[0] += 1.0
    assert not sync_target(net, target, 1001, 1000)
    assert target.checksum() != net.checksum()
    assert sync_target(net, target, 1000, 1000)
    assert target.checksum() == net.checksum()
    snapshot = net.checksum()
    net.weights[1] += 1.0
    assert not sync_target(net, target, 1500, 1000)
    assert target.checksum() == snapshot


def filled_buffer(spec, rng, n, capacity=None):
    buf = ReplayBuffer(capacity or n, spec.grid_input_dim, spec.fusion_input_dim,
                       spec.output_dim, rng)
    for i in range(n):
        g, f = obs_for(spec, rng)
        buf.push(Transition(g, f, int(rng.integers(spec.output_dim)), float(i), g, f,
                            bool(i % 7 == 0)))
    return buf


def test_train_step_leaves_target_untouched(rng):
    net = QNetwork.initialize(SMALL, rng)
    target = net.copy()
    before = target.checksum()
    buf = filled_buffer(SMALL, rng, 200)
    opt = MomentumSGD(net, lr=1e-3)
    for _ in range(50):
        assert train_step(net, target, buf, 32, 0.9, opt) is not None
    assert target.checksum() == before
    assert net.checksum() != before


def test_train_step_underfull_buffer_skips(rng):
    net = QNetwork.initialize(SMALL, rng)
    buf = filled_buffer(SMALL, rng, 10, capacity=100)
    assert train_step(net, net.copy(), buf, 32, 0.9, MomentumSGD(net)) is None


def test_repeated_update_on_single_transition_decreases_loss(rng):
    net = QNetwork.initialize(SMALL, rng)
    buf = filled_buffer(SMALL, rng, 1)
    target = net.copy()
    opt = MomentumSGD(net, lr=1e-2, momentum=0.0)
    losses = [train_step(net, target, buf, 1, 0.0, opt) for _ in range(20)]
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_replay_uniform_sampling(rng):
    buf = filled_buffer(SMALL, rng, 1000)
    n_draws, batch = 100_000, 32
    counts = np.zeros(1000)
    for _ in range(n_draws):
        b = buf.sample(batch)
        assert len(set(b.index.tolist())) == batch
        np.add.at(counts, b.index, 1)
    p = batch / 1000
    sigma = math.sqrt(n_draws * p * (1 - p))
    assert np.all(np.abs(counts - n_draws * p) <= 4 * sigma)


def test_replay_ring_overwrite(rng):
    buf = filled_buffer(SMALL, rng, 130, capacity=100)
    assert len(buf) == 100
    assert sorted(buf.serial.tolist()) == list(range(30, 130))
    assert sorted(buf.reward.tolist()) == [float(i) for i in range(30, 130)]


def test_epsilon_schedule_endpoint():
    cfg = TrainConfig(epsilon_decay_steps=1000)
    assert cfg.epsilon(0) == 1.0
    assert cfg.epsilon(1000) == 0.05
    assert cfg.epsilon(10**6) == 0.05
    assert cfg.epsilon(500) == pytest.approx(0.525)


def test_persistence_round_trip(tmp_path, rng):
    net = QNetwork.initialize(SMALL, rng)
    path = tmp_path / "m.json"
    net.save(path)
    back = QNetwork.load(path)
    grid, fusion = obs_for(SMALL, rng, 9)
    assert back.forward(grid, fusion).tobytes() == net.forward(grid, fusion).tobytes()
    assert back.checksum() == net.checksum()


def test_load_rejects_bad_models(tmp_path, rng):
    doc = QNetwork.initialize(SMALL, rng).to_dict()
    doc["layers"][0]["weights"] = [[0.0]]
    with pytest.raises(ModelIncompatibleError):
        QNetwork.from_dict(doc)
    doc = QNetwork(SMALL).to_dict()
    doc["format_version"] = 99
    with pytest.raises(ModelIncompatibleError):
        QNetwork.from_dict(doc)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ModelIncompatibleError):
        QNetwork.load(bad)


def test_train_zero_episodes(rng):
    res = train(Simulator(), TrainConfig(episodes=0), seed=1)
    assert res.log == [] and res.steps == 0


def test_train_is_deterministic():
    cfg = TrainConfig(episodes=3, batch_size=8, target_sync_steps=20,
                      hidden_dims=(16, 16, 16), fusion_layer_dim=8)
    a = train(Simulator(), cfg, seed=4)
    b = train(Simulator(), cfg, seed=4)
    assert a.log == b.log
    assert a.net.checksum() == b.net.checksum()
    assert a.steps == sum(r["steps"] for r in a.log)


def test_scripted_models_roll_out():
    sim = Simulator()
    spec = NetworkSpec(sim.parts.grid.size, sim.parts.scales.fusion_dim)
    brake = greedy_policy(QNetwork.constant(spec, Longitudinal.HARD_BRAKE))
    out = rollout(brake, sim, 0, record=True)
    assert out.stopped_before_zone and not out.collision
    assert len(out.rows) == out.steps
    with pytest.raises(InvalidInputError):
        QNetwork.constant(spec, 5)

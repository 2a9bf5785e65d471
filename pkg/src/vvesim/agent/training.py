"""Episode loop for DDQN training and greedy evaluation rollouts."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInputError, SimulationFault
from ..sim.engine import Simulator, metrics_row
from ..sim.safety import Band
from .ddqn import MomentumSGD, act, sync_target, train_step
from .network import NetworkSpec, QNetwork
from .replay import ReplayBuffer, Transition

log = logging.getLogger(__name__)

EPISODE_LOG_FIELDS = ("episode", "total_reward", "mean_step_reward", "steps", "epsilon",
                      "loss_mean", "collisions")


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 50_000
    batch_size: int = 64
    training_frequency: int = 4
    target_sync_steps: int = 1000
    learning_rate: float = 1e-4
    momentum: float = 0.9
    grad_clip: float = 10.0
    buffer_capacity: int = 100_000
    episodes: int = 1500
    hidden_dims: tuple = (128, 128, 128)
    fusion_layer_dim: int = 32

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidInputError("gamma must be in [0, 1)")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise InvalidInputError("epsilon schedule must satisfy 0 <= end <= start <= 1")
        for name in ("epsilon_decay_steps", "batch_size", "training_frequency",
                     "target_sync_steps", "buffer_capacity"):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.episodes < 0:
            raise InvalidInputError("episodes must be >= 0")
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be positive")

    def epsilon(self, step: int) -> float:
        """Linear decay from start to end over ``epsilon_decay_steps``, then flat."""
        if step >= self.epsilon_decay_steps:
            return self.epsilon_end
        frac = step / self.epsilon_decay_steps
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac


def network_spec_for(sim: Simulator, cfg: TrainConfig) -> NetworkSpec:
    return NetworkSpec(sim.parts.grid.size, sim.parts.scales.fusion_dim, cfg.hidden_dims,
                       cfg.fusion_layer_dim, sim.n_actions)


@dataclass
class TrainResult:
    net: QNetwork
    log: list = field(default_factory=list)
    steps: int = 0


def train(sim: Simulator, cfg: TrainConfig, seed: int, on_episode=None) -> TrainResult:
    """Run the full DDQN loop. Episode ``k`` resets the scenario with seed
    ``[seed, k]``; the result is a deterministic function of ``seed``."""
    init_rng, act_rng, buf_rng = (np.random.default_rng(s)
                                  for s in np.random.SeedSequence(seed).spawn(3))
    spec = network_spec_for(sim, cfg)
    net = QNetwork.initialize(spec, init_rng)
    target = net.copy()
    result = TrainResult(net)
    if cfg.episodes == 0:
        return result
    buffer = ReplayBuffer(cfg.buffer_capacity, spec.grid_input_dim, spec.fusion_input_dim,
                          spec.output_dim, buf_rng)
    opt = MomentumSGD(net, cfg.learning_rate, cfg.momentum, cfg.grad_clip)
    step = 0
    for episode in range(cfg.episodes):
        obs = sim.reset([seed, episode])
        total, n, losses, collisions = 0.0, 0, [], 0
        eps = cfg.epsilon(step)
        try:
            while True:
                eps = cfg.epsilon(step)
                a = act(net, obs, eps, act_rng)
                res = sim.step(a)
                info = res.info
                # a timeout truncates the episode but is not a terminal state
                done = info.collision or info.zone_entered or info.stopped or info.end_of_path
                buffer.push(Transition(obs.grid, obs.fusion, a, res.reward,
                                       res.obs.grid, res.obs.fusion, done))
                step += 1
                if step % cfg.training_frequency == 0:
                    loss = train_step(net, target, buffer, cfg.batch_size, cfg.gamma, opt)
                    if loss is not None:
                        losses.append(loss)
                sync_target(net, target, step, cfg.target_sync_steps)
                total += res.reward
                n += 1
                collisions += int(info.collision)
                obs = res.obs
                if res.terminal:
                    break
        except SimulationFault as exc:
            log.warning("episode %d aborted at t=%.3f: %s", episode, exc.time or 0.0, exc)
        row = {
            "episode": episode,
            "total_reward": total,
            "mean_step_reward": total / n if n else 0.0,
            "steps": n,
            "epsilon": eps,
            "loss_mean": float(np.mean(losses)) if losses else float("nan"),
            "collisions": collisions,
        }
        result.log.append(row)
        if on_episode is not None:
            on_episode(row)
    result.steps = step
    return result


@dataclass
class RolloutOutcome:
    seed: object
    steps: int
    total_reward: float
    stopped_before_zone: bool
    collision: bool
    red_steps: int
    min_band: str
    rows: list


_BAND_ORDER = [Band.RED, Band.ORANGE, Band.BLUE, Band.CLEAR]


def rollout(policy, sim: Simulator, seed, record=False) -> RolloutOutcome:
    """Run one episode with ``policy(obs) -> action``."""
    obs = sim.reset(seed)
    rows = []
    total = 0.0
    red = 0
    worst = Band.CLEAR
    n_actors = len(sim.scenario.actors)
    while True:
        a = policy(obs)
        res = sim.step(a)
        total += res.reward
        band = res.metrics.worst_band
        red += band is Band.RED
        if _BAND_ORDER.index(band) < _BAND_ORDER.index(worst):
            worst = band
        if record:
            rows.append(metrics_row(res, sim.ego.x, n_actors))
        obs = res.obs
        if res.terminal:
            break
    info = res.info
    return RolloutOutcome(seed, sim.ego.step_index, total, info.compliant, info.collision,
                          red, worst.value, rows)


def greedy_policy(net: QNetwork):
    return lambda obs: int(np.argmax(net.q_values(obs)))

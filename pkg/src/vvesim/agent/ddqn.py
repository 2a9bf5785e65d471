"""Double DQN: action selection, targets, minibatch update and target sync."""

from __future__ import annotations

import math

import numpy as np

from ..errors import InvalidInputError
from .network import QNetwork
from .replay import ReplayBuffer


def act(net: QNetwork, obs, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy action; greedy ties go to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidInputError("epsilon must be in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(net.spec.output_dim))
    return int(np.argmax(net.q_values(obs)))


def ddqn_targets(reward, next_grid, next_fusion, terminal, online: QNetwork,
                 target: QNetwork, gamma: float) -> np.ndarray:
    """Batched targets: the online net picks the next action, the target net values it."""
    if not 0.0 <= gamma < 1.0:
        raise InvalidInputError("gamma must be in [0, 1)")
    reward = np.asarray(reward, dtype=np.float64)
    terminal = np.asarray(terminal, dtype=bool)
    best = np.argmax(online.forward(next_grid, next_fusion), axis=1)
    q_next = target.forward(next_grid, next_fusion)[np.arange(len(best)), best]
    return np.where(terminal, reward, reward + gamma * q_next)


def ddqn_target(reward: float, next_obs, terminal: bool, online: QNetwork,
                target: QNetwork, gamma: float) -> float:
    return float(ddqn_targets([reward], next_obs.grid, next_obs.fusion, [terminal],
                              online, target, gamma)[0])


class MomentumSGD:
    """Heavy-ball SGD with global gradient-norm clipping."""

    def __init__(self, net: QNetwork, lr: float = 1e-4, momentum: float = 0.9,
                 clip_norm: float = 10.0):
        self.lr = lr
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.velocity = [np.zeros_like(p) for p in net.weights + net.biases]

    def apply(self, net: QNetwork, grads_w, grads_b):
        grads = list(grads_w) + list(grads_b)
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
        scale = self.clip_norm / norm if self.clip_norm and norm > self.clip_norm else 1.0
        for p, v, g in zip(net.weights + net.biases, self.velocity, grads):
            v *= self.momentum
            v += scale * g
            p -= self.lr * v
        return norm


def loss_and_grads(net: QNetwork, grid, fusion, actions, targets):
    """Mean squared TD error and its gradients."""
    q, acts = net.forward(grid, fusion, keep=True)
    rows = np.arange(len(actions))
    err = q[rows, actions] - targets
    d_q = np.zeros_like(q)
    d_q[rows, actions] = 2.0 * err / len(actions)
    gw, gb = net.backward(acts, d_q)
    return float(np.mean(err * err)), gw, gb


def train_step(net: QNetwork, target: QNetwork, buffer: ReplayBuffer, batch_size: int,
               gamma: float, optimizer: MomentumSGD):
    """One minibatch update of ``net``. Returns the pre-update loss, or
    ``None`` when the buffer holds fewer than ``batch_size`` records."""
    batch = buffer.sample(batch_size)
    if batch is None:
        return None
    y = ddqn_targets(batch.reward, batch.next_grid, batch.next_fusion, batch.terminal,
                     net, target, gamma)
    loss, gw, gb = loss_and_grads(net, batch.grid, batch.fusion, batch.action, y)
    optimizer.apply(net, gw, gb)
    return loss


def sync_target(net: QNetwork, target: QNetwork, step: int, n: int) -> bool:
    """Copy the online weights into ``target`` when ``step`` is a multiple of ``n``."""
    if step % n == 0:
        target.load_from(net)
        return True
    return False

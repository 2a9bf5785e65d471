"""Double DQN agent: network, replay memory, update rule and training loop."""

from .ddqn import MomentumSGD, act, ddqn_target, ddqn_targets, sync_target, train_step
from .network import NetworkSpec, QNetwork
from .replay import ReplayBuffer, Transition
from .training import TrainConfig, greedy_policy, rollout, train

__all__ = ["MomentumSGD", "NetworkSpec", "QNetwork", "ReplayBuffer", "TrainConfig",
           "Transition", "act", "ddqn_target", "ddqn_targets", "greedy_policy", "rollout",
           "sync_target", "train", "train_step"]

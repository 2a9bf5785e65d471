"""Fixed-capacity ring buffer of transitions with uniform minibatch sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError


@dataclass
class Transition:
    grid: np.ndarray
    fusion: np.ndarray
    action: int
    reward: float
    next_grid: np.ndarray
    next_fusion: np.ndarray
    terminal: bool


@dataclass
class Batch:
    grid: np.ndarray
    fusion: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_grid: np.ndarray
    next_fusion: np.ndarray
    terminal: np.ndarray
    index: np.ndarray


class ReplayBuffer:
    """Occupancy grids are binary and stored as ``uint8``; everything else
    keeps full precision."""

    def __init__(self, capacity: int, grid_dim: int, fusion_dim: int, n_actions: int,
                 rng: np.random.Generator):
        if capacity <= 0:
            raise InvalidInputError("capacity must be positive")
        self.capacity = capacity
        self.n_actions = n_actions
        self.rng = rng
        self.grid = np.zeros((capacity, grid_dim), dtype=np.uint8)
        self.next_grid = np.zeros((capacity, grid_dim), dtype=np.uint8)
        self.fusion = np.zeros((capacity, fusion_dim))
        self.next_fusion = np.zeros((capacity, fusion_dim))
        self.action = np.zeros(capacity, dtype=np.int64)
        self.reward = np.zeros(capacity)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.serial = np.zeros(capacity, dtype=np.int64)
        self.size = 0
        self.inserted = 0

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition):
        if not 0 <= t.action < self.n_actions:
            raise InvalidInputError(f"action {t.action} outside [0, {self.n_actions})")
        i = self.inserted % self.capacity
        self.grid[i] = t.grid
        self.fusion[i] = t.fusion
        self.action[i] = t.action
        self.reward[i] = t.reward
        self.next_grid[i] = t.next_grid
        self.next_fusion[i] = t.next_fusion
        self.terminal[i] = t.terminal
        self.serial[i] = self.inserted
        self.inserted += 1
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int) -> Batch | None:
        """Uniform minibatch without replacement, or ``None`` while underfull."""
        if self.size < batch_size:
            return None
        idx = self.rng.choice(self.size, batch_size, replace=False)
        return Batch(self.grid[idx].astype(np.float64), self.fusion[idx], self.action[idx],
                     self.reward[idx], self.next_grid[idx].astype(np.float64),
                     self.next_fusion[idx], self.terminal[idx], idx)

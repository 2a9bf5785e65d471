"""Seeded latency, jitter and drop injection evaluated in virtual time."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError


@dataclass(frozen=True)
class LatencyModel:
    base_delay_ms: float = 0.0
    jitter_ms: float = 0.0
    drop_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.base_delay_ms) and self.base_delay_ms >= 0):
            raise InvalidInputError("base_delay_ms must be >= 0")
        if not (math.isfinite(self.jitter_ms) and self.jitter_ms >= 0):
            raise InvalidInputError("jitter_ms must be >= 0")
        if not 0.0 <= self.drop_prob < 1.0:
            raise InvalidInputError("drop_prob must be in [0, 1)")

    @property
    def is_passthrough(self) -> bool:
        return self.base_delay_ms == 0 and self.jitter_ms == 0 and self.drop_prob == 0


class DelayLine:
    """One link direction. Items are released in submission order: a
    message never overtakes the one submitted before it.

    Every submission consumes exactly two draws (drop, jitter) from the
    seeded generator, so the delay sequence does not depend on which
    messages were dropped.
    """

    def __init__(self, model: LatencyModel, stream: int = 0):
        self.model = model
        self.rng = np.random.default_rng([model.seed, stream])
        self.pending = deque()
        self.last_release = 0
        self.dropped = 0
        self.submitted = 0

    def submit(self, item, t_us: int):
        """Schedule ``item`` sent at virtual time ``t_us``; returns the
        release time in microseconds or ``None`` if the item is dropped."""
        self.submitted += 1
        u_drop = self.rng.random()
        u_jitter = self.rng.uniform(-1.0, 1.0)
        if u_drop < self.model.drop_prob:
            self.dropped += 1
            return None
        delay_ms = max(0.0, self.model.base_delay_ms + self.model.jitter_ms * u_jitter)
        release = max(self.last_release, t_us + int(round(delay_ms * 1000.0)))
        self.last_release = release
        self.pending.append((release, item))
        return release

    def pop_ready(self, now_us: int) -> list:
        out = []
        while self.pending and self.pending[0][0] <= now_us:
            out.append(self.pending.popleft()[1])
        return out


def latency_apply(stream, model: LatencyModel, stream_id: int = 0):
    """Apply ``model`` to an iterable of ``(t_us, item)``; yields
    ``(release_us, item)`` for every delivered item in release order."""
    line = DelayLine(model, stream_id)
    for t_us, item in stream:
        release = line.submit(item, t_us)
        if release is not None:
            yield release, line.pending.popleft()[1]

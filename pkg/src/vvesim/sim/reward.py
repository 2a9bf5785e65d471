"""Reference braking profile and per-step reward."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import InvalidInputError


def reference_speed(d_front: float, threatened: bool, past_zone: bool,
                    v_set: float, a_ref: float, stop_margin: float) -> float:
    """Cruise at ``v_set`` unless a pedestrian threatens the zone, then follow
    a constant-deceleration profile reaching zero ``stop_margin`` before it.

    ``d_front`` is the path distance from the ego front to the zone entry.
    """
    if past_zone or not threatened:
        return v_set
    return min(v_set, math.sqrt(2.0 * a_ref * max(d_front - stop_margin, 0.0)))


@dataclass(frozen=True)
class RewardWeights:
    w_v: float = 0.5
    w_j: float = 0.05
    p_collision: float = 10.0
    b_stop: float = 50.0

    def __post_init__(self):
        if not self.p_collision > 2 * self.w_v:
            raise InvalidInputError("collision penalty must exceed twice the tracking weight")


def step_reward(v: float, v_ref: float, v_set: float, action_changed: bool,
                collision: bool, stopped_compliant: bool,
                weights: RewardWeights = RewardWeights()) -> float:
    r = weights.w_v * (1.0 - abs(v - v_ref) / v_set)
    if action_changed:
        r -= weights.w_j
    if collision:
        r -= weights.p_collision
    if stopped_compliant:
        r += weights.b_stop
    return r

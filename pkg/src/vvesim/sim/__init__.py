"""Closed-loop crosswalk scenario: geometry, actors, safety metrics and the engine."""

from .engine import (ActionSet, EgoSide, EngineParts, Longitudinal, ObservationScales,
                     SimConfig, Simulator, StepResult)
from .scenario import ActorWorld, Scenario

__all__ = ["ActionSet", "ActorWorld", "EgoSide", "EngineParts", "Longitudinal",
           "ObservationScales", "Scenario", "SimConfig", "Simulator", "StepResult"]

"""Vehicle dynamics, crosswalk braking simulation, DDQN agent and a networked test harness."""

__version__ = "0.1.0"

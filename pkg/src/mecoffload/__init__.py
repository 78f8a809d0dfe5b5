"""Edge-computing task offloading: simulator, delay estimator, double-DQN agent."""

__version__ = "0.1.0"

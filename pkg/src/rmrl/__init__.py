"""Role-model reinforcement learning on a simulated precise pick-and-place task."""

__version__ = "0.1.0"

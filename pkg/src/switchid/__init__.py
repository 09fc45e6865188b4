"""Data-driven identification and moving-horizon observation of a switched pendulum."""

__version__ = "0.1.0"

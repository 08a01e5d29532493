"""Trajectory and place-recognition evaluation for wheeled robots."""

__version__ = "0.1.0"

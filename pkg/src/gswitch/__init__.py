"""Generalized-switch queueing under MaxWeight: simulation, heavy-traffic limits and LP bounds."""

__version__ = "0.1.0"

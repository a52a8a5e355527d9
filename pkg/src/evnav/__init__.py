"""Seeded software-in-the-loop simulator for event-camera quadrotor navigation."""

__version__ = "0.1.0"

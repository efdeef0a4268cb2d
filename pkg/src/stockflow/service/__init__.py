"""HTTP service exposing the simulator and environments."""

from .app import app

__all__ = ["app"]

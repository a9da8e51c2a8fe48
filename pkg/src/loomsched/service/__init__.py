"""HTTP service wrapping the scheduling library: experiment execution,
simulation, metrics, report rendering, and input generation."""

from loomsched.service.app import create_app

__all__ = ["create_app"]

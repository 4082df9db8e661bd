"""Event-camera frames, a small CNN, and its spiking conversion."""

__version__ = "0.1.0"

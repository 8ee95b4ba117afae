"""Attention-based centralized critics for teams whose agents spawn and die."""

__version__ = "0.1.0"

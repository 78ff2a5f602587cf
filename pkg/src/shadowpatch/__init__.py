"""Shadow-traffic patch generation and regression validation."""

__version__ = "0.1.0"

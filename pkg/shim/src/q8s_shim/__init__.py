"""Container entrypoint that standardizes the simulator-timing stdout line."""

__version__ = "0.1.0"

"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid scenario configuration; message carries the field path."""

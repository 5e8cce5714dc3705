"""Path-signal localization on graphs."""

__version__ = "0.1.0"

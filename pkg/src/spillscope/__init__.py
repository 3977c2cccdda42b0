"""RGB + thermal spill detection pipeline."""

__version__ = "0.1.0"

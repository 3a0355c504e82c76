"""vrsim: semi-asynchronous variance-reduced optimization simulator."""

__version__ = "1.0.0"

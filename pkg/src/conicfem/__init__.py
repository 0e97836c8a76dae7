"""C1 quintic finite elements on piecewise-conic domains."""

__version__ = "0.1.0"

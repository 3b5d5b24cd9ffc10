"""1D scalar conservation-law solving with WENO-5 and learned flux weights."""

__version__ = "0.1.0"

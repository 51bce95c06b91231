"""Physics-guided diffusion macro placement."""

__version__ = "0.1.0"

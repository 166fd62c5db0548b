"""Event-guided diffusion dehazing at desk scale."""

__version__ = "0.1.0"

"""Mesh-free neural-network solver for stationary advection and diffusion PDEs."""

__version__ = "0.1.0"

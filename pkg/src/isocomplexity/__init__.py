"""Annealed complexity of critical points for isotropic-increment Gaussian fields with confinement."""

__version__ = "0.1.0"

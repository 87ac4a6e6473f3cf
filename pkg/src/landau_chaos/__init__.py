"""Particle laboratory for the Landau equation with Maxwellian molecules."""

__version__ = "0.1.0"

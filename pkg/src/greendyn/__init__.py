"""Dynamical Green functions of rational maps of P^1 and P^2 at desk scale."""

__version__ = "0.1.0"

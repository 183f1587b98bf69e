"""Stochastic and deterministic dynamics of a bacterial trait lattice with
competition-induced dormancy and horizontal gene transfer."""

__version__ = "0.1.0"

"""Polyconvex envelopes of isotropic energies and convex neural surrogates."""

__version__ = "0.1.0"

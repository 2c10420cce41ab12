"""Fractional powers of the sub-Laplacian on the Heisenberg group H^n."""

__version__ = "0.1.0"

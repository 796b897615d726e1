"""Integration of local dg manifold charts to local Lie higher groupoids."""

__version__ = "0.1.0"

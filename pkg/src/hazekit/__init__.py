"""Unpaired single-image dehazing with KAN channel mixing and an implicit neural decoder."""

__version__ = "0.1.0"

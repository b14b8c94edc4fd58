"""Nonparametric scene parsing by sampled label transfer with lattice filtering."""

__version__ = "0.1.0"

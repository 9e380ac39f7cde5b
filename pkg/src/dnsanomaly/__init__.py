"""Curated datasets, anomaly models and analyses for DNS censorship
measurement records (Satellite and OONI web-connectivity)."""

__version__ = "0.1.0"

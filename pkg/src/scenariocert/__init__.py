"""Distribution-free feasibility certificates for scenario programs."""

__version__ = "0.1.0"

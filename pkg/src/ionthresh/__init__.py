"""Numerical workbench for ionization thresholds in a reduced QED model."""
__version__ = "0.1.0"

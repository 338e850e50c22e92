"""Simulator for giant-atom waveguide-QED processors."""

__version__ = "0.1.0"

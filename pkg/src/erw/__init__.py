"""Simulation and exact analysis of the elephant random walk and its replica mean-field system."""

__version__ = "0.1.0"

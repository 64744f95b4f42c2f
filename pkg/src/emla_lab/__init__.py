"""Simulation and control workbench for PMSM-driven linear actuators."""

__version__ = "0.1.0"

"""Loan identification, flow networks and synthetic weeks for RTGS settlement logs."""

__version__ = "0.1.0"

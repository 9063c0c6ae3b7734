"""Dose-response analysis of graded severity scores."""

__version__ = "0.1.0"

"""Toolkit for acronym expansion of clinical notes and multi-label coding evaluation."""

__version__ = "0.1.0"

"""Desk-scale speech recognition toolkit for endangered-language documentation."""

__version__ = "0.1.0"

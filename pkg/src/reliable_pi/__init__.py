"""Reliable policy iteration: exact LP form, deep critics, and a benchmark harness."""

__version__ = "0.1.0"

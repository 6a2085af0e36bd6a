"""Deployability of new network architectures among ISPs."""

__version__ = "0.1.0"

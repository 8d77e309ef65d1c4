"""Discrete-event simulator of multi-tenant network slicing on a shared radio grid."""

__version__ = "0.1.0"

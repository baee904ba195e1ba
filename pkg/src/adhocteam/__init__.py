"""Heterogeneous ad hoc teamwork on a symbolic tidying-up simulator."""

__version__ = "0.1.0"

"""Figure rendering for featclash summary CSVs."""

__version__ = "0.1.0"

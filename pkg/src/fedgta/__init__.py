"""Federated graph learning with topology-aware personalized aggregation."""

__version__ = "0.1.0"

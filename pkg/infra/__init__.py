"""Adapters around the numerical core (artifact storage)."""

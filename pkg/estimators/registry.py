from __future__ import annotations

import dataclasses
from typing import Dict, Union

from estimators.base import Estimator


_REGISTRY: Dict[str, Estimator] = {}


def register(name: str):
    """Decorator to register an estimator implementation by name."""
    def _wrap(cls):
        instance = cls()
        instance.name = name
        _REGISTRY[name] = instance
        return cls

    return _wrap


def get_estimator(name: str) -> Estimator:
    if name not in _REGISTRY:
        raise KeyError(f"Estimator '{name}' is not registered")
    return _REGISTRY[name]


def list_estimators() -> list[str]:
    return sorted(_REGISTRY.keys())


def resolve(method: Union[str, Estimator], **options) -> Estimator:
    """Look up ``method`` by name if needed and apply per-run options (e.g. n_dags)."""
    est = get_estimator(method) if isinstance(method, str) else method
    if options:
        est = dataclasses.replace(est, **options)
    return est

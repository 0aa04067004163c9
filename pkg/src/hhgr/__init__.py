"""Hierarchical hypergraph group recommendation (HHGR / S2-HHGR).

Submodules are loaded lazily so the CLI can pin BLAS thread counts from
the environment before numpy gets imported.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = ("autodiff", "augment", "checkpoint", "cli", "config",
               "datasets", "errors", "evaluation", "hypergraph", "model",
               "reports", "seeding", "training")


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))

"""Numerical toolkit for sequential (non-autonomous) dynamical systems.

Modules: phase_maps (maps, sequences, observables), shadowing, conjugacy,
ergodic, entropy, limit_stats, and the experiment runner (config, presets, cli).
"""

__version__ = "0.1.0"

from . import errors  # noqa: F401
from .phase_maps import (  # noqa: F401
    CircleField,
    CircleMap,
    DecayLaw,
    MapSequence,
    Observable,
    TorusField,
    TorusMap,
    cat_map,
    circle_map,
    doubling,
)

__all__ = [
    "CircleField",
    "CircleMap",
    "DecayLaw",
    "MapSequence",
    "Observable",
    "TorusField",
    "TorusMap",
    "cat_map",
    "circle_map",
    "doubling",
    "errors",
]

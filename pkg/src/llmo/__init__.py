"""Desk-scale lab for LLM-driven black-box optimisation and its Markov-chain theory."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .grid import Grid
from .kernels import BACKEND
from .population import (
    ActionVector,
    BestRecord,
    Box,
    MemoryBuffer,
    Population,
    SamplerKind,
    elitist_sample,
    lifo_sample,
    update_best,
    update_memory,
)

__all__ = [
    "ActionVector",
    "BACKEND",
    "BestRecord",
    "Box",
    "Grid",
    "MemoryBuffer",
    "Population",
    "SamplerKind",
    "elitist_sample",
    "lifo_sample",
    "update_best",
    "update_memory",
]

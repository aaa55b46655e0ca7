"""Quantized gossip formation control with log-polar perception contracts."""

from __future__ import annotations

from .geometry import CartVec, FormationState, PolarVec, abs_to_rel, rel_to_abs
from .gossip import GossipGraph
from .kernels import BACKEND
from .quantizer import QuantizerConfig

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CartVec",
    "FormationState",
    "GossipGraph",
    "PolarVec",
    "QuantizerConfig",
    "abs_to_rel",
    "rel_to_abs",
    "__version__",
]

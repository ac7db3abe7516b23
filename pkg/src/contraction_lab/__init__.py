"""Numerical experiments on products of decreasing chains of positive contractions."""

from .errors import ContractionLabError
from .products import ProperMap, trace_convergence
from .seqgen import ContractionChain, generate, verify_chain

__version__ = "0.1.0"

__all__ = [
    "ContractionChain",
    "ContractionLabError",
    "ProperMap",
    "generate",
    "trace_convergence",
    "verify_chain",
]

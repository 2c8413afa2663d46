"""Graph-to-graph transformer toolkit: edge-conditioned self-attention,
autoregressive graph decoding, and a self-contained float64 autodiff engine."""

from .autodiff import Tensor, backward, no_grad, Adam
from .graph import (Graph, EdgeTypeVocab, NodeLabelVocab, GraphPermutation,
                    NO_BOND, VIRTUAL, SELF, MASK_EDGE, NO_EDGE)

__all__ = [
    "Tensor", "backward", "no_grad", "Adam",
    "Graph", "EdgeTypeVocab", "NodeLabelVocab", "GraphPermutation",
    "NO_BOND", "VIRTUAL", "SELF", "MASK_EDGE", "NO_EDGE",
]

__version__ = "0.1.0"

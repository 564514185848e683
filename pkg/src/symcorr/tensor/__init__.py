from . import autodiff, ops
from .autodiff import Gradients, Node, Tape, backward
from .gradcheck import ParameterVector, central_differences, finite_difference_check
from .ops import bilinear_resize, conv2d, matmul, pair_dot, row_softmax, row_unit_normalize

__all__ = [
    "Gradients",
    "Node",
    "ParameterVector",
    "Tape",
    "autodiff",
    "backward",
    "bilinear_resize",
    "central_differences",
    "conv2d",
    "finite_difference_check",
    "matmul",
    "ops",
    "pair_dot",
    "row_softmax",
    "row_unit_normalize",
]

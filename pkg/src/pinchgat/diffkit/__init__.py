"""Minimal differentiable-computation kernel.

Reverse-mode automatic differentiation over float64 numpy arrays, plus the
layer primitives, parameter containers, He initialization, Adam optimizer,
and finite-difference gradient verification used by the models.
"""

from .tensor import (
    Tensor,
    NonFiniteError,
    as_tensor,
    concat,
    stack,
    softmax,
    log2,
)
from .params import ParamSpec, ParamSet, he_init, grad
from .layers import linear, mlp_forward, attention_scores, gat_layer, gat_block_forward
from .optim import AdamState, init_adam, adam_step
from .gradcheck import finite_difference_check, GradCheckResult

__all__ = [
    "Tensor", "NonFiniteError", "as_tensor", "concat", "stack", "softmax",
    "log2", "ParamSpec", "ParamSet", "he_init", "grad", "linear",
    "mlp_forward", "attention_scores", "gat_layer", "gat_block_forward",
    "AdamState", "init_adam", "adam_step", "finite_difference_check",
    "GradCheckResult",
]

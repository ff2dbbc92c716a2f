from .ops import (
    cross_entropy_grad,
    leaky_relu,
    leaky_relu_grad,
    sigmoid,
    softmax,
    softmax_grad_from_output,
)
from .gru import GruParams, bigru_backward, bigru_forward, gru_bidirectional
from .optim import AdamState, adam_step
from .gradcheck import grad_check
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "AdamState",
    "GruParams",
    "adam_step",
    "bigru_backward",
    "bigru_forward",
    "cross_entropy_grad",
    "grad_check",
    "gru_bidirectional",
    "leaky_relu",
    "leaky_relu_grad",
    "load_checkpoint",
    "save_checkpoint",
    "sigmoid",
    "softmax",
    "softmax_grad_from_output",
]

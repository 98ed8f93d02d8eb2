"""Dense float tensors with reverse-mode differentiation."""

from . import ops
from .gradcheck import grad_check, grad_check_report
from .ops import (
    activation,
    conv2d,
    conv2d_transpose,
    depthwise_1x1,
    leaky_relu,
    same_padding,
    sigmoid,
    tanh,
)
from .tensor import DEFAULT_DTYPE, Parameter, Tape, Tensor, as_tensor, record


def backward(tape: Tape, loss: Tensor) -> None:
    """Run ``tape`` backwards from the scalar ``loss``."""
    tape.backward(loss)


__all__ = [
    "DEFAULT_DTYPE",
    "Parameter",
    "Tape",
    "Tensor",
    "activation",
    "as_tensor",
    "backward",
    "conv2d",
    "conv2d_transpose",
    "depthwise_1x1",
    "grad_check",
    "grad_check_report",
    "leaky_relu",
    "ops",
    "record",
    "same_padding",
    "sigmoid",
    "tanh",
]

"""Small dense-tensor engine: reverse-mode autodiff, layer ops, RMSprop, gradient checks."""

from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import finite_diff_check
from .optim import OptimizerState, halving_lr, rmsprop_step
from .tensor import PRECISIONS, Tape, Tensor, no_grad

__all__ = [
    "ops",
    "Tape",
    "Tensor",
    "no_grad",
    "PRECISIONS",
    "OptimizerState",
    "rmsprop_step",
    "halving_lr",
    "finite_diff_check",
    "save_checkpoint",
    "load_checkpoint",
]

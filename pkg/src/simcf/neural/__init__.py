"""Minimal self-contained neural-network core.

Double-precision reverse-mode autodiff over numpy arrays, dense and gated
recurrent layers, Gaussian policy heads, an Adam optimizer and a versioned
checkpoint container. Deliberately small: exactly the operations the
trainer needs, each one finite-difference checked in the test suite.
"""

from simcf.neural.autodiff import (
    Tensor,
    ParameterSet,
    as_tensor,
    clip,
    concat,
    exp,
    gradients,
    log,
    mean,
    minimum,
    no_grad,
    parameter,
    sigmoid,
    tensor_sum,
    tanh,
)
from simcf.neural.nets import (
    Dense,
    GRUCell,
    GaussianRecurrentActor,
    ValueNet,
    gaussian_entropy,
    gaussian_log_prob,
    gaussian_log_prob_np,
)
from simcf.neural.optim import Adam, AdamState, adam_step
from simcf.neural.checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Adam",
    "AdamState",
    "Dense",
    "GRUCell",
    "GaussianRecurrentActor",
    "ParameterSet",
    "Tensor",
    "ValueNet",
    "adam_step",
    "as_tensor",
    "clip",
    "concat",
    "exp",
    "gaussian_entropy",
    "gaussian_log_prob",
    "gaussian_log_prob_np",
    "gradients",
    "load_checkpoint",
    "log",
    "mean",
    "minimum",
    "no_grad",
    "parameter",
    "save_checkpoint",
    "sigmoid",
    "tanh",
    "tensor_sum",
]

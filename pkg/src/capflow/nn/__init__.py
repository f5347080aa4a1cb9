"""Minimal neural-network substrate: autodiff tape, MLPs, Adam, kernels."""

from .adam import Adam
from .kernels import BACKEND
from .mlp import Mlp, ParamStore, glorot_init
from .tensor import Tensor, backward, finite_guard

__all__ = ["Adam", "BACKEND", "Mlp", "ParamStore", "glorot_init",
           "Tensor", "backward", "finite_guard"]

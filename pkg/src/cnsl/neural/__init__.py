"""Minimal differentiable-computation core for the CNSL model."""
from . import tensor
from .checkpoint import CheckpointError, load_params, read_header, save_params
from .layers import (BCE_EPS, LOGVAR_MAX, LOGVAR_MIN, Dense, GraphAggregator, MLP, Module,
                     bce_loss, clamp_logvar, kl_diag_gaussian, mse_loss, normalized_adjacency,
                     reparameterize)
from .optim import Adam
from .tensor import NonFiniteError, Tensor, backward, grad

__all__ = [
    "Adam", "BCE_EPS", "CheckpointError", "Dense", "GraphAggregator", "LOGVAR_MAX", "LOGVAR_MIN",
    "MLP", "Module", "NonFiniteError", "Tensor", "backward", "bce_loss", "clamp_logvar", "grad",
    "kl_diag_gaussian", "load_params", "mse_loss", "normalized_adjacency", "read_header",
    "reparameterize", "save_params", "tensor",
]

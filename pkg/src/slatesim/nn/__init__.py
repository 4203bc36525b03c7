"""Minimal differentiable kernels: layers, attention encoder, losses, Adam, oracles."""

from .params import ParamStore, accumulate_grads
from .layers import (
    affine_map, affine_bwd, gelu, sigmoid, masked_softmax, layernorm,
    dropout, masked_mean, embedding_lookup, embedding_bwd,
)
from .attention import AttentionEncoder, attention_encode
from .mlp import Mlp
from .losses import bce_loss, bce_with_logits, mse_loss, BCE_EPS
from .optim import AdamState, optimizer_step
from .gradcheck import gradient_check, NondeterministicModelError, FD_STEP
from .checkpoint import write_checkpoint, read_checkpoint

__all__ = [
    "ParamStore", "accumulate_grads",
    "affine_map", "affine_bwd", "gelu", "sigmoid", "masked_softmax", "layernorm",
    "dropout", "masked_mean", "embedding_lookup", "embedding_bwd",
    "AttentionEncoder", "attention_encode", "Mlp",
    "bce_loss", "bce_with_logits", "mse_loss", "BCE_EPS",
    "AdamState", "optimizer_step",
    "gradient_check", "NondeterministicModelError", "FD_STEP",
    "write_checkpoint", "read_checkpoint",
]

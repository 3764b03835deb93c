"""Dense-tensor numerical core with reverse-mode gradients."""

from .autodiff import Tensor, backward
from .layers import (
    AttentionParams,
    GruParams,
    attention,
    bigru_encode,
    decoder_step,
    dropout_apply,
    gru_cell,
    masked_cross_entropy,
    output_distribution,
)
from .optim import Parameter, adam_step, rmsprop_step

__all__ = [
    "AttentionParams",
    "GruParams",
    "Parameter",
    "Tensor",
    "adam_step",
    "attention",
    "backward",
    "bigru_encode",
    "decoder_step",
    "dropout_apply",
    "gru_cell",
    "masked_cross_entropy",
    "output_distribution",
    "rmsprop_step",
]

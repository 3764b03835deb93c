"""Model building blocks: GRU cell, bidirectional encoding, additive
attention, output softmax, masked cross-entropy, dropout.

All functions take batched Tensors (leading batch axis) and are
differentiable through autodiff.backward.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .optim import Parameter


@dataclass
class GruParams:
    """Update/reset/candidate gate weights: W_* (in,h), U_* (h,h), b_* (h,)."""

    w_z: Parameter
    u_z: Parameter
    b_z: Parameter
    w_r: Parameter
    u_r: Parameter
    b_r: Parameter
    w_h: Parameter
    u_h: Parameter
    b_h: Parameter

    def params(self) -> list[Parameter]:
        return [
            self.w_z, self.u_z, self.b_z,
            self.w_r, self.u_r, self.b_r,
            self.w_h, self.u_h, self.b_h,
        ]


@dataclass
class AttentionParams:
    """Additive alignment network: w_s (dec_h, align), w_h (2h, align), v (align,)."""

    w_s: Parameter
    w_h: Parameter
    v: Parameter

    def params(self) -> list[Parameter]:
        return [self.w_s, self.w_h, self.v]


def gru_cell(x: Tensor, h_prev: Tensor, p: GruParams) -> Tensor:
    """Standard GRU: z/r gates, candidate state, convex update."""
    z = ad.sigmoid(x @ p.w_z + h_prev @ p.u_z + p.b_z)
    r = ad.sigmoid(x @ p.w_r + h_prev @ p.u_r + p.b_r)
    h_cand = ad.tanh(x @ p.w_h + (r * h_prev) @ p.u_h + p.b_h)
    return (1.0 - z) * h_prev + z * h_cand


def bigru_encode(
    x_steps: Sequence[Tensor], p_fwd: GruParams, p_bwd: GruParams
) -> tuple[Tensor, Tensor, Tensor]:
    """Run forward and backward GRUs over the input steps.

    Returns (H, h_fwd_final, h_bwd_final) where H is (B, T, 2h) with row t
    the concatenation of the forward state after x_1..x_t and the backward
    state after x_T..x_t. Initial states are zero.
    """
    if not x_steps:
        raise ValueError("bigru_encode requires at least one input step")
    batch = x_steps[0].shape[0]
    hidden = p_fwd.b_z.shape[0]
    dtype = x_steps[0].data.dtype

    h = Tensor(np.zeros((batch, hidden), dtype=dtype))
    fwd_states = []
    for x in x_steps:
        h = gru_cell(x, h, p_fwd)
        fwd_states.append(h)

    h = Tensor(np.zeros((batch, hidden), dtype=dtype))
    bwd_states: list[Tensor] = []
    for x in reversed(x_steps):
        h = gru_cell(x, h, p_bwd)
        bwd_states.append(h)
    bwd_states.reverse()

    rows = [ad.concat([f, b], axis=1) for f, b in zip(fwd_states, bwd_states)]
    return ad.stack(rows, axis=1), fwd_states[-1], bwd_states[0]


def attention(
    s_prev: Tensor, h_enc: Tensor, pad_mask: np.ndarray, p: AttentionParams
) -> tuple[Tensor, Tensor]:
    """Additive attention over encoder states.

    Energies e_j = v . tanh(W_s s_prev + W_h h_j); padded positions are
    excluded from the softmax and get weight exactly zero. Returns the
    weight matrix alpha (B, T) and context vectors c (B, 2h).
    """
    batch, t_len, enc_dim = h_enc.shape
    align = p.v.shape[0]
    proj_s = ad.reshape(s_prev @ p.w_s, (batch, 1, align))
    proj_h = ad.reshape(ad.reshape(h_enc, (batch * t_len, enc_dim)) @ p.w_h,
                        (batch, t_len, align))
    u = ad.tanh(proj_s + proj_h)
    energies = ad.reshape(ad.reshape(u, (batch * t_len, align)) @ p.v, (batch, t_len))
    alpha = ad.masked_softmax(energies, pad_mask)
    return alpha, ad.attend(alpha, h_enc)


def decoder_step(y_prev_emb: Tensor, s_prev: Tensor, c: Tensor, p: GruParams) -> Tensor:
    """One decoder GRU step on the concatenated [previous embedding; context]."""
    return gru_cell(ad.concat([y_prev_emb, c], axis=1), s_prev, p)


def output_distribution(s: Tensor, w_out: Parameter, b_out: Parameter) -> Tensor:
    """Dense layer + stable softmax over the label vocabulary."""
    return ad.softmax(s @ w_out + b_out)


def masked_cross_entropy(probs: Tensor, target_ids: np.ndarray, pad_id: int) -> Tensor:
    """Mean of -ln p(target) over non-PAD positions.

    probs is (N, V) with target_ids (N,); PAD positions contribute nothing
    to the loss or its gradient.
    """
    target_ids = np.asarray(target_ids)
    mask = target_ids != pad_id
    count = int(mask.sum())
    if count == 0:
        raise ValueError("masked_cross_entropy: every position is PAD")
    return ad.nll_sum(probs, target_ids, mask) * (1.0 / count)


def dropout_apply(
    x: Tensor, rate: float, training: bool, rng: np.random.Generator
) -> Tensor:
    """Inverted dropout: zero with probability rate, scale survivors; identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return x * keep

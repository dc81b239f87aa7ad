"""Token mixers: causal multi-head self-attention and gated causal depthwise conv.

Both blocks map ``[..., L, D] -> [..., L, D]`` and are strictly causal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .tensor import Tensor

LN_EPS = 1e-5


@dataclass
class AttentionBlockParams:
    ln1_gain: Tensor
    ln1_bias: Tensor
    W_Q: Tensor
    b_Q: Tensor
    W_K: Tensor
    b_K: Tensor
    W_V: Tensor
    b_V: Tensor
    W_O: Tensor
    b_O: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor
    W_1: Tensor  # [D, 4D]
    b_1: Tensor
    W_2: Tensor  # [4D, D]
    b_2: Tensor
    n_heads: int = 1

    @classmethod
    def init(cls, D: int, n_heads: int, rng: np.random.Generator,
             ffn_mult: int = 4, std: float = 0.02) -> "AttentionBlockParams":
        if D < 1 or n_heads < 1 or D % n_heads:
            raise ConfigError(f"embed dim {D} must be a positive multiple of n_heads {n_heads}")
        p = T.parameter
        H = ffn_mult * D

        def w(*shape):
            return p(rng.normal(0, std, shape))

        return cls(
            ln1_gain=p(np.ones(D)), ln1_bias=p(np.zeros(D)),
            W_Q=w(D, D), b_Q=p(np.zeros(D)), W_K=w(D, D), b_K=p(np.zeros(D)),
            W_V=w(D, D), b_V=p(np.zeros(D)), W_O=w(D, D), b_O=p(np.zeros(D)),
            ln2_gain=p(np.ones(D)), ln2_bias=p(np.zeros(D)),
            W_1=w(D, H), b_1=p(np.zeros(H)), W_2=w(H, D), b_2=p(np.zeros(D)),
            n_heads=n_heads,
        )

    def named_parameters(self) -> dict[str, Tensor]:
        return {k: v for k, v in vars(self).items() if isinstance(v, Tensor)}


@dataclass
class GatedConvBlockParams:
    ln_gain: Tensor
    ln_bias: Tensor
    W_in: Tensor     # [D, 2*D_e]: conv branch first, gate branch second
    b_in: Tensor
    kernels: Tensor  # [K, D_e]
    conv_bias: Tensor
    W_o: Tensor      # [D_e, D]
    b_o: Tensor

    @classmethod
    def init(cls, D: int, kernel_size: int, expansion: int, rng: np.random.Generator,
             std: float = 0.02) -> "GatedConvBlockParams":
        if kernel_size < 1:
            raise ConfigError(f"kernel size must be >= 1, got {kernel_size}")
        if expansion < 1 or D < 1:
            raise ConfigError(f"D={D} and D_e={expansion} must be >= 1")
        p = T.parameter
        bound = 1.0 / math.sqrt(kernel_size)
        return cls(
            ln_gain=p(np.ones(D)), ln_bias=p(np.zeros(D)),
            W_in=p(rng.normal(0, std, (D, 2 * expansion))), b_in=p(np.zeros(2 * expansion)),
            kernels=p(rng.uniform(-bound, bound, (kernel_size, expansion))),
            conv_bias=p(np.zeros(expansion)),
            W_o=p(rng.normal(0, std, (expansion, D))), b_o=p(np.zeros(D)),
        )

    @property
    def expansion(self) -> int:
        return self.kernels.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.kernels.shape[0]

    def named_parameters(self) -> dict[str, Tensor]:
        return dict(vars(self))


def causal_mask(L: int) -> np.ndarray:
    return np.tril(np.ones((L, L), dtype=bool))


def padded_causal_mask(valid: np.ndarray) -> np.ndarray:
    """``[B, L]`` validity -> ``[B, L, L]`` visibility.

    Queries see earlier valid keys; every query also sees itself so padded
    rows keep a finite softmax.
    """
    valid = np.asarray(valid, dtype=bool)
    L = valid.shape[-1]
    eye = np.eye(L, dtype=bool)
    return causal_mask(L) & (valid[..., None, :] | eye)


def attention_block(x, params: AttentionBlockParams, mask: np.ndarray | None = None,
                    return_weights: bool = False):
    """Pre-LN block: ``x + Attn(LN(x))`` then ``x + FFN(LN(x))``."""
    x = T.as_tensor(x)
    squeeze = x.ndim == 2
    if squeeze:
        x = x.reshape((1,) + x.shape)
    B, L, D = x.shape
    H = params.n_heads
    if mask is None:
        mask = causal_mask(L)
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 2:
        mask = mask[None, None]
    elif mask.ndim == 3:
        mask = mask[:, None]

    h = T.layer_norm(x, params.ln1_gain, params.ln1_bias, LN_EPS)
    q = T.linear(h, params.W_Q, params.b_Q)
    k = T.linear(h, params.W_K, params.b_K)
    v = T.linear(h, params.W_V, params.b_V)
    captured: list = []
    ctx = T.multihead_attention(q, k, v, H, mask, captured if return_weights else None)
    x = x + T.linear(ctx, params.W_O, params.b_O)

    h2 = T.layer_norm(x, params.ln2_gain, params.ln2_bias, LN_EPS)
    x = x + T.linear(T.relu(T.linear(h2, params.W_1, params.b_1)), params.W_2, params.b_2)
    if squeeze:
        x = x.reshape((L, D))
    return (x, captured[0]) if return_weights else x


def gated_conv_block(x, params: GatedConvBlockParams) -> Tensor:
    """``Y = (DWConv(C) * SiLU(G)) W_o + b_o + x`` with ``[C, G] = LN(x) W_in + b_in``."""
    x = T.as_tensor(x)
    xh = T.layer_norm(x, params.ln_gain, params.ln_bias, LN_EPS)
    De = params.expansion
    # slicing the weights instead of the projected activations is the same
    # math with a cheaper backward
    conv_in = T.linear(xh, params.W_in[:, :De], params.b_in[:De])
    gate_in = T.linear(xh, params.W_in[:, De:], params.b_in[De:])
    hidden = T.causal_depthwise_conv1d(conv_in, params.kernels, params.conv_bias)
    gate = T.silu(gate_in)
    return T.linear(hidden * gate, params.W_o, params.b_o) + x


def stack(blocks: Sequence, x, attn_mask: np.ndarray | None = None,
          token_mask: np.ndarray | None = None) -> Tensor:
    """Apply ``blocks`` in order.

    ``attn_mask`` is passed to attention blocks. ``token_mask`` (``[..., L]``,
    True = real token) zeroes padded positions after every conv block so
    that padding behaves like the conv's own causal zero padding.
    """
    x = T.as_tensor(x)
    kinds = {type(b) for b in blocks}
    if len(kinds) > 1:
        raise ConfigError(f"mixed block kinds in one stack: {sorted(k.__name__ for k in kinds)}")
    keep = None
    if token_mask is not None:
        keep = T.as_tensor(np.asarray(token_mask, dtype=np.float64)[..., None])
    for block in blocks:
        if isinstance(block, AttentionBlockParams):
            x = attention_block(x, block, attn_mask)
        elif isinstance(block, GatedConvBlockParams):
            x = gated_conv_block(x, block)
            if keep is not None:
                x = x * keep
        else:
            raise ConfigError(f"unknown block type {type(block).__name__}")
    return x

"""Turn (return-to-go, state, action, timestep) windows into token sequences.

Two encoders:

* unified: one token per timestep,
  ``LN(fuse([sigmoid(R W_R + b_R); s_t; a_{t-1}]) + E_T[t])``
* separated: three tokens per timestep in the order R_t, s_t, a_t, each an
  independent linear embedding plus the timestep embedding, followed by
  a shared LayerNorm.

Inputs may carry leading batch dimensions; the time axis is always the
second-to-last one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .tensor import Tensor

LN_EPS = 1e-5


@dataclass
class TokenSequence:
    tokens: Tensor               # [..., L', D]
    action_positions: np.ndarray  # indices along L' where the action head reads

    def __len__(self) -> int:
        return self.tokens.shape[-2]


@dataclass
class UnifiedEncoderParams:
    W_R: Tensor  # [1, d_R]
    b_R: Tensor  # [d_R]
    W_F: Tensor  # [d_R + d_s + d_a, D]
    b_F: Tensor  # [D]
    E_T: Tensor  # [T_max, D]
    ln_gain: Tensor
    ln_bias: Tensor

    @classmethod
    def init(cls, d_R: int, d_s: int, d_a: int, D: int, T_max: int,
             rng: np.random.Generator, std: float = 0.02) -> "UnifiedEncoderParams":
        for name, v in (("d_R", d_R), ("d_s", d_s), ("d_a", d_a), ("D", D), ("T_max", T_max)):
            if v < 1:
                raise ConfigError(f"{name} must be >= 1, got {v}")
        p = T.parameter
        return cls(
            W_R=p(rng.normal(0, std, (1, d_R))), b_R=p(np.zeros(d_R)),
            W_F=p(rng.normal(0, std, (d_R + d_s + d_a, D))), b_F=p(np.zeros(D)),
            E_T=p(rng.normal(0, std, (T_max, D))),
            ln_gain=p(np.ones(D)), ln_bias=p(np.zeros(D)),
        )

    @property
    def T_max(self) -> int:
        return self.E_T.shape[0]

    def named_parameters(self) -> dict[str, Tensor]:
        return dict(vars(self))


@dataclass
class SeparatedEncoderParams:
    W_R: Tensor  # [1, D]
    b_R: Tensor
    W_s: Tensor  # [d_s, D]
    b_s: Tensor
    W_a: Tensor  # [d_a, D]
    b_a: Tensor
    E_T: Tensor  # [T_max, D]
    ln_gain: Tensor
    ln_bias: Tensor

    @classmethod
    def init(cls, d_s: int, d_a: int, D: int, T_max: int,
             rng: np.random.Generator, std: float = 0.02) -> "SeparatedEncoderParams":
        for name, v in (("d_s", d_s), ("d_a", d_a), ("D", D), ("T_max", T_max)):
            if v < 1:
                raise ConfigError(f"{name} must be >= 1, got {v}")
        p = T.parameter
        return cls(
            W_R=p(rng.normal(0, std, (1, D))), b_R=p(np.zeros(D)),
            W_s=p(rng.normal(0, std, (d_s, D))), b_s=p(np.zeros(D)),
            W_a=p(rng.normal(0, std, (d_a, D))), b_a=p(np.zeros(D)),
            E_T=p(rng.normal(0, std, (T_max, D))),
            ln_gain=p(np.ones(D)), ln_bias=p(np.zeros(D)),
        )

    @property
    def T_max(self) -> int:
        return self.E_T.shape[0]

    def named_parameters(self) -> dict[str, Tensor]:
        return dict(vars(self))


def shift_actions(actions) -> Tensor:
    """Delay actions by one step along time; the first row becomes zero."""
    actions = T.as_tensor(actions)
    if actions.ndim < 2 or actions.shape[-2] < 1:
        raise DimensionError(f"shift_actions expects [..., L>=1, d_a], got {actions.shape}")
    zero = T.as_tensor(np.zeros(actions.shape[:-2] + (1, actions.shape[-1])))
    return T.concat([zero, actions[..., :-1, :]], axis=-2)


def gated_return_embedding(rtg, W_R, b_R) -> Tensor:
    return T.sigmoid(T.linear(rtg, W_R, b_R))


def _check_inputs(rtg: Tensor, states: Tensor, actions: Tensor, timesteps: np.ndarray, T_max: int):
    L = rtg.shape[-2]
    if rtg.shape[-1] != 1:
        raise DimensionError(f"rtg must be [..., L, 1], got {rtg.shape}")
    if states.shape[:-1] != rtg.shape[:-1] or actions.shape[:-1] != rtg.shape[:-1]:
        raise DimensionError(
            f"rtg {rtg.shape}, states {states.shape}, actions {actions.shape} disagree on [..., L]")
    if timesteps.shape != rtg.shape[:-1]:
        raise DimensionError(f"timesteps {timesteps.shape} must have shape {rtg.shape[:-1]}")
    if timesteps.size and (timesteps.min() < 0 or timesteps.max() >= T_max):
        raise ConfigError(
            f"timestep out of range [0, {T_max}): min {timesteps.min()}, max {timesteps.max()}")
    return L


def encode_unified(rtg, states, actions, timesteps, params: UnifiedEncoderParams) -> TokenSequence:
    rtg, states, actions = T.as_tensor(rtg), T.as_tensor(states), T.as_tensor(actions)
    timesteps = np.asarray(timesteps, dtype=np.intp)
    L = _check_inputs(rtg, states, actions, timesteps, params.T_max)
    e_r = gated_return_embedding(rtg, params.W_R, params.b_R)
    x = T.concat([e_r, states, shift_actions(actions)], axis=-1)
    if x.shape[-1] != params.W_F.shape[0]:
        raise DimensionError(
            f"fusion input width {x.shape[-1]} != W_F rows {params.W_F.shape[0]}")
    z = T.linear(x, params.W_F, params.b_F)
    h = z + T.take(params.E_T, timesteps, axis=0)
    tokens = T.layer_norm(h, params.ln_gain, params.ln_bias, LN_EPS)
    return TokenSequence(tokens, np.arange(L))


def separated_action_positions(L: int) -> np.ndarray:
    """State-token slots in the R, s, a interleave."""
    return 3 * np.arange(L) + 1


def encode_separated(rtg, states, actions, timesteps, params: SeparatedEncoderParams) -> TokenSequence:
    rtg, states, actions = T.as_tensor(rtg), T.as_tensor(states), T.as_tensor(actions)
    timesteps = np.asarray(timesteps, dtype=np.intp)
    L = _check_inputs(rtg, states, actions, timesteps, params.T_max)
    e_t = T.take(params.E_T, timesteps, axis=0)
    r_tok = T.linear(rtg, params.W_R, params.b_R) + e_t
    s_tok = T.linear(states, params.W_s, params.b_s) + e_t
    a_tok = T.linear(actions, params.W_a, params.b_a) + e_t
    stacked = T.stack([r_tok, s_tok, a_tok], axis=-2)  # [..., L, 3, D]
    D = stacked.shape[-1]
    seq = stacked.reshape(stacked.shape[:-3] + (3 * L, D))
    tokens = T.layer_norm(seq, params.ln_gain, params.ln_bias, LN_EPS)
    return TokenSequence(tokens, separated_action_positions(L))

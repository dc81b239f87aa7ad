"""Policy models: tokenizer + mixer stack + action head.

Three kinds share one class:

========  ==================  ====================
kind      tokenizer           mixer
========  ==================  ====================
``dt``    separated (3L)      causal self-attention
``udt``   unified (L)         causal self-attention
``udc``   unified (L)         gated causal depthwise conv
========  ==================  ====================
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping

import numpy as np

from . import checkpoint
from . import tensor as T
from .errors import ConfigError, UsageError
from .mixers import (AttentionBlockParams, GatedConvBlockParams, padded_causal_mask, stack)
from .tensor import Tensor
from .tokenization import (LN_EPS, SeparatedEncoderParams, UnifiedEncoderParams,
                           encode_separated, encode_unified)

KINDS = ("dt", "udt", "udc")
# checkpoint entries under these prefixes are not trainable parameters
NON_TRAINABLE_PREFIXES = ("norm.", "adam.", "train.")


@dataclass
class ModelConfig:
    kind: str = "udc"
    state_dim: int = 1
    act_dim: int = 1
    discrete: bool = False
    context_len: int = 16
    embed_dim: int = 64
    depth: int = 3
    n_heads: int = 4
    kernel_size: int = 4
    expansion: int = 0      # D_e; 0 means 2 * embed_dim
    d_R: int = 32
    max_timestep: int = 64  # T_max, size of the timestep table
    rtg_scale: float = 1.0

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.expansion == 0:
            self.expansion = 2 * self.embed_dim
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"model kind must be one of {KINDS}, got {self.kind!r}")
        for name in ("state_dim", "act_dim", "context_len", "embed_dim", "d_R",
                     "max_timestep", "kernel_size", "expansion", "n_heads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.depth < 0:
            raise ConfigError(f"depth must be >= 0, got {self.depth}")
        if self.kind in ("dt", "udt") and self.embed_dim % self.n_heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by n_heads {self.n_heads}")
        if not self.rtg_scale > 0:
            raise ConfigError(f"rtg_scale must be positive, got {self.rtg_scale}")

    @property
    def unified(self) -> bool:
        return self.kind != "dt"

    @property
    def effective_len(self) -> int:
        """Number of tokens the mixer sees for a full context window."""
        return self.context_len if self.unified else 3 * self.context_len

    @property
    def out_dim(self) -> int:
        return self.act_dim

    def to_header(self) -> dict[str, str]:
        return {f"model.{k}": str(v) for k, v in asdict(self).items()}

    @classmethod
    def from_header(cls, header: Mapping[str, str]) -> "ModelConfig":
        kwargs = {}
        for f in fields(cls):
            key = f"model.{f.name}"
            if key not in header:
                continue
            raw = header[key]
            if f.type in ("bool", bool):
                kwargs[f.name] = raw == "True"
            elif f.type in ("int", int):
                kwargs[f.name] = int(raw)
            elif f.type in ("float", float):
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = raw
        return cls(**kwargs)


@dataclass
class Normalizer:
    """Fixed per-dimension affine maps applied at the model boundary."""

    state_mean: np.ndarray
    state_std: np.ndarray
    action_mean: np.ndarray
    action_std: np.ndarray

    @classmethod
    def identity(cls, d_s: int, d_a: int) -> "Normalizer":
        return cls(np.zeros(d_s), np.ones(d_s), np.zeros(d_a), np.ones(d_a))

    def entries(self) -> dict[str, np.ndarray]:
        return {f"norm.{k}": np.asarray(v, dtype=np.float64) for k, v in asdict(self).items()}


@dataclass
class PolicyModel:
    config: ModelConfig
    tokenizer: UnifiedEncoderParams | SeparatedEncoderParams
    blocks: list
    lnf_gain: Tensor
    lnf_bias: Tensor
    head_W: Tensor
    head_b: Tensor
    normalizer: Normalizer = field(default=None)

    def __post_init__(self):
        if self.normalizer is None:
            self.normalizer = Normalizer.identity(self.config.state_dim, self.config.act_dim)

    # -- construction ------------------------------------------------------
    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0, std: float = 0.02) -> "PolicyModel":
        rng = np.random.default_rng(seed)
        c = config
        if c.unified:
            tok = UnifiedEncoderParams.init(c.d_R, c.state_dim, c.act_dim, c.embed_dim,
                                            c.max_timestep, rng, std)
        else:
            tok = SeparatedEncoderParams.init(c.state_dim, c.act_dim, c.embed_dim,
                                              c.max_timestep, rng, std)
        if c.kind == "udc":
            blocks = [GatedConvBlockParams.init(c.embed_dim, c.kernel_size, c.expansion, rng, std)
                      for _ in range(c.depth)]
        else:
            blocks = [AttentionBlockParams.init(c.embed_dim, c.n_heads, rng, std=std)
                      for _ in range(c.depth)]
        p = T.parameter
        return cls(
            config=c, tokenizer=tok, blocks=blocks,
            lnf_gain=p(np.ones(c.embed_dim)), lnf_bias=p(np.zeros(c.embed_dim)),
            head_W=p(rng.normal(0, std, (c.embed_dim, c.out_dim))), head_b=p(np.zeros(c.out_dim)),
        )

    def named_parameters(self) -> dict[str, Tensor]:
        out = {f"tok.{k}": v for k, v in self.tokenizer.named_parameters().items()}
        for i, block in enumerate(self.blocks):
            out.update({f"blocks.{i}.{k}": v for k, v in block.named_parameters().items()})
        out["lnf.gain"] = self.lnf_gain
        out["lnf.bias"] = self.lnf_bias
        out["head.W"] = self.head_W
        out["head.b"] = self.head_b
        for name, t in out.items():
            t.name = name
        return out

    def num_parameters(self) -> int:
        return sum(t.size for t in self.named_parameters().values())

    # -- forward -----------------------------------------------------------
    def forward(self, rtg, states, actions, timesteps, mask=None) -> Tensor:
        """Predict actions (or logits) for every position of the window.

        Accepts ``[L, ...]`` or batched ``[B, L, ...]`` inputs; ``mask``
        marks real (non-padded) steps. Position ``t`` only sees steps
        ``<= t`` and the action at ``t`` is never an input to its own
        prediction.
        """
        c = self.config
        rtg = np.asarray(rtg, dtype=np.float64)
        squeeze = rtg.ndim == 2
        if squeeze:
            rtg, states, actions = rtg[None], np.asarray(states)[None], np.asarray(actions)[None]
            timesteps = np.asarray(timesteps)[None]
            mask = None if mask is None else np.asarray(mask)[None]
        B, L = rtg.shape[:2]
        if L > c.context_len:
            raise UsageError(f"window length {L} exceeds context_len {c.context_len}")
        valid = np.ones((B, L), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)

        rtg_in = rtg / c.rtg_scale
        if mask is not None:
            # padded slots must look like "before the episode": the shifted
            # action of the first real step would otherwise carry padding
            keep = valid[..., None]
            rtg_in = np.where(keep, rtg_in, 0.0)
            states = np.where(keep, states, 0.0)
            actions = np.where(keep, actions, 0.0)
        if c.unified:
            seq = encode_unified(rtg_in, states, actions, timesteps, self.tokenizer)
            token_valid = valid
        else:
            seq = encode_separated(rtg_in, states, actions, timesteps, self.tokenizer)
            token_valid = np.repeat(valid, 3, axis=1)

        x = seq.tokens
        if c.kind == "udc":
            x = stack(self.blocks, x * token_valid[..., None].astype(np.float64),
                      token_mask=token_valid)
        else:
            x = stack(self.blocks, x, attn_mask=padded_causal_mask(token_valid))
        if not c.unified:
            x = T.take(x, seq.action_positions, axis=1)
        x = T.layer_norm(x, self.lnf_gain, self.lnf_bias, LN_EPS)
        out = T.linear(x, self.head_W, self.head_b)
        return out.reshape(out.shape[1:]) if squeeze else out

    __call__ = forward

    def act(self, rtg, states, actions, timesteps) -> np.ndarray:
        """Action for the newest step of a raw (unnormalized) history.

        ``actions[-1]`` is a placeholder for the action being chosen. The
        last ``context_len`` steps are left-padded to a full window.
        """
        c, n = self.config, self.normalizer
        L = c.context_len
        rtg = np.asarray(rtg, dtype=np.float64).reshape(-1, 1)[-L:]
        states = ((np.asarray(states, dtype=np.float64) - n.state_mean) / n.state_std)[-L:]
        actions = np.asarray(actions, dtype=np.float64)
        if not c.discrete:
            actions = (actions - n.action_mean) / n.action_std
        actions = actions[-L:]
        timesteps = np.asarray(timesteps, dtype=np.intp)[-L:]
        k = rtg.shape[0]
        pad = L - k
        mask = np.r_[np.zeros(pad, bool), np.ones(k, bool)]
        rtg = np.vstack([np.zeros((pad, 1)), rtg])
        states = np.vstack([np.zeros((pad, c.state_dim)), states])
        actions = np.vstack([np.zeros((pad, c.act_dim)), actions])
        timesteps = np.r_[np.zeros(pad, np.intp), timesteps]
        with T.no_grad():
            out = self.forward(rtg, states, actions, timesteps, mask).data[-1]
        if c.discrete:
            a = np.zeros(c.act_dim)
            a[int(np.argmax(out))] = 1.0
            return a
        return out * n.action_std + n.action_mean

    # -- persistence -------------------------------------------------------
    def state_entries(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.named_parameters().items()}

    def save(self, path, extra_entries: Mapping[str, np.ndarray] | None = None,
             extra_header: Mapping[str, str] | None = None) -> None:
        entries = dict(self.state_entries())
        entries.update(self.normalizer.entries())
        if extra_entries:
            entries.update(extra_entries)
        header = dict(self.config.to_header())
        if extra_header:
            header.update(extra_header)
        checkpoint.save(path, entries, checkpoint.format_header(header))

    @classmethod
    def load(cls, path) -> tuple["PolicyModel", dict[str, np.ndarray], dict[str, str]]:
        """Return the model plus the checkpoint's extra entries and header."""
        entries, text = checkpoint.load(path)
        header = checkpoint.parse_header(text)
        model = cls.from_entries(ModelConfig.from_header(header), entries)
        extra = {k: v for k, v in entries.items() if k.startswith(("adam.", "train."))}
        return model, extra, header

    @classmethod
    def from_entries(cls, config: ModelConfig, entries: Mapping[str, np.ndarray]) -> "PolicyModel":
        model = cls.init(config)
        for name, t in model.named_parameters().items():
            if name not in entries:
                raise UsageError(f"checkpoint is missing parameter {name!r}")
            if entries[name].shape != t.shape:
                raise UsageError(f"parameter {name!r}: checkpoint shape {entries[name].shape}, "
                                 f"model shape {t.shape}")
            t.data[...] = entries[name]
        if "norm.state_mean" in entries:
            model.normalizer = Normalizer(*(entries[f"norm.{k}"] for k in
                                            ("state_mean", "state_std", "action_mean", "action_std")))
        return model


def loss(predictions: Tensor, targets, mask=None, discrete: bool = False) -> Tensor:
    """Masked action loss: MSE (continuous) or cross-entropy (discrete).

    ``targets`` has the prediction's shape; for discrete actions it is a
    one-hot encoding of the taken action.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if mask is None:
        mask = np.ones(predictions.shape[:-1], dtype=bool)
    w = np.asarray(mask, dtype=np.float64)[..., None]
    n_valid = float(w.sum())
    if n_valid == 0:
        raise UsageError("loss: every step in the batch is masked out")
    if discrete:
        logp = T.log_softmax(predictions, axis=-1)
        return -(logp * (targets * w)).sum() * (1.0 / n_valid)
    diff = predictions - targets
    return (diff * diff * w).sum() * (1.0 / (n_valid * predictions.shape[-1]))


def config_json(config: ModelConfig) -> str:
    return json.dumps(asdict(config), sort_keys=True)


def load_model(path) -> PolicyModel:
    return PolicyModel.load(Path(path))[0]

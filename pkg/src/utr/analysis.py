"""Analytic FLOP and parameter counts plus a CPU training-time harness.

FLOP convention
---------------
One multiply-add is 2 FLOPs, so ``[m, k] @ [k, n]`` costs ``2mkn``.
Bias adds, residual adds, scaling, masking, ReLU and gating products cost
1 per element. ``exp``-based ops (softmax, sigmoid) cost 4 per element and
SiLU costs 5 (sigmoid plus the product). LayerNorm costs 8 per element.
Gathers, reshapes and padding masks are free. Counts are per forward pass
over a batch of ``B`` full-length windows.
"""
from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .models import KINDS, NON_TRAINABLE_PREFIXES, ModelConfig, PolicyModel

MATMUL = 2
EXP = 4
SILU = 5
LN = 8


# -- FLOPs --------------------------------------------------------------------------
def tokenizer_flops(c: ModelConfig, L: int) -> int:
    """Embedding cost for ``L`` timesteps (3L tokens when separated)."""
    D = c.embed_dim
    if c.unified:
        in_F = c.d_R + c.state_dim + c.act_dim
        gate = L * (MATMUL * c.d_R + c.d_R + EXP * c.d_R)       # sigma(Linear_R(R))
        fuse = L * (MATMUL * in_F * D + D)                       # Linear_F
        return gate + fuse + L * D + LN * L * D                  # + E_T, LayerNorm
    proj = L * ((MATMUL * 1 * D + D) + (MATMUL * c.state_dim * D + D) + (MATMUL * c.act_dim * D + D))
    return proj + 3 * L * D + LN * 3 * L * D


def attention_score_flops(c: ModelConfig, Lp: int) -> int:
    """Terms quadratic in the token count ``Lp`` for one attention block."""
    D, H = c.embed_dim, c.n_heads
    return 2 * MATMUL * Lp * Lp * D + (1 + 1 + EXP) * H * Lp * Lp  # QK^T, PV; scale, mask, softmax


def attention_block_flops(c: ModelConfig, Lp: int) -> int:
    D = c.embed_dim
    F = 4 * D
    proj = 4 * (MATMUL * Lp * D * D + Lp * D)                    # Q, K, V, O
    ffn = MATMUL * Lp * D * F + Lp * F + Lp * F + MATMUL * Lp * F * D + Lp * D
    return 2 * LN * Lp * D + proj + attention_score_flops(c, Lp) + ffn + 2 * Lp * D


def conv_block_flops(c: ModelConfig, L: int) -> int:
    D, De, K = c.embed_dim, c.expansion, c.kernel_size
    w_in = MATMUL * L * D * 2 * De + 2 * L * De
    conv = MATMUL * L * K * De + L * De
    gate = SILU * L * De + L * De
    w_o = MATMUL * L * De * D + L * D
    return LN * L * D + w_in + conv + gate + w_o + L * D


def block_flops(c: ModelConfig, L_effective: int) -> int:
    if c.kind == "udc":
        return conv_block_flops(c, L_effective)
    return attention_block_flops(c, L_effective)


def head_flops(c: ModelConfig, L: int) -> int:
    D, n = c.embed_dim, c.out_dim
    return LN * L * D + MATMUL * L * D * n + L * n


def count_flops(c: ModelConfig, L_effective: int | None = None, batch: int = 1) -> int:
    """Forward FLOPs for ``batch`` windows; ``L_effective`` is the mixer's token count."""
    Lp = c.effective_len if L_effective is None else L_effective
    if Lp < 1:
        raise ConfigError(f"effective length must be >= 1, got {Lp}")
    L = Lp if c.unified else -(-Lp // 3)
    total = tokenizer_flops(c, L) + c.depth * block_flops(c, Lp) + head_flops(c, L)
    return batch * total


def flops_breakdown(c: ModelConfig, batch: int = 1) -> dict[str, int]:
    Lp, L = c.effective_len, c.context_len
    return {"tokenizer": batch * tokenizer_flops(c, L),
            "blocks": batch * c.depth * block_flops(c, Lp),
            "head": batch * head_flops(c, L)}


# -- parameters ---------------------------------------------------------------------
def param_count_formula(c: ModelConfig) -> int:
    D, De, K, T = c.embed_dim, c.expansion, c.kernel_size, c.max_timestep
    if c.unified:
        tok = 2 * c.d_R + (c.d_R + c.state_dim + c.act_dim) * D + D + T * D + 2 * D
    else:
        tok = (1 + c.state_dim + c.act_dim) * D + 3 * D + T * D + 2 * D
    if c.kind == "udc":
        block = 2 * D + D * 2 * De + 2 * De + K * De + De + De * D + D
    else:
        block = 12 * D * D + 13 * D
    return tok + c.depth * block + 2 * D + D * c.out_dim + c.out_dim


def count_params(obj) -> int:
    """Trainable scalar count of a model, a config or a name -> array mapping.

    Mapping entries whose names start with a non-trainable prefix
    (normalizer, optimizer, training state) are skipped.
    """
    if isinstance(obj, ModelConfig):
        return param_count_formula(obj)
    if isinstance(obj, PolicyModel):
        return obj.num_parameters()
    if isinstance(obj, Mapping):
        return int(sum(np.asarray(getattr(v, "data", v)).size for k, v in obj.items()
                       if not str(k).startswith(NON_TRAINABLE_PREFIXES)))
    raise TypeError(f"cannot count parameters of {type(obj).__name__}")


# -- timing -------------------------------------------------------------------------
def _bench_batch(c: ModelConfig, B: int, rng: np.random.Generator):
    from .training import Batch

    L = c.context_len
    if c.discrete:
        actions = np.eye(c.act_dim)[rng.integers(c.act_dim, size=(B, L))]
    else:
        actions = rng.normal(size=(B, L, c.act_dim))
    return Batch(rng.uniform(0, 1, (B, L, 1)), rng.normal(size=(B, L, c.state_dim)), actions,
                 np.tile(np.arange(L), (B, 1)), np.ones((B, L), dtype=bool))


def bench_time(configs: Mapping[str, ModelConfig], steps: int = 500, batch: int = 64,
               repeats: int = 3, warmup: int = 10, seed: int = 0) -> dict[str, dict]:
    """Median wall-clock seconds for ``steps`` training steps per config.

    Runs are interleaved across configs (A B C A B C ...) so slow drift on a
    shared machine hits every kind equally. Warmup steps are not timed.
    """
    from .optim import AdamState
    from .training import train_step

    if warmup < 10:
        raise ConfigError("timing needs at least 10 warmup steps")
    rng = np.random.default_rng(seed)
    setups = {}
    for name, c in configs.items():
        model = PolicyModel.init(c, seed)
        state = AdamState()
        b = _bench_batch(c, batch, rng)
        for _ in range(warmup):
            train_step(model, b, state, 1e-4, 0.25)
        setups[name] = (model, state, b)
    runs = {name: [] for name in configs}
    for _ in range(repeats):
        for name, (model, state, b) in setups.items():
            t0 = time.perf_counter()
            for _ in range(steps):
                train_step(model, b, state, 1e-4, 0.25)
            runs[name].append(time.perf_counter() - t0)
    return {name: {"median_s": statistics.median(r), "runs_s": r} for name, r in runs.items()}


# -- reports ------------------------------------------------------------------------
def reduction_pct(base: float, new: float) -> float:
    return round((base - new) / base * 100.0, 2) if base else 0.0


def default_configs(L: int = 16, D: int = 64, depth: int = 3, kinds: Sequence[str] = KINDS,
                    **overrides) -> dict[str, ModelConfig]:
    base = dict(state_dim=overrides.pop("state_dim", 8), act_dim=overrides.pop("act_dim", 2),
                context_len=L, embed_dim=D, depth=depth, max_timestep=max(64, L), **overrides)
    for k in kinds:
        if k not in KINDS:
            raise ConfigError(f"unknown model kind {k!r}; choose from {KINDS}")
    return {k: ModelConfig(kind=k, **base) for k in kinds}


@dataclass
class ComplexityReport:
    kinds: list[str]
    flops: dict[str, int]
    params: dict[str, int]
    time_s: dict[str, float]
    steps: int
    batch: int

    def table(self) -> list[list]:
        """Rows (time, FLOPs, params); DT is the baseline for every delta."""
        header = ["metric"]
        for k in self.kinds:
            header.append(k.upper())
            if k != "dt" and "dt" in self.kinds:
                header.append(f"delta_{k}_pct")
        rows = [header]
        for metric, values in (("time_s", self.time_s), ("flops", self.flops), ("params", self.params)):
            row = [metric]
            for k in self.kinds:
                row.append(values[k])
                if k != "dt" and "dt" in self.kinds:
                    row.append(reduction_pct(values["dt"], values[k]))
            rows.append(row)
        return rows

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            for row in self.table():
                w.writerow([f"{v:.6f}" if isinstance(v, float) and not float(v).is_integer() else v
                            for v in row])


def complexity_report(configs: Mapping[str, ModelConfig], batch: int = 64, steps: int = 500,
                      repeats: int = 3, seed: int = 0) -> ComplexityReport:
    kinds = list(configs)
    flops = {k: count_flops(c, batch=batch) for k, c in configs.items()}
    params = {k: count_params(c) for k, c in configs.items()}
    if steps > 0:
        timing = bench_time(configs, steps, batch, repeats, seed=seed)
        times = {k: round(v["median_s"], 6) for k, v in timing.items()}
    else:
        times = {k: 0.0 for k in kinds}
    return ComplexityReport(kinds, flops, params, times, steps, batch)


def with_depth(c: ModelConfig, depth: int) -> ModelConfig:
    return replace(c, depth=depth)

"""Offline training: window sampling, optimization loop, checkpoints, metrics."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import Dataset, normalize
from .errors import ConfigError, NonFiniteLossError
from .models import ModelConfig, Normalizer, PolicyModel, loss
from .optim import AdamState, adam_step, clip_grad_norm, warmup_lr

log = logging.getLogger(__name__)

METRIC_FIELDS = ("step", "loss", "grad_norm", "lr", "wall_ms")


@dataclass
class TrainConfig:
    batch_size: int = 64
    steps: int = 2000
    lr: float = 1e-4
    warmup_steps: int = 100
    grad_clip: float = 0.25
    context_len: int = 16
    seed: int = 0
    eval_interval: int = 0  # checkpoint every N steps; 0 = only at the end
    record_time: bool = True

    def validate(self, T_max: int | None = None) -> None:
        for name in ("batch_size", "context_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("steps", "warmup_steps", "eval_interval"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.lr < 0 or self.grad_clip < 0:
            raise ConfigError("lr and grad_clip must be non-negative")
        if T_max is not None and self.context_len > T_max:
            raise ConfigError(f"context_len {self.context_len} exceeds dataset T_max {T_max}")


@dataclass
class Batch:
    rtg: np.ndarray        # [B, L, 1]
    states: np.ndarray     # [B, L, d_s]
    actions: np.ndarray    # [B, L, d_a]
    timesteps: np.ndarray  # [B, L] absolute episode indices
    mask: np.ndarray       # [B, L] True on real steps
    episodes: np.ndarray = field(default=None)  # [B] source episode index


def sample_batch(ds: Dataset, L: int, batch: int, rng: np.random.Generator) -> Batch:
    """Draw ``batch`` windows ending at a uniformly chosen (episode, step).

    Windows that start before the episode are left-padded with zeros.
    """
    if not ds.trajectories:
        raise ConfigError("cannot sample from an empty dataset")
    lengths = np.array([len(tr) for tr in ds.trajectories])
    ends = np.cumsum(lengths)
    flat = rng.integers(0, ends[-1], size=batch)
    ep = np.searchsorted(ends, flat, side="right")
    end = flat - (ends[ep] - lengths[ep])
    d_s, d_a = ds.state_dim, ds.act_dim
    out = Batch(np.zeros((batch, L, 1)), np.zeros((batch, L, d_s)), np.zeros((batch, L, d_a)),
                np.zeros((batch, L), dtype=np.intp), np.zeros((batch, L), dtype=bool), ep)
    for i, (e, t) in enumerate(zip(ep, end)):
        tr = ds.trajectories[e]
        start = max(0, t - L + 1)
        n = t - start + 1
        out.rtg[i, L - n:, 0] = tr.rtg[start:t + 1]
        out.states[i, L - n:] = tr.states[start:t + 1]
        out.actions[i, L - n:] = tr.actions[start:t + 1]
        out.timesteps[i, L - n:] = np.arange(start, t + 1)
        out.mask[i, L - n:] = True
    return out


def batch_loss(model: PolicyModel, b: Batch) -> T.Tensor:
    pred = model.forward(b.rtg, b.states, b.actions, b.timesteps, b.mask)
    return loss(pred, b.actions, b.mask, model.config.discrete)


def train_step(model: PolicyModel, b: Batch, state: AdamState, lr: float, grad_clip: float):
    """One forward/backward/update. Returns ``(loss, pre-clip grad norm)``."""
    params = model.named_parameters()
    for p in params.values():
        p.grad = None
    value = batch_loss(model, b)
    loss_value = value.item()
    if not np.isfinite(loss_value):
        raise NonFiniteLossError(f"loss became {loss_value}")
    T.backward(value)
    grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
    norm = clip_grad_norm(grads, grad_clip)
    adam_step(params, grads, state, lr)
    return loss_value, norm


def model_config_for(ds: Dataset, kind: str, context_len: int, **overrides) -> ModelConfig:
    """Model config sized for ``ds``; returns are scaled by the largest |episode return|."""
    rets = np.abs(ds.returns())
    scale = float(rets.max()) if rets.size and rets.max() > 0 else 1.0
    kw = dict(kind=kind, state_dim=ds.state_dim, act_dim=ds.act_dim, discrete=ds.discrete,
              context_len=context_len, max_timestep=ds.T_max, rtg_scale=scale)
    kw.update(overrides)
    return ModelConfig(**kw)


def normalizer_for(ds: Dataset) -> Normalizer:
    m = ds.manifest
    if "state_mean" not in m:
        return Normalizer.identity(ds.state_dim, ds.act_dim)
    am = np.zeros(ds.act_dim) if ds.discrete else np.array(m["action_mean"])
    as_ = np.ones(ds.act_dim) if ds.discrete else np.array(m["action_std"])
    return Normalizer(np.array(m["state_mean"]), np.array(m["state_std"]), am, as_)


# -- checkpoints with optimizer state ------------------------------------------------
def save_training_checkpoint(path, model: PolicyModel, state: AdamState, rng: np.random.Generator,
                             step: int, train_cfg: TrainConfig) -> None:
    extra = {"train.step": np.array([float(step)]), "train.adam_step": np.array([float(state.step)])}
    for k, v in state.m.items():
        extra[f"adam.m.{k}"] = v
    for k, v in state.v.items():
        extra[f"adam.v.{k}"] = v
    header = {"train.rng_state": json.dumps(rng.bit_generator.state, sort_keys=True),
              "train.config": json.dumps(asdict(train_cfg), sort_keys=True)}
    model.save(path, extra, header)


def load_training_checkpoint(path):
    """Returns ``(model, adam_state, rng, step)``."""
    model, extra, header = PolicyModel.load(path)
    state = AdamState(step=int(extra.get("train.adam_step", [0])[0]))
    for k, v in extra.items():
        if k.startswith("adam.m."):
            state.m[k[len("adam.m."):]] = v.copy()
        elif k.startswith("adam.v."):
            state.v[k[len("adam.v."):]] = v.copy()
    rng = np.random.default_rng()
    if "train.rng_state" in header:
        rng.bit_generator.state = json.loads(header["train.rng_state"])
    step = int(extra.get("train.step", [0])[0])
    return model, state, rng, step


# -- the loop -----------------------------------------------------------------------
@dataclass
class TrainResult:
    model: PolicyModel
    metrics: list[dict]
    state: AdamState
    checkpoint: Path | None = None


def train(model: PolicyModel, ds: Dataset, cfg: TrainConfig, out_dir=None, resume=None) -> TrainResult:
    """Behavior-clone ``ds`` into ``model`` for ``cfg.steps`` total steps.

    With ``resume`` (a checkpoint written by this function) the model,
    optimizer moments and sampling rng are restored and training continues
    from the saved step, so losses match an uninterrupted run; ``model``
    is then ignored and may be None.
    """
    cfg.validate(ds.T_max)
    data = normalize(ds)
    if resume is not None:
        model, state, rng, start = load_training_checkpoint(resume)
    else:
        model.normalizer = normalizer_for(data)
        state, rng, start = AdamState(), np.random.default_rng(cfg.seed), 0
    if model.config.context_len < cfg.context_len:
        raise ConfigError(f"model context {model.config.context_len} < train context {cfg.context_len}")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    ckpt = out / "model.ckpt" if out is not None else None
    metrics: list[dict] = []
    if resume is not None and out is not None and (out / "metrics.csv").is_file():
        # resuming into the same directory continues its log
        metrics = [m for m in read_metrics(out / "metrics.csv") if m["step"] <= start]
    for step in range(start + 1, cfg.steps + 1):
        t0 = time.perf_counter()
        b = sample_batch(data, cfg.context_len, cfg.batch_size, rng)
        lr = warmup_lr(step, cfg.lr, cfg.warmup_steps)
        try:
            value, norm = train_step(model, b, state, lr, cfg.grad_clip)
        except NonFiniteLossError:
            log.error("non-finite loss at step %d; last good checkpoint kept at %s", step, ckpt)
            raise
        wall = (time.perf_counter() - t0) * 1000.0 if cfg.record_time else 0.0
        metrics.append({"step": step, "loss": value, "grad_norm": norm, "lr": lr, "wall_ms": wall})
        if step % 100 == 0:
            log.info("step %d loss %.5f grad_norm %.4f", step, value, norm)
        if ckpt is not None and cfg.eval_interval and step % cfg.eval_interval == 0:
            save_training_checkpoint(ckpt, model, state, rng, step, cfg)
            write_metrics(out / "metrics.csv", metrics)
    if ckpt is not None:
        save_training_checkpoint(ckpt, model, state, rng, max(cfg.steps, start), cfg)
        write_metrics(out / "metrics.csv", metrics)
    return TrainResult(model, metrics, state, ckpt)


def write_metrics(path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_FIELDS)
        for r in rows:
            w.writerow([r["step"]] + [repr(float(r[k])) for k in METRIC_FIELDS[1:]])


def read_metrics(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [{"step": int(r["step"]), **{k: float(r[k]) for k in METRIC_FIELDS[1:]}}
                for r in csv.DictReader(fh)]

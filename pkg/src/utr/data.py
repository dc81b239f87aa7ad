"""Offline datasets: generation, returns-to-go, normalization and file I/O.

A dataset directory holds two files:

``manifest.json``
    UTF-8 JSON (sorted keys, 2-space indent) describing the environment,
    behavior mix, sizes and per-dimension statistics.
``trajectories.bin``
    Little-endian episodes back to back: ``u32 T``, then ``T*d_s`` f64
    states, ``T*d_a`` f64 actions and ``T`` f64 rewards, all row-major.
"""
from __future__ import annotations

import copy
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .envs import TIERS, Tier, make_env
from .errors import ConfigError, UsageError

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
TRAJECTORIES = "trajectories.bin"
STD_FLOOR = 1e-12


def compute_rtg(rewards) -> np.ndarray:
    """Undiscounted reverse cumulative sum: ``rtg[t] = sum(rewards[t:])``."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size == 0:
        raise UsageError("compute_rtg needs a non-empty 1-D reward sequence")
    out = np.empty_like(r)
    acc = 0.0
    for t in range(r.size - 1, -1, -1):
        acc += r[t]
        out[t] = acc
    return out


@dataclass
class Trajectory:
    states: np.ndarray   # [T, d_s]
    actions: np.ndarray  # [T, d_a]
    rewards: np.ndarray  # [T]
    rtg: np.ndarray = field(init=False)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        T = self.rewards.shape[0]
        if self.states.shape[0] != T or self.actions.shape[0] != T:
            raise UsageError(f"trajectory arrays disagree on length: {self.states.shape}, "
                             f"{self.actions.shape}, {self.rewards.shape}")
        self.rtg = compute_rtg(self.rewards)

    def __len__(self) -> int:
        return self.rewards.shape[0]

    @property
    def episode_return(self) -> float:
        return float(self.rtg[0])


@dataclass
class Dataset:
    manifest: dict
    trajectories: list[Trajectory]

    @property
    def state_dim(self) -> int:
        return self.manifest["state_dim"]

    @property
    def act_dim(self) -> int:
        return self.manifest["act_dim"]

    @property
    def discrete(self) -> bool:
        return self.manifest["discrete"]

    @property
    def T_max(self) -> int:
        return self.manifest["T_max"]

    def make_env(self):
        return make_env(self.manifest["env"]["kind"], **self.manifest["env"]["params"])

    def returns(self) -> np.ndarray:
        return np.array([tr.episode_return for tr in self.trajectories])


# -- generation ---------------------------------------------------------------------
def parse_mix(text: str) -> list[tuple[str, float]]:
    """``"expert:0.5,random:0.5"`` -> ``[("expert", 0.5), ("random", 0.5)]``."""
    out = []
    for part in text.split(","):
        name, sep, weight = part.strip().partition(":")
        if not sep:
            raise ConfigError(f"mix entry {part!r} must look like name:weight")
        try:
            out.append((name.strip(), float(weight)))
        except ValueError:
            raise ConfigError(f"mix weight {weight!r} is not a number") from None
    return out


def _resolve_policies(policies: Sequence[tuple]) -> tuple[list[Tier], np.ndarray]:
    if not policies:
        raise ConfigError("behavior mix is empty")
    tiers, weights = [], []
    for pol, w in policies:
        tier = TIERS.get(pol) if isinstance(pol, str) else pol
        if tier is None:
            raise ConfigError(f"unknown behavior tier {pol!r}; choose from {sorted(TIERS)}")
        if w < 0:
            raise ConfigError(f"mix weight for {tier.name} is negative")
        tiers.append(tier)
        weights.append(float(w))
    weights = np.array(weights)
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ConfigError(f"mix weights must sum to 1, got {weights.sum():.6g}")
    return tiers, weights


def rollout(env, act, rng: np.random.Generator) -> Trajectory:
    """Run one episode where ``act(obs, t, rng)`` returns the action vector."""
    obs = env.reset(rng)
    states, actions, rewards = [], [], []
    done, t = False, 0
    while not done:
        a = act(obs, t, rng)
        states.append(obs)
        actions.append(a)
        obs, r, done = env.step(a)
        rewards.append(r)
        t += 1
    return Trajectory(np.array(states), np.array(actions), np.array(rewards))


def generate_dataset(env, policies: Sequence[tuple], n_episodes: int, seed: int) -> Dataset:
    """Sample ``n_episodes`` from a weighted mixture of behavior tiers.

    Each episode draws its tier and its own rng stream from ``seed``, so the
    result does not depend on generation order.
    """
    tiers, weights = _resolve_policies(policies)
    if n_episodes < 1:
        raise ConfigError(f"n_episodes must be >= 1, got {n_episodes}")
    root = np.random.SeedSequence(seed)
    tier_rng = np.random.default_rng(root.spawn(1)[0])
    choice = tier_rng.choice(len(tiers), size=n_episodes, p=weights)
    trajectories, per_tier = [], {t.name: [] for t in tiers}
    for i, child in enumerate(root.spawn(n_episodes)):
        tier = tiers[choice[i]]
        rng = np.random.default_rng(child)
        tr = rollout(env, lambda o, t, r: env.behavior_action(tier, o, t, r), rng)
        trajectories.append(tr)
        per_tier[tier.name].append(tr.episode_return)
    manifest = {
        "format_version": FORMAT_VERSION,
        "env": {"kind": env.kind, "params": env.params()},
        "n_episodes": n_episodes,
        "seed": seed,
        "state_dim": env.state_dim,
        "act_dim": env.action_dim,
        "discrete": env.discrete,
        # timestep table must cover every step an evaluation rollout can reach
        "T_max": max(env.horizon, max(len(tr) for tr in trajectories)),
        "behavior_mix": [{"tier": t.name, "weight": float(w), "epsilon": t.epsilon,
                          "noise": t.noise} for t, w in zip(tiers, weights)],
        "tier_mean_return": {k: (float(np.mean(v)) if v else None) for k, v in per_tier.items()},
        "tier_episodes": {k: len(v) for k, v in per_tier.items()},
        "expert_return": env.optimal_return(),
        "random_return": env.random_return(),
        "normalized": False,
    }
    ds = Dataset(manifest, trajectories)
    manifest.update(compute_stats(ds))
    return ds


# -- normalization ------------------------------------------------------------------
def compute_stats(ds: Dataset) -> dict:
    """Per-dimension mean/std of states and actions over all steps.

    Dimensions with std below ``STD_FLOOR`` get std 1 and are listed as
    constant so they pass through unscaled.
    """
    S = np.concatenate([tr.states for tr in ds.trajectories])
    A = np.concatenate([tr.actions for tr in ds.trajectories])
    out = {}
    for key, X in (("state", S), ("action", A)):
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        const = [int(i) for i in np.flatnonzero(std < STD_FLOOR)]
        std[const] = 1.0
        out[f"{key}_mean"] = [float(v) for v in mean]
        out[f"{key}_std"] = [float(v) for v in std]
        out[f"{key}_constant_dims"] = const
    return out


def normalize(ds: Dataset) -> Dataset:
    """Return a copy with z-scored states (and actions, if continuous).

    Statistics are computed from ``ds`` and recorded in the manifest.
    """
    if ds.manifest.get("normalized"):
        return ds
    manifest = copy.deepcopy(ds.manifest)
    manifest.update(compute_stats(ds))
    sm, ss = np.array(manifest["state_mean"]), np.array(manifest["state_std"])
    am, as_ = np.array(manifest["action_mean"]), np.array(manifest["action_std"])
    trajs = []
    for tr in ds.trajectories:
        actions = tr.actions if ds.discrete else (tr.actions - am) / as_
        trajs.append(Trajectory((tr.states - sm) / ss, actions, tr.rewards.copy()))
    manifest["normalized"] = True
    return Dataset(manifest, trajs)


def denormalize(ds: Dataset) -> Dataset:
    if not ds.manifest.get("normalized"):
        return ds
    manifest = copy.deepcopy(ds.manifest)
    sm, ss = np.array(manifest["state_mean"]), np.array(manifest["state_std"])
    am, as_ = np.array(manifest["action_mean"]), np.array(manifest["action_std"])
    trajs = []
    for tr in ds.trajectories:
        actions = tr.actions if ds.discrete else tr.actions * as_ + am
        trajs.append(Trajectory(tr.states * ss + sm, actions, tr.rewards.copy()))
    manifest["normalized"] = False
    return Dataset(manifest, trajs)


# -- file I/O -----------------------------------------------------------------------
def encode_trajectories(trajectories: Sequence[Trajectory]) -> bytes:
    parts = []
    for tr in trajectories:
        parts.append(struct.pack("<I", len(tr)))
        for arr in (tr.states, tr.actions, tr.rewards):
            parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_trajectories(buf: bytes, d_s: int, d_a: int) -> list[Trajectory]:
    out, pos = [], 0
    while pos < len(buf):
        (T,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        arrays = []
        for shape in ((T, d_s), (T, d_a), (T,)):
            n = int(np.prod(shape))
            arrays.append(np.frombuffer(buf, "<f8", n, pos).astype(np.float64).reshape(shape))
            pos += 8 * n
        out.append(Trajectory(*arrays))
    return out


def manifest_text(manifest: dict) -> str:
    return json.dumps(manifest, indent=2, sort_keys=True) + "\n"


def save_dataset(ds: Dataset, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / MANIFEST).write_text(manifest_text(ds.manifest), encoding="utf-8")
    (d / TRAJECTORIES).write_bytes(encode_trajectories(ds.trajectories))
    return d


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    if not (d / MANIFEST).is_file() or not (d / TRAJECTORIES).is_file():
        raise UsageError(f"{d} is not a dataset directory (needs {MANIFEST} and {TRAJECTORIES})")
    manifest = json.loads((d / MANIFEST).read_text(encoding="utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise UsageError(f"unsupported dataset format version {manifest.get('format_version')}")
    trajs = decode_trajectories((d / TRAJECTORIES).read_bytes(),
                                manifest["state_dim"], manifest["act_dim"])
    if len(trajs) != manifest["n_episodes"]:
        raise UsageError(f"manifest lists {manifest['n_episodes']} episodes, file holds {len(trajs)}")
    return Dataset(manifest, trajs)


def normalized_score(ret: float, random_return: float, expert_return: float) -> float:
    return 100.0 * (ret - random_return) / (expert_return - random_return)

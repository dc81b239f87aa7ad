"""Return-conditioned rollouts under several initial RTG targets."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .data import normalized_score
from .errors import ConfigError

DEFAULT_MULTIPLIERS = (0.5, 0.75, 1.0, 1.25, 1.5, 2.0)
REPORT_FIELDS = ("target_multiplier", "mean_return", "norm_score")


class Policy(Protocol):
    def act(self, rtg, states, actions, timesteps) -> np.ndarray: ...


class ExpertPolicy:
    """Oracle stub that ignores the history and plays the env's expert action."""

    def __init__(self, env):
        self.env = env

    def act(self, rtg, states, actions, timesteps):
        return self.env.expert_action(np.asarray(states)[-1], int(timesteps[-1]))


class RandomPolicy:
    """Uniform-random stub; draws from the rng handed to :func:`evaluate`."""

    def __init__(self, env):
        self.env = env
        self.rng = np.random.default_rng(0)

    def act(self, rtg, states, actions, timesteps):
        return self.env.random_action(self.rng)


@dataclass
class EvalReport:
    multipliers: list[float]
    targets: list[float]
    mean_returns: list[float]
    norm_scores: list[float]
    expert_return: float
    random_return: float
    n_eval: int
    wall_s: float = 0.0
    episode_returns: list[list[float]] = field(default_factory=list)

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.norm_scores))

    @property
    def best_score(self) -> float:
        return float(max(self.norm_scores))

    def rows(self) -> list[tuple]:
        out = [(m, r, s) for m, r, s in zip(self.multipliers, self.mean_returns, self.norm_scores)]
        i = self.best_index
        out.append(("best", self.mean_returns[i], self.best_score))
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(REPORT_FIELDS)
            for m, r, s in self.rows():
                w.writerow([m if isinstance(m, str) else repr(float(m)), repr(float(r)), repr(float(s))])


def _check_dims(policy, env) -> None:
    cfg = getattr(policy, "config", None)
    if cfg is None:
        return
    if cfg.state_dim != env.state_dim or cfg.act_dim != env.action_dim:
        raise ConfigError(f"model dims (state {cfg.state_dim}, action {cfg.act_dim}) do not match "
                          f"env dims (state {env.state_dim}, action {env.action_dim})")
    if cfg.discrete != env.discrete:
        raise ConfigError("model and env disagree on discrete vs continuous actions")
    if cfg.max_timestep < env.horizon:
        raise ConfigError(f"model timestep table {cfg.max_timestep} shorter than env horizon {env.horizon}")


def rollout_conditioned(policy, env, target: float, rng: np.random.Generator):
    """One episode starting from RTG ``target``.

    Returns ``(return, fed_rtg)`` where ``fed_rtg[t]`` is the RTG given to
    the policy at step t, i.e. the target minus rewards collected so far.
    """
    if hasattr(policy, "rng"):
        policy.rng = rng
    obs = env.reset(rng)
    rtgs, states, actions, steps = [], [], [], []
    R, total, done, t = float(target), 0.0, False, 0
    while not done:
        rtgs.append(R)
        states.append(obs)
        actions.append(np.zeros(env.action_dim))  # placeholder, shifted out by the tokenizer
        steps.append(t)
        a = np.asarray(policy.act(np.array(rtgs), np.array(states), np.array(actions),
                                  np.array(steps)), dtype=np.float64)
        actions[-1] = a
        obs, r, done = env.step(a)
        R -= r
        total += r
        t += 1
    return total, np.array(rtgs)


def evaluate(policy, env, multipliers: Sequence[float] = DEFAULT_MULTIPLIERS, n_eval: int = 10,
             seed: int = 0, expert_return: float | None = None,
             random_return: float | None = None) -> EvalReport:
    """Mean return and normalized score for each ``multiplier * expert_return`` target.

    Every (target, episode) pair gets its own rng stream derived from
    ``seed``, so results do not depend on evaluation order.
    """
    if n_eval < 1:
        raise ConfigError(f"n_eval must be >= 1, got {n_eval}")
    if not multipliers:
        raise ConfigError("at least one target multiplier is required")
    _check_dims(policy, env)
    expert = env.optimal_return() if expert_return is None else expert_return
    rand = env.random_return() if random_return is None else random_return
    if expert == rand:
        raise ConfigError("expert and random returns coincide; normalized score undefined")
    t0 = time.perf_counter()
    streams = np.random.SeedSequence(seed).spawn(len(multipliers))
    means, scores, per_ep, targets = [], [], [], []
    for mult, ss in zip(multipliers, streams):
        target = float(mult) * expert
        rets = [rollout_conditioned(policy, env, target, np.random.default_rng(c))[0]
                for c in ss.spawn(n_eval)]
        targets.append(target)
        per_ep.append(rets)
        means.append(float(np.mean(rets)))
        scores.append(normalized_score(means[-1], rand, expert))
    return EvalReport([float(m) for m in multipliers], targets, means, scores, expert, rand,
                      n_eval, time.perf_counter() - t0, per_ep)


def read_report(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))

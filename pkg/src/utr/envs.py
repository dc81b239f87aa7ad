"""Synthetic offline-RL environments and their behavior policies.

``ChainMDP``
    Walk along ``n_states`` cells from cell 0 to the goal ``n_states - 1``.
    Actions are one-hot over {left, right}; reward 1 on reaching the goal,
    which ends the episode. States are one-hot cell indicators.

``LinearControl``
    ``s' = A s + B a + noise`` with per-step reward ``-(s'Qs + a'Ra)``.
    The expert is the finite-horizon LQR controller.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError

LEFT, RIGHT = 0, 1


@dataclass(frozen=True)
class Tier:
    """Behavior-policy quality level."""

    name: str
    epsilon: float  # ChainMDP: probability of a uniformly random action
    noise: float    # LinearControl: std of Gaussian action perturbation


TIERS = {
    "expert": Tier("expert", 0.0, 0.0),
    "medium": Tier("medium", 0.3, 0.5),
    "random": Tier("random", 0.7, 1.5),
}


class ChainMDP:
    kind = "chain"
    discrete = True

    def __init__(self, n_states: int = 8, horizon: int = 10):
        if n_states < 2:
            raise ConfigError(f"ChainMDP needs n_states >= 2, got {n_states}")
        if horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {horizon}")
        self.n_states = n_states
        self.horizon = horizon
        self.state_dim = n_states
        self.action_dim = 2
        self.goal = n_states - 1
        self.pos = 0
        self.t = 0

    def params(self) -> dict:
        return {"n_states": self.n_states, "horizon": self.horizon}

    def observe(self) -> np.ndarray:
        obs = np.zeros(self.n_states)
        obs[self.pos] = 1.0
        return obs

    def reset(self, rng: np.random.Generator | None = None) -> np.ndarray:
        self.pos, self.t = 0, 0
        return self.observe()

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        a = int(np.argmax(action))
        self.pos = min(self.pos + 1, self.goal) if a == RIGHT else max(self.pos - 1, 0)
        self.t += 1
        reached = self.pos == self.goal
        reward = 1.0 if reached else 0.0
        return self.observe(), reward, reached or self.t >= self.horizon

    def one_hot(self, a: int) -> np.ndarray:
        out = np.zeros(2)
        out[a] = 1.0
        return out

    def expert_action(self, obs: np.ndarray, t: int) -> np.ndarray:
        return self.one_hot(RIGHT)

    def random_action(self, rng: np.random.Generator) -> np.ndarray:
        return self.one_hot(int(rng.integers(2)))

    def behavior_action(self, tier: Tier, obs, t, rng: np.random.Generator) -> np.ndarray:
        if rng.random() < tier.epsilon:
            return self.random_action(rng)
        return self.expert_action(obs, t)

    # -- oracles ---------------------------------------------------------------
    def optimal_return(self) -> float:
        """Finite-horizon value iteration from the start cell."""
        V = np.zeros(self.n_states)  # value with k steps left, goal is absorbing (value 0)
        for _ in range(self.horizon):
            new = np.zeros_like(V)
            for s in range(self.goal):
                best = -np.inf
                for nxt in (max(s - 1, 0), min(s + 1, self.goal)):
                    q = 1.0 if nxt == self.goal else V[nxt]
                    best = max(best, q)
                new[s] = best
            V = new
        return float(V[0])

    def random_return(self) -> float:
        """Exact expected return of the uniform-random policy (goal-hit probability)."""
        p = np.zeros(self.n_states)
        p[0] = 1.0
        hit = 0.0
        for _ in range(self.horizon):
            nxt = np.zeros_like(p)
            for s in range(self.goal):
                nxt[max(s - 1, 0)] += 0.5 * p[s]
                nxt[min(s + 1, self.goal)] += 0.5 * p[s]
            hit += nxt[self.goal]
            nxt[self.goal] = 0.0
            p = nxt
        return float(hit)


class LinearControl:
    kind = "linear"
    discrete = False

    def __init__(self, d_s: int = 3, d_a: int = 2, horizon: int = 32, seed: int = 0,
                 noise_std: float = 0.05, control_cost: float = 0.1):
        if d_s < 1 or d_a < 1 or horizon < 1:
            raise ConfigError(f"LinearControl needs positive dims/horizon, got {d_s}, {d_a}, {horizon}")
        self.d_s, self.d_a, self.horizon, self.seed = d_s, d_a, horizon, seed
        self.noise_std = noise_std
        self.control_cost = control_cost
        self.state_dim, self.action_dim = d_s, d_a
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(rng.normal(size=(d_s, d_s)))
        self.A = 1.05 * q  # mildly unstable open loop
        self.B = rng.normal(size=(d_s, d_a)) / np.sqrt(d_s)
        self.Q = np.eye(d_s)
        self.R = control_cost * np.eye(d_a)
        self.gains = self._lqr_gains()
        self.s = np.zeros(d_s)
        self.t = 0
        self._rng = np.random.default_rng(0)

    def params(self) -> dict:
        return {"d_s": self.d_s, "d_a": self.d_a, "horizon": self.horizon, "seed": self.seed,
                "noise_std": self.noise_std, "control_cost": self.control_cost}

    def _lqr_gains(self) -> list[np.ndarray]:
        # backward Riccati recursion; gains[t] for t = 0..horizon-1
        P = self.Q.copy()
        gains = []
        for _ in range(self.horizon):
            BtP = self.B.T @ P
            K = np.linalg.solve(self.R + BtP @ self.B, BtP @ self.A)
            P = self.Q + self.A.T @ P @ (self.A - self.B @ K)
            gains.append(K)
        return gains[::-1]

    def reset(self, rng: np.random.Generator | None = None) -> np.ndarray:
        self._rng = rng if rng is not None else np.random.default_rng(0)
        self.s = self._rng.normal(size=self.d_s)
        self.t = 0
        return self.s.copy()

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        a = np.asarray(action, dtype=np.float64).reshape(self.d_a)
        reward = -float(self.s @ self.Q @ self.s + a @ self.R @ a)
        self.s = self.A @ self.s + self.B @ a + self.noise_std * self._rng.normal(size=self.d_s)
        self.t += 1
        return self.s.copy(), reward, self.t >= self.horizon

    def expert_action(self, obs: np.ndarray, t: int) -> np.ndarray:
        return -self.gains[min(t, self.horizon - 1)] @ obs

    def random_action(self, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(size=self.d_a)

    def behavior_action(self, tier: Tier, obs, t, rng: np.random.Generator) -> np.ndarray:
        return self.expert_action(obs, t) + tier.noise * rng.normal(size=self.d_a)

    # -- oracles ---------------------------------------------------------------
    def _mc_return(self, act: Callable, n: int = 200, seed: int = 12345) -> float:
        rets = []
        for child in np.random.SeedSequence(seed).spawn(n):
            rng = np.random.default_rng(child)
            obs, done, ret, t = self.reset(rng), False, 0.0, 0
            while not done:
                obs, r, done = self.step(act(obs, t, rng))
                ret += r
                t += 1
            rets.append(ret)
        return float(np.mean(rets))

    def optimal_return(self) -> float:
        return self._mc_return(lambda o, t, rng: self.expert_action(o, t))

    def random_return(self) -> float:
        return self._mc_return(lambda o, t, rng: self.random_action(rng))


ENV_KINDS = {"chain": ChainMDP, "linear": LinearControl}


def make_env(kind: str, **params):
    if kind not in ENV_KINDS:
        raise ConfigError(f"unknown env kind {kind!r}; choose from {sorted(ENV_KINDS)}")
    return ENV_KINDS[kind](**params)

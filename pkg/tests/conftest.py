import os

# single-threaded BLAS keeps forward passes bit-reproducible
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from utr.data import generate_dataset  # noqa: E402
from utr.envs import ChainMDP  # noqa: E402
from utr.models import ModelConfig, PolicyModel  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def chain_dataset():
    return generate_dataset(ChainMDP(8, 10), [("expert", 0.5), ("random", 0.5)], 60, seed=3)


def small_model(kind: str, seed: int = 0, **kw) -> PolicyModel:
    cfg = dict(kind=kind, state_dim=3, act_dim=2, context_len=6, embed_dim=8, depth=2,
               n_heads=2, d_R=4, max_timestep=12)
    cfg.update(kw)
    return PolicyModel.init(ModelConfig(**cfg), seed=seed, std=0.3)


def random_window(rng, L=6, d_s=3, d_a=2, B=None, T_max=12):
    lead = (L,) if B is None else (B, L)
    rtg = rng.normal(size=lead + (1,))
    states = rng.normal(size=lead + (d_s,))
    actions = rng.normal(size=lead + (d_a,))
    start = rng.integers(0, T_max - L + 1)
    ts = np.broadcast_to(np.arange(start, start + L), lead).copy()
    return rtg, states, actions, ts


# one status line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from utr.data import (Dataset, Trajectory, compute_rtg, compute_stats, denormalize, generate_dataset,
                      load_dataset, normalize, normalized_score, parse_mix, save_dataset)
from utr.envs import TIERS, ChainMDP, LinearControl, make_env
from utr.errors import ConfigError, UsageError


def test_rtg_examples():
    assert compute_rtg([0, 0, 1]).tolist() == [1, 1, 1]
    assert compute_rtg([1, 2, 3]).tolist() == [6, 5, 3]
    with pytest.raises(UsageError):
        compute_rtg([])


@settings(max_examples=60)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40))
def test_rtg_recurrence_is_exact(rewards):
    r = compute_rtg(rewards)
    assert r[-1] == rewards[-1]
    for t in range(len(r) - 1):
        assert r[t] == rewards[t] + r[t + 1]


def test_chain_dynamics_and_oracles():
    env = ChainMDP(8, 10)
    obs = env.reset()
    assert obs.argmax() == 0
    obs, r, done = env.step(env.one_hot(0))
    assert obs.argmax() == 0 and r == 0 and not done
    for _ in range(7):
        obs, r, done = env.step(env.one_hot(1))
    assert r == 1.0 and done and obs.argmax() == 7
    assert env.optimal_return() == 1.0
    assert ChainMDP(8, 6).optimal_return() == 0.0  # goal out of reach
    # exact DP against brute-force enumeration of all 2^10 action sequences
    hits = 0
    for code in range(2 ** 10):
        pos = 0
        for t in range(10):
            pos = min(pos + 1, 7) if (code >> t) & 1 else max(pos - 1, 0)
            if pos == 7:
                hits += 1
                break
    assert env.random_return() == hits / 2 ** 10


def test_linear_control_is_seed_deterministic():
    env = LinearControl(3, 2, 8, seed=4)
    runs = []
    for _ in range(2):
        rng = np.random.default_rng(11)
        obs, total, done = env.reset(rng), 0.0, False
        while not done:
            obs, r, done = env.step(env.behavior_action(TIERS["medium"], obs, env.t, rng))
            total += r
        runs.append(total)
    assert runs[0] == runs[1] and runs[0] < 0
    assert env.optimal_return() > env.random_return()


def test_expert_chain_always_reaches_goal():
    ds = generate_dataset(ChainMDP(8, 10), [("expert", 1.0)], 30, seed=0)
    assert all(tr.episode_return == 1.0 and len(tr) == 7 for tr in ds.trajectories)


def test_mixture_mean_lies_between_tiers():
    env = ChainMDP(8, 10)
    means = {name: generate_dataset(env, [(name, 1.0)], 1000, seed=5).returns().mean()
             for name in ("expert", "random")}
    mixed = generate_dataset(env, [("expert", 0.5), ("random", 0.5)], 1000, seed=5).returns().mean()
    assert means["random"] < mixed < means["expert"]


def test_mix_validation():
    env = ChainMDP()
    with pytest.raises(ConfigError, match="sum to 1"):
        generate_dataset(env, [("expert", 0.5), ("random", 0.6)], 5, 0)
    with pytest.raises(ConfigError):
        generate_dataset(env, [], 5, 0)
    with pytest.raises(ConfigError):
        generate_dataset(env, [("godlike", 1.0)], 5, 0)
    assert parse_mix("expert:0.5, medium:0.5") == [("expert", 0.5), ("medium", 0.5)]
    with pytest.raises(ConfigError):
        parse_mix("expert")
    with pytest.raises(ConfigError):
        make_env("cartpole")


@pytest.mark.parametrize("env", [ChainMDP(8, 10), LinearControl(3, 2, 12)])
def test_dataset_files_round_trip(env, tmp_path):
    ds = generate_dataset(env, [("medium", 1.0)], 25, seed=9)
    save_dataset(ds, tmp_path / "a")
    again = generate_dataset(env, [("medium", 1.0)], 25, seed=9)
    save_dataset(again, tmp_path / "b")
    save_dataset(load_dataset(tmp_path / "a"), tmp_path / "c")
    for name in ("manifest.json", "trajectories.bin"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()
    back = load_dataset(tmp_path / "a")
    for x, y in zip(ds.trajectories, back.trajectories):
        assert x.states.tobytes() == y.states.tobytes() and x.rtg.tobytes() == y.rtg.tobytes()


def test_trajectory_layout(tmp_path):
    ds = Dataset({"format_version": 1, "n_episodes": 1, "state_dim": 1, "act_dim": 1},
                 [Trajectory([[1.0], [2.0]], [[3.0], [4.0]], [5.0, 6.0])])
    save_dataset(ds, tmp_path)
    raw = (tmp_path / "trajectories.bin").read_bytes()
    assert raw[:4] == b"\x02\0\0\0"
    assert np.frombuffer(raw[4:], "<f8").tolist() == [1, 2, 3, 4, 5, 6]


def test_load_rejects_non_dataset(tmp_path):
    with pytest.raises(UsageError):
        load_dataset(tmp_path)


def test_manifest_stats_are_recomputable(chain_dataset):
    m = chain_dataset.manifest
    stats = compute_stats(chain_dataset)
    for k in ("state_mean", "state_std", "action_mean", "action_std"):
        np.testing.assert_allclose(m[k], stats[k], rtol=0, atol=1e-9)
    assert m["T_max"] == 10 and m["expert_return"] == 1.0


def test_normalize_round_trip_and_constant_dims():
    env = LinearControl(3, 2, 10)
    ds = generate_dataset(env, [("medium", 1.0)], 40, seed=2)
    for tr in ds.trajectories:
        tr.states[:, 1] = 7.0  # constant dimension
    norm = normalize(ds)
    assert norm.manifest["state_constant_dims"] == [1]
    S = np.concatenate([tr.states for tr in norm.trajectories])
    np.testing.assert_allclose(S[:, [0, 2]].mean(0), 0, atol=1e-12)
    np.testing.assert_allclose(S[:, [0, 2]].std(0), 1, atol=1e-12)
    assert np.all(S[:, 1] == 0.0)  # centred but left unscaled
    back = denormalize(norm)
    for a, b in zip(ds.trajectories, back.trajectories):
        np.testing.assert_allclose(a.states, b.states, rtol=0, atol=1e-12)
        np.testing.assert_allclose(a.actions, b.actions, rtol=0, atol=1e-12)
    twice = normalize(denormalize(norm))
    again = normalize(Dataset(dict(twice.manifest, normalized=False), twice.trajectories))
    np.testing.assert_allclose(again.manifest["state_mean"], 0, atol=1e-12)
    for a, b in zip(twice.trajectories, again.trajectories):
        np.testing.assert_allclose(a.states, b.states, atol=1e-12)


def test_discrete_actions_stay_one_hot(chain_dataset):
    for a, b in zip(chain_dataset.trajectories, normalize(chain_dataset).trajectories):
        assert np.array_equal(a.actions, b.actions)


def test_normalized_score():
    assert normalized_score(1.0, 0.2, 1.0) == 100.0
    assert normalized_score(0.2, 0.2, 1.0) == 0.0

import numpy as np
import pytest
from scipy.stats import chisquare

from utr import checkpoint, training
from utr.data import generate_dataset
from utr.envs import ChainMDP, LinearControl
from utr.errors import ConfigError, NonFiniteLossError
from utr.evaluation import ExpertPolicy, RandomPolicy, evaluate, rollout_conditioned
from utr.models import PolicyModel
from utr.training import TrainConfig, model_config_for, read_metrics, sample_batch, train

from conftest import small_model


def tiny(ds, kind="udc", L=4, **kw):
    return PolicyModel.init(model_config_for(ds, kind, L, embed_dim=8, depth=1, n_heads=2, d_R=4, **kw), 0)


def test_short_episode_is_left_padded():
    ds = generate_dataset(ChainMDP(8, 10), [("expert", 1.0)], 3, seed=0)  # 7-step episodes
    b = sample_batch(ds, 10, 50, np.random.default_rng(0))
    for i in range(50):
        n = int(b.mask[i].sum())
        assert b.mask[i].tolist() == [False] * (10 - n) + [True] * n
        assert b.timesteps[i, 10 - n:].tolist() == list(range(n))
        assert not b.states[i, : 10 - n].any() and not b.rtg[i, : 10 - n].any()
    full = b.mask.sum(1) == 7
    assert full.any()


def test_sampling_is_seeded(chain_dataset):
    a = sample_batch(chain_dataset, 5, 16, np.random.default_rng(3))
    b = sample_batch(chain_dataset, 5, 16, np.random.default_rng(3))
    for f in ("rtg", "states", "actions", "timesteps", "mask"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_episode_frequency_tracks_length(chain_dataset):
    n = 100_000
    b = sample_batch(chain_dataset, 1, n, np.random.default_rng(0))
    lengths = np.array([len(tr) for tr in chain_dataset.trajectories])
    counts = np.bincount(b.episodes, minlength=len(lengths))
    # 3 sigma per length class (one multinomial cell per distinct length)
    for length in np.unique(lengths):
        p = lengths[lengths == length].sum() / lengths.sum()
        hits = counts[lengths == length].sum()
        assert abs(hits - n * p) <= 3 * np.sqrt(n * p * (1 - p)), length
    # and jointly across all episodes
    assert chisquare(counts, n * lengths / lengths.sum()).pvalue > 1e-3


def test_train_config_validation(chain_dataset):
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0).validate()
    with pytest.raises(ConfigError):
        TrainConfig(context_len=11).validate(T_max=10)
    with pytest.raises(ConfigError):
        train(tiny(chain_dataset, L=4), chain_dataset, TrainConfig(steps=1, context_len=6))


def test_zero_lr_leaves_parameters(chain_dataset):
    m = tiny(chain_dataset)
    before = {k: v.data.copy() for k, v in m.named_parameters().items()}
    train(m, chain_dataset, TrainConfig(steps=5, lr=0.0, batch_size=8, context_len=4))
    for k, v in m.named_parameters().items():
        assert np.array_equal(v.data, before[k]), k


def test_same_seed_same_metrics(chain_dataset, tmp_path):
    for name in ("a", "b"):
        cfg = TrainConfig(steps=6, batch_size=8, context_len=4, seed=1, record_time=False)
        train(tiny(chain_dataset), chain_dataset, cfg, tmp_path / name)
    assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()
    assert (tmp_path / "a/model.ckpt").read_bytes() == (tmp_path / "b/model.ckpt").read_bytes()
    rows = read_metrics(tmp_path / "a/metrics.csv")
    assert [r["step"] for r in rows] == list(range(1, 7)) and rows[0]["wall_ms"] == 0.0


def test_resume_matches_uninterrupted(chain_dataset, tmp_path):
    cfg = dict(batch_size=8, context_len=4, seed=2, record_time=False, lr=1e-3, warmup_steps=3)
    full = train(tiny(chain_dataset), chain_dataset, TrainConfig(steps=8, **cfg), tmp_path / "full")
    train(tiny(chain_dataset), chain_dataset, TrainConfig(steps=4, **cfg), tmp_path / "half")
    rest = train(None, chain_dataset, TrainConfig(steps=8, **cfg), tmp_path / "rest",
                 resume=tmp_path / "half/model.ckpt")
    assert [r["loss"] for r in rest.metrics] == [r["loss"] for r in full.metrics[4:]]
    assert (tmp_path / "rest/model.ckpt").read_bytes() == (tmp_path / "full/model.ckpt").read_bytes()


def test_nan_loss_keeps_last_good_checkpoint(chain_dataset, tmp_path, monkeypatch):
    real = training.batch_loss
    calls = {"n": 0}

    def flaky(model, b):
        calls["n"] += 1
        out = real(model, b)
        if calls["n"] == 5:
            out.data[...] = np.nan
        return out

    monkeypatch.setattr(training, "batch_loss", flaky)
    cfg = TrainConfig(steps=8, batch_size=4, context_len=4, eval_interval=2, record_time=False)
    with pytest.raises(NonFiniteLossError):
        train(tiny(chain_dataset), chain_dataset, cfg, tmp_path)
    entries, _ = checkpoint.load(tmp_path / "model.ckpt")
    assert entries["train.step"][0] == 4.0
    assert all(np.isfinite(v).all() for v in entries.values())


def test_udc_learns_expert_chain():
    ds = generate_dataset(ChainMDP(8, 10), [("expert", 1.0)], 50, seed=1)
    m = PolicyModel.init(model_config_for(ds, "udc", 10), 0)
    res = train(m, ds, TrainConfig(steps=200, context_len=10, batch_size=32, seed=0))
    losses = np.array([r["loss"] for r in res.metrics])
    start, end = losses[:10].mean(), losses[-10:].mean()
    assert end <= 0.5 * start, (start, end)


def test_expert_and_random_stubs():
    env = ChainMDP(8, 10)
    rep = evaluate(ExpertPolicy(env), env, n_eval=3)
    assert rep.norm_scores == [100.0] * 6 and rep.best_score == 100.0
    rnd = evaluate(RandomPolicy(env), env, n_eval=400, seed=1)
    sigma = np.sqrt(env.random_return() * (1 - env.random_return()) / 400) * 100 / (1 - env.random_return())
    assert all(abs(s) < 4 * sigma for s in rnd.norm_scores), rnd.norm_scores
    assert all(rnd.best_score >= s for s in rnd.norm_scores)


def test_rtg_bookkeeping_is_exact():
    env = LinearControl(2, 1, 6)

    class Recorder:
        def act(self, rtg, states, actions, timesteps):
            self.seen = rtg.copy()
            return np.array([0.1])

    rec = Recorder()
    ret, fed = rollout_conditioned(rec, env, -3.0, np.random.default_rng(0))
    env.reset(np.random.default_rng(0))
    rewards = [env.step(np.array([0.1]))[1] for _ in range(6)]
    expected = -3.0 - np.r_[0.0, np.cumsum(rewards)[:-1]]
    # decrementing one reward at a time gives the same floats as the running target
    R, exact = -3.0, []
    for r in rewards:
        exact.append(R)
        R -= r
    assert fed.tolist() == exact and rec.seen.tolist() == exact
    np.testing.assert_allclose(fed, expected, rtol=1e-12)
    assert ret == sum(rewards)


def test_evaluate_is_pure_and_deterministic(chain_dataset, tmp_path):
    m = tiny(chain_dataset, L=10)
    path = tmp_path / "m.ckpt"
    m.save(path)
    digest = checkpoint.file_digest(path)
    env = chain_dataset.make_env()
    a = evaluate(m, env, n_eval=2, seed=4)
    b = evaluate(m, env, n_eval=2, seed=4)
    m.save(path)
    assert checkpoint.file_digest(path) == digest
    assert a.rows() == b.rows()
    a.write_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "target_multiplier,mean_return,norm_score" and lines[-1].startswith("best,")


def test_env_model_mismatch_is_config_error():
    env = ChainMDP(8, 10)
    with pytest.raises(ConfigError):
        evaluate(small_model("udc"), env, n_eval=1)

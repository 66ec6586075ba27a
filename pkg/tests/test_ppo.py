import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clustercomm.comm import CommVariant
from clustercomm.config import ExperimentConfig, PPOHyper
from clustercomm.envs import make_env
from clustercomm.evaluation import fresh_agents
from clustercomm.kmeans import assign
from clustercomm.ppo import compute_gae, normalize, ppo_loss, ppo_update, update_clustering
from clustercomm.rollout import VecEnv, collect_rollout, log_softmax
from clustercomm.train import train


def test_gae_suffix_sums_when_undiscounted():
    r = np.array([1.0, 0.0, 2.0, -1.0])
    adv, ret = compute_gae(r, np.zeros(4), np.zeros(4, bool), 0.0, 1.0, 1.0)
    np.testing.assert_allclose(adv, [2.0, 1.0, 1.0, -1.0])
    np.testing.assert_allclose(ret, adv)


def test_gae_single_td_residual():
    adv, ret = compute_gae([1.0], [0.5], [False], 0.0, 0.9, 0.95)
    assert adv[0] == pytest.approx(0.5)
    assert ret[0] == pytest.approx(1.0)


def test_gae_matches_naive_double_sum():
    rng = np.random.default_rng(0)
    for _ in range(20):
        T, g, l = 12, rng.uniform(0.5, 1), rng.uniform(0, 1)
        r, v, boot = rng.standard_normal(T), rng.standard_normal(T), rng.standard_normal()
        adv, _ = compute_gae(r, v, np.zeros(T, bool), boot, g, l)
        nxt = np.append(v[1:], boot)
        delta = r + g * nxt - v
        naive = [sum((g * l) ** (j - t) * delta[j] for j in range(t, T)) for t in range(T)]
        np.testing.assert_allclose(adv, naive, rtol=1e-12)


def test_gae_done_blocks_credit():
    rng = np.random.default_rng(1)
    r, v = rng.standard_normal(8), rng.standard_normal(8)
    dones = np.zeros(8, bool)
    dones[3] = True
    a, _ = compute_gae(r, v, dones, 1.0, 0.99, 0.95)
    r2, v2 = r.copy(), v.copy()
    r2[4:] += 100.0
    v2[4:] -= 7.0
    b, _ = compute_gae(r2, v2, dones, -5.0, 0.99, 0.95)
    np.testing.assert_array_equal(a[:4], b[:4])


def test_gae_vectorised_over_envs():
    rng = np.random.default_rng(2)
    r, v = rng.standard_normal((6, 3)), rng.standard_normal((6, 3))
    d = rng.random((6, 3)) < 0.3
    boot = rng.standard_normal(3)
    adv, _ = compute_gae(r, v, d, boot, 0.9, 0.8)
    for e in range(3):
        col, _ = compute_gae(r[:, e], v[:, e], d[:, e], boot[e], 0.9, 0.8)
        np.testing.assert_allclose(adv[:, e], col)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 300), seed=st.integers(0, 10_000))
def test_normalized_advantages(n, seed):
    x = np.random.default_rng(seed).standard_normal(n) * 10 + 3
    z = normalize(x)
    assert abs(z.mean()) < 1e-6
    assert abs(z.std() - 1.0) < 1e-6


def total_loss(logits, values, actions, old_logp, adv, ret, hyper):
    t = ppo_loss(logits, values, actions, old_logp, adv, ret, hyper)
    return t.policy_loss + hyper.vf_coef * t.value_loss - hyper.ent_coef * t.entropy


def test_hand_built_surrogate():
    hyper = PPOHyper(ent_coef=0.0, vf_coef=0.0)
    logits = np.array([[np.log(0.6), np.log(0.4)]])
    for old_p, a_hat in [(0.3, 1.0), (0.3, -1.0), (0.55, 2.0), (0.9, -0.5)]:
        rho = 0.6 / old_p
        want = -min(rho * a_hat, np.clip(rho, 0.8, 1.2) * a_hat)
        t = ppo_loss(logits, np.zeros(1), np.array([0]), np.log([old_p]), np.array([a_hat]),
                     np.zeros(1), hyper)
        assert t.policy_loss == pytest.approx(want, rel=1e-12)


def test_ratio_one_makes_clipped_and_unclipped_agree():
    rng = np.random.default_rng(3)
    hyper = PPOHyper()
    logits = rng.standard_normal((32, 5))
    actions = rng.integers(5, size=32)
    old = log_softmax(logits)[np.arange(32), actions]
    adv = rng.standard_normal(32)
    t = ppo_loss(logits, np.zeros(32), actions, old, adv, np.zeros(32), hyper)
    assert t.policy_loss == pytest.approx(-adv.mean(), abs=1e-12)
    assert t.clip_fraction == 0.0 and t.approx_kl == pytest.approx(0.0, abs=1e-15)


def test_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    hyper = PPOHyper(ent_coef=0.05, vf_coef=0.7)
    h = 1e-6
    for _ in range(20):
        b = 6
        logits, values = rng.standard_normal((b, 5)), rng.standard_normal(b)
        actions = rng.integers(5, size=b)
        old = log_softmax(logits + 0.3 * rng.standard_normal((b, 5)))[np.arange(b), actions]
        adv, ret = rng.standard_normal(b), rng.standard_normal(b)
        t = ppo_loss(logits, values, actions, old, adv, ret, hyper)
        args = (actions, old, adv, ret, hyper)
        for i in range(b):
            for j in range(5):
                up, down = logits.copy(), logits.copy()
                up[i, j] += h
                down[i, j] -= h
                fd = (total_loss(up, values, *args) - total_loss(down, values, *args)) / (2 * h)
                assert fd == pytest.approx(t.grad_logits[i, j], rel=1e-5, abs=1e-8)
            up, down = values.copy(), values.copy()
            up[i] += h
            down[i] -= h
            fd = (total_loss(logits, up, *args) - total_loss(logits, down, *args)) / (2 * h)
            assert fd == pytest.approx(t.grad_value[i], rel=1e-5, abs=1e-8)


def test_loss_diagnostics_in_range():
    rng = np.random.default_rng(5)
    t = ppo_loss(rng.standard_normal((40, 5)) * 3, np.zeros(40), rng.integers(5, size=40),
                 np.log(np.full(40, 0.2)), rng.standard_normal(40), np.zeros(40), PPOHyper())
    assert 0.0 <= t.clip_fraction <= 1.0
    assert 0.0 <= t.entropy <= np.log(5) + 1e-12


def small_rollout(variant="clustercomm", env="closed_rooms", horizon=16, n_envs=4, seed=0):
    cfg = ExperimentConfig(env=env, variant=variant)
    cv = CommVariant(cfg.variant, cfg.k, cfg.hidden)
    agents = fresh_agents(cfg, seed)
    vec = VecEnv(lambda: make_env(env), n_envs, seed, cv)
    buffers, stats = collect_rollout(vec, agents, cv, horizon)
    return cfg, cv, agents, buffers, stats


def test_buffer_holds_horizon_times_envs():
    _, _, agents, buffers, _ = small_rollout(horizon=16, n_envs=4)
    assert len(buffers) == 2
    for b in buffers:
        assert len(b) == 64
        assert b.obs.shape[:2] == b.inbox.shape[:2] == b.reps.shape[:2] == (16, 4)
        assert b.reps.shape[-1] == 32 and b.last_values.shape == (4,)


def test_nocomm_inbox_is_empty():
    _, _, _, buffers, _ = small_rollout("nocomm")
    assert all(b.inbox.shape[-1] == 0 for b in buffers)


def test_zero_advantage_leaves_parameters_unchanged():
    _, _, agents, buffers, _ = small_rollout("latentcomm")
    b = buffers[0]
    b.rewards[...] = 0.0
    b.values[...] = 0.0
    b.last_values = np.zeros_like(b.last_values)
    before = agents[0].net.param_hash()
    hyper = PPOHyper(ent_coef=0.0, vf_coef=0.0, minibatch=32)
    ppo_update(agents[0], b, hyper)
    assert agents[0].net.param_hash() == before


def test_update_changes_parameters_and_reports_diagnostics():
    _, _, agents, buffers, _ = small_rollout()
    before = agents[1].net.param_hash()
    diag = ppo_update(agents[1], buffers[1], PPOHyper(minibatch=16, epochs=2))
    assert agents[1].net.param_hash() != before
    assert set(diag) >= {"policy_loss", "value_loss", "entropy", "clip_fraction"}
    assert all(np.isfinite(v) for v in diag.values())
    assert agents[1].adam.step == 2 * 4


def test_update_clustering_initializes_then_streams():
    _, cv, agents, buffers, _ = small_rollout()
    a = agents[0]
    assert not a.table.initialized
    update_clustering(a, buffers[0], cv)
    assert a.table.initialized and a.table.counts.sum() == 0
    update_clustering(a, buffers[0], cv)
    assert a.table.counts.sum() == len(buffers[0])
    idx = assign(buffers[0].flat_reps(), a.table)
    assert idx.min() >= 0 and idx.max() < cv.k


def test_update_clustering_defers_with_too_few_samples():
    _, cv, agents, buffers, _ = small_rollout(horizon=1, n_envs=4)
    update_clustering(agents[0], buffers[0], cv)  # 4 samples < k = 8
    assert not agents[0].table.initialized


@pytest.mark.parametrize("variant", ["nocomm", "latentcomm"])
def test_update_clustering_noop_without_clusters(variant):
    _, cv, agents, buffers, _ = small_rollout(variant)
    assert update_clustering(agents[0], buffers[0], cv) is None


def test_zero_step_training_gives_empty_curve():
    cfg = ExperimentConfig(env="closed_rooms", total_steps=0)
    art = train(cfg, seed=0)
    assert art.curve == [] and art.env_steps == 0
    init = fresh_agents(cfg, int(np.random.SeedSequence(0).spawn(3)[0].generate_state(1)[0]))
    assert [a.net.param_hash() for a in art.agents] == [a.net.param_hash() for a in init]


def test_agents_share_nothing():
    cfg = ExperimentConfig(env="bottleneck", n_agents=3)
    agents = fresh_agents(cfg, 0)
    ids = [id(arr) for a in agents for arr in a.net.params.values()]
    assert len(ids) == len(set(ids))
    assert len({a.net.param_hash() for a in agents}) == 3

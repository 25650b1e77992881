import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbcast.dynamics import StreamingEnv
from fbcast.fbmoac import (
    EPISODE_COLUMNS, FBMOAC, ActorCritic, CriticPair, LearnerConfig, RunningMoments,
    backward_advantages, backward_features, discounted_sum, dominates, evaluate,
    forward_advantages, pareto_eval, reverse_trajectory, td_advantages,
)
from fbcast.netmodel import RadioConfig


def small_env(N=6, T=8, seed=0):
    return StreamingEnv(RadioConfig(num_files_N=N, cache_cap_C=1.5), T, 0.6, None, seed)


def small_cfg(**kw):
    base = dict(hidden=(8,), episodes=10, seed=3)
    base.update(kw)
    return LearnerConfig(**base)


def test_td_hand_values():
    a = td_advantages(np.array([1.0, 2.0, 3.0]), np.array([0.5, 0.25, 0.125]), 0.9)
    np.testing.assert_allclose(a, [-1.275, -2.1375, -3.125], rtol=1e-15)


def test_zero_critic_no_discount_gives_negative_cost():
    c = np.random.default_rng(0).uniform(size=(5, 2))
    np.testing.assert_array_equal(td_advantages(c, np.zeros((5, 2)), 0.0), -c)


def test_discounted_sum():
    assert discounted_sum(np.array([1.0, 1.0, 1.0]), 0.5) == pytest.approx(1.75)
    np.testing.assert_allclose(discounted_sum(np.ones((4, 2)), 1.0), [4.0, 4.0])


def test_learner_config_validation():
    with pytest.raises(ValueError):
        LearnerConfig(weights=(0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        LearnerConfig(gamma=1.5)
    with pytest.raises(ValueError):
        LearnerConfig(gamma_mov=1.0)
    LearnerConfig(weights=(0.0, 0.0, 1.0))


def test_critics_start_flat():
    c = CriticPair.create(5, (7,), 0)
    x = np.random.default_rng(1).normal(size=(4, 6))
    from fbcast.nn import mlp_forward
    assert np.all(mlp_forward(c.forward, x)[0] == 0.0)
    assert np.all(mlp_forward(c.backward, x)[0] == 0.0)
    assert CriticPair.create(5, (7,), 0, with_backward=False).backward is None


def test_reverse_is_involution():
    lrn = FBMOAC(small_env(), small_cfg())
    traj = lrn.collect(0)
    back = reverse_trajectory(reverse_trajectory(traj))
    np.testing.assert_array_equal(back.lat, traj.lat)
    np.testing.assert_array_equal(back.r_lat, traj.r_lat)
    np.testing.assert_array_equal(reverse_trajectory(traj).outage, traj.outage[::-1])


def test_backward_features_start_from_end():
    lrn = FBMOAC(small_env(T=5), small_cfg())
    traj = lrn.collect(0)
    f = backward_features(traj, 2.0)
    # first reversed row is the last slot: nothing left after it
    assert np.all(f[0, :-1] == 0.0) and f[0, -1] == 1.0
    np.testing.assert_allclose(f[-1, :-1], traj.lat[1] / 2.0)
    assert f[-1, -1] == pytest.approx(1 / 5)


def test_advantages_align_with_slots():
    lrn = FBMOAC(small_env(), small_cfg())
    for _ in range(3):
        lrn.train_episode()
    traj = lrn.collect(5)
    adv, _ = lrn.advantages(traj)
    fwd = forward_advantages(traj, lrn.critics, lrn.cfg.gamma, lrn.scales)
    bwd = backward_advantages(traj, lrn.critics, lrn.cfg.gamma, lrn.scales)
    np.testing.assert_allclose(adv[:, :2], fwd)
    # entry k of the reversed pass belongs to slot T-1-k
    np.testing.assert_allclose(adv[:, 2], bwd[::-1])


def test_forward_only_variant_uses_duration_cost():
    lrn = ActorCritic(small_env(), small_cfg(), backward=False)
    assert lrn.critics.backward is None
    traj = lrn.collect(0)
    adv, _ = lrn.advantages(traj)
    # zero critic: the third column is the scaled slot duration
    np.testing.assert_allclose(adv[:, 2], -traj.durations / lrn.scales[2])
    assert "backward_critic" not in lrn.networks()


@given(st.lists(st.floats(0, 3), min_size=3, max_size=3), st.lists(st.floats(0, 3), min_size=3, max_size=3))
def test_scalarization_linear_in_weights(w1, w2):
    lrn = FBMOAC(small_env(), small_cfg())
    adv = np.random.default_rng(4).normal(size=(8, 3))
    lrn.moments.update(adv)
    lrn.weights = np.array(w1)
    s1 = lrn.scalarize(adv, update_moments=False)
    lrn.weights = np.array(w2)
    s2 = lrn.scalarize(adv, update_moments=False)
    lrn.weights = np.array(w1) + np.array(w2)
    np.testing.assert_allclose(lrn.scalarize(adv, update_moments=False), s1 + s2, atol=1e-9)


def test_running_moments_ema():
    m = RunningMoments.create(2, 0.9)
    batch = np.array([[1.0, 2.0], [3.0, 6.0]])
    m.update(batch)
    np.testing.assert_allclose(m.mean, [0.2, 0.4])
    np.testing.assert_allclose(m.var, [0.9 + 0.1 * 1.0, 0.9 + 0.1 * 4.0])
    np.testing.assert_allclose(m.normalize(np.array([0.2, 0.4])), [0.0, 0.0], atol=1e-12)


def test_zero_advantage_leaves_entropy_gradient_only():
    lrn = FBMOAC(small_env(), small_cfg(entropy_coef=0.5))
    traj = lrn.collect(0)
    feats = np.stack([i[0] for i in traj.info])
    raws = np.stack([i[1] for i in traj.info])
    choices = np.array([i[2] for i in traj.info])
    g0, _, _ = lrn.actor_gradient(feats, raws, choices, np.zeros(len(feats)))
    from fbcast.nn import mlp_backward, mlp_forward
    from fbcast.policy import entropy_terms
    out, cache = mlp_forward(lrn.head.actor, feats)
    _, g_ent = entropy_terms(lrn.head, out)
    want = mlp_backward(lrn.head.actor, cache, -0.5 * g_ent / len(feats))
    for (a, b), (c, d) in zip(g0, want):
        np.testing.assert_allclose(a, c)
        np.testing.assert_allclose(b, d)


def test_zero_learning_rates_freeze_parameters():
    lrn = FBMOAC(small_env(), small_cfg(lr_actor=0.0, lr_forward=0.0, lr_backward=0.0))
    before = {k: v.flat() for k, v in lrn.networks().items()}
    lrn.train(3)
    for k, v in lrn.networks().items():
        np.testing.assert_array_equal(v.flat(), before[k])


def test_training_changes_parameters():
    lrn = FBMOAC(small_env(), small_cfg(lr_actor=1e-2))
    before = lrn.head.actor.flat()
    lrn.train(2)
    assert not np.array_equal(lrn.head.actor.flat(), before)


def test_training_deterministic(tmp_path):
    a = FBMOAC(small_env(), small_cfg())
    b = FBMOAC(small_env(), small_cfg())
    a.train(4, tmp_path / "a.csv")
    b.train(4, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    np.testing.assert_array_equal(a.head.actor.flat(), b.head.actor.flat())
    c = FBMOAC(small_env(), small_cfg(seed=4))
    c.train(4)
    assert not np.array_equal(a.head.actor.flat(), c.head.actor.flat())


def test_episode_csv_layout(tmp_path):
    lrn = FBMOAC(small_env(), small_cfg(weights=(0.0, 0.0, 1.0)))
    lrn.train(3, tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "# schema=fbcast-episodes/1"
    assert lines[1].split(",") == EPISODE_COLUMNS
    assert len(lines) == 5
    st_ = lrn.history[-1]
    # latency-only preference: the scalarized value only sees r_lat
    assert st_.scalarized == pytest.approx(-st_.discounted[2] / lrn.reference[2])


def test_untrained_scalarized_near_minus_weight_sum():
    lrn = FBMOAC(small_env(), small_cfg(lr_actor=0.0, lr_forward=0.0, lr_backward=0.0))
    vals = [s.scalarized for s in lrn.train(10)]
    assert -6.0 < np.mean(vals) < -0.5


def test_dominates():
    assert dominates([1, 2, 3], [1, 2, 4])
    assert not dominates([1, 2, 3], [1, 2, 3])
    assert not dominates([0, 2, 5], [1, 2, 4])


def test_pareto_eval_and_evaluate():
    env = small_env()
    good = FBMOAC(env, small_cfg()).policy()
    rep = pareto_eval({"x": good, "y": good}, env, [0, 1])
    assert rep.dominance == []
    np.testing.assert_allclose(rep.costs[0], evaluate(good, env, [0, 1]))
    assert not rep.dominated("x")

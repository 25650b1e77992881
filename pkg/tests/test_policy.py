import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fbcast.dynamics import ForwardState
from fbcast.policy import (
    ALPHA_FLOOR, HarmonicMenu, InfeasibleError, PolicyHead, entropy_terms, log_prob_and_grad,
    log_prob_terms, mean_action, sample_action, state_features, transform_alpha, transform_cache,
)
from fbcast.nn import mlp_forward

from oracles import brute_force_projection


def _raw_and_cap(max_n=6):
    return st.integers(1, max_n).flatmap(lambda n: st.tuples(
        arrays(np.float64, n, elements=st.floats(-3, 3)), st.floats(0, 1).map(lambda f: f * n)))


@given(_raw_and_cap())
def test_projection_matches_brute_force(args):
    y, C = args
    x = transform_cache(y, C)
    ref = brute_force_projection(y, C)
    np.testing.assert_allclose(x, ref, atol=1e-9)


@given(_raw_and_cap(12))
def test_projection_feasible_and_idempotent(args):
    y, C = args
    x = transform_cache(y, C)
    assert abs(x.sum() - C) < 1e-9
    assert x.min() >= 0.0 and x.max() <= 1.0
    np.testing.assert_allclose(transform_cache(x, C), x, atol=1e-9)


@given(arrays(np.float64, 5, elements=st.floats(-3, 3)), st.floats(-2, 2))
def test_projection_shift_invariant(y, c):
    np.testing.assert_allclose(transform_cache(y + c, 2.0), transform_cache(y, 2.0), atol=1e-9)


def test_projection_edges():
    y = np.array([0.3, -1.0, 2.0])
    np.testing.assert_array_equal(transform_cache(y, 0.0), np.zeros(3))
    np.testing.assert_array_equal(transform_cache(y, 3.0), np.ones(3))
    np.testing.assert_allclose(transform_cache(np.array([0.9, 0.1]), 1.0), [0.9, 0.1])
    np.testing.assert_allclose(transform_cache(np.array([5.0, 0.0, 0.0]), 1.0), [1.0, 0.0, 0.0])
    with pytest.raises(InfeasibleError):
        transform_cache(y, 3.5)
    with pytest.raises(InfeasibleError):
        transform_cache(y, -0.1)


@given(arrays(np.float64, 8, elements=st.floats(-700, 700)))
def test_alpha_floor(raw):
    a = transform_alpha(raw)
    assert np.all(a >= ALPHA_FLOOR)
    assert np.all(np.isfinite(a))


def test_alpha_softplus_value():
    assert transform_alpha([0.0])[0] == pytest.approx(np.log(2) + ALPHA_FLOOR)


def test_menu_validation():
    with pytest.raises(ValueError):
        HarmonicMenu((1, 1, 2))
    with pytest.raises(ValueError):
        HarmonicMenu((0, 2))
    assert len(HarmonicMenu()) == 9


def test_state_features():
    f = state_features([0.5, 0.25, 0.25], 3, 12)
    np.testing.assert_allclose(f, [1.5, 0.75, 0.75, 0.25])


def _head(N=3, seed=0):
    head = PolicyHead.create(N, 1.0, (6,), seed=seed)
    rng = np.random.default_rng(seed)
    # move log-stds off the clip boundaries and randomize the output bias
    head.actor.biases[-1][:] += rng.normal(0, 0.3, size=head.out_dim)
    return head


@given(st.integers(0, 2**31), st.integers(2, 5))
def test_log_prob_gradient_finite_differences(seed, N):
    head = _head(N, seed)
    rng = np.random.default_rng(seed + 1)
    feats = rng.normal(size=N + 1)
    out, _ = mlp_forward(head.actor, feats)
    raw = head.split(out)[0] + rng.normal(0, 0.2, size=2 * N)
    choice = int(rng.integers(len(head.menu)))
    _, grad = log_prob_terms(head, out, raw, choice)
    for i in range(out.size):
        e = np.zeros_like(out)
        e[i] = 1e-6
        up, _ = log_prob_terms(head, out + e, raw, choice)
        dn, _ = log_prob_terms(head, out - e, raw, choice)
        fd = (up - dn) / 2e-6
        assert abs(fd - grad[i]) <= 1e-5 * max(1.0, abs(fd))


@given(st.integers(0, 2**31))
def test_entropy_gradient_finite_differences(seed):
    head = _head(3, seed)
    out, _ = mlp_forward(head.actor, np.random.default_rng(seed).normal(size=4))
    _, grad = entropy_terms(head, out)
    for i in range(out.size):
        e = np.zeros_like(out)
        e[i] = 1e-6
        fd = (entropy_terms(head, out + e)[0] - entropy_terms(head, out - e)[0]) / 2e-6
        assert abs(fd - grad[i]) <= 1e-5 * max(1.0, abs(fd))


def test_entropy_gaussian_part():
    head = PolicyHead.create(2, 1.0, (4,))
    out = np.zeros(head.out_dim)
    out[4:8] = [-1.0, 0.0, 0.5, 1.0]
    ent, _ = entropy_terms(head, out)
    gauss = sum(ls + 0.5 + 0.5 * np.log(2 * np.pi) for ls in out[4:8])
    assert ent == pytest.approx(gauss + np.log(len(head.menu)))


def test_parameter_gradient_matches_output_gradient():
    head = _head(3, 5)
    feats = np.random.default_rng(1).normal(size=4)
    raw = np.random.default_rng(2).normal(size=6)
    _, grads = log_prob_and_grad(head, feats, raw, 4)
    out, _ = mlp_forward(head.actor, feats)
    _, g = log_prob_terms(head, out, raw, 4)
    np.testing.assert_allclose(grads[-1][1], g)
    with pytest.raises(ValueError):
        log_prob_and_grad(head, feats, raw[:4], 4)


def test_sampled_actions_are_feasible_and_reproducible():
    head = PolicyHead.create(10, 2.5, (8,), seed=3)
    feats = state_features(np.full(10, 0.1), 0, 16)
    a1, (raw1, c1), lp1 = sample_action(head, feats, np.random.default_rng(9))
    a2, (raw2, c2), lp2 = sample_action(head, feats, np.random.default_rng(9))
    np.testing.assert_array_equal(raw1, raw2)
    assert c1 == c2 and lp1 == lp2
    a1.validate(2.5)
    assert a1.n_hb in head.menu.values
    lp, _ = log_prob_and_grad(head, feats, raw1, c1)
    assert lp == pytest.approx(lp1)


def test_deterministic_head_uses_mean():
    head = PolicyHead.create(4, 1.0, (5,), seed=2)
    head.deterministic = True
    st_ = ForwardState(np.full(4, 0.25), 0)
    a, extra = head.act(st_, 8, np.random.default_rng(0))
    b = mean_action(head, head.features(st_, 8))
    assert extra is None
    np.testing.assert_array_equal(a.p_cach, b.p_cach)
    # a zero-ish network proposes a near-uniform placement
    np.testing.assert_allclose(a.p_cach, 0.25, atol=0.05)

"""Quick invariant checks runnable without pytest (``fbcast selftest``).

Each check returns ``(passed, detail)``. They are small, seeded versions of
the property tests in the test-suite.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .config import ExperimentConfig
from .dynamics import ForwardState, forward_step, latency_sequence, reversed_latency
from .netmodel import SlotAction, harmonic_number, mc_outage_oracle, outage_analytic
from .nn import MlpParams, mlp_backward, mlp_forward
from .policy import PolicyHead, log_prob_and_grad, transform_cache


def check_harmonic(cfg, rng):
    h = harmonic_number(620)
    d = 3600.0 / 620 / 2
    return abs(h - 7.0) < 0.01 and 2.8 <= d <= 3.0, f"H(620)={h:.5f} d/2={d:.3f}s"


def check_forward_conservation(cfg, rng):
    worst = 0.0
    for N in (2, 10, 200):
        for _ in range(50):
            p = rng.dirichlet(np.ones(N))
            pop = rng.dirichlet(np.ones(N))
            o = rng.uniform(size=N)
            nxt = forward_step(ForwardState(p, 0), o, pop).p_req
            worst = max(worst, abs(nxt.sum() - 1.0))
    return worst < 1e-9, f"max |sum-1| = {worst:.2e}"


def check_backward_boundary(cfg, rng):
    T, N, d = 12, 3, 7.0
    full = latency_sequence(np.ones((T, N)), np.full(T, d))
    want = (T - np.arange(T))[:, None] * d
    none = latency_sequence(np.zeros((T, N)), np.full(T, d))
    o = rng.uniform(size=(T, N))
    durations = rng.uniform(1, 10, size=T)
    rev = reversed_latency(o, durations)[::-1]
    ok = (np.array_equal(full, np.broadcast_to(want, full.shape))
          and np.all(none == d / 2)
          and np.allclose(rev, latency_sequence(o, durations), rtol=0, atol=1e-12))
    return bool(ok), "full-outage, no-outage and reversed recursion"


def check_projection(cfg, rng):
    from scipy.optimize import minimize
    worst = 0.0
    for _ in range(20):
        N = int(rng.integers(2, 6))
        C = float(rng.uniform(0.2, N - 0.2))
        y = rng.normal(0.3, 0.8, size=N)
        x = transform_cache(y, C)
        res = minimize(lambda z: 0.5 * np.sum((z - y) ** 2), np.full(N, C / N),
                       jac=lambda z: z - y, bounds=[(0, 1)] * N,
                       constraints=[{"type": "eq", "fun": lambda z: z.sum() - C}],
                       method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
        worst = max(worst, float(np.abs(res.x - x).max()))
    return worst < 1e-6, f"max deviation from QP solver {worst:.2e}"


def check_mlp_gradient(cfg, rng):
    p = MlpParams.init((4, 6, 3), int(rng.integers(1 << 30)))
    x = rng.normal(size=(5, 4))
    g = rng.normal(size=(5, 3))
    grads = mlp_backward(p, mlp_forward(p, x)[1], g)
    worst = 0.0
    h = 1e-6
    for layer, (W, _) in enumerate(zip(p.weights, p.biases)):
        for idx in itertools.islice(np.ndindex(W.shape), 0, None, 3):
            old = W[idx]
            W[idx] = old + h
            up = np.sum(mlp_forward(p, x)[0] * g)
            W[idx] = old - h
            dn = np.sum(mlp_forward(p, x)[0] * g)
            W[idx] = old
            fd = (up - dn) / (2 * h)
            an = grads[layer][0][idx]
            worst = max(worst, abs(fd - an) / max(1e-8, abs(fd) + abs(an)))
    return worst < 1e-4, f"max relative error {worst:.2e}"


def check_logprob_gradient(cfg, rng):
    head = PolicyHead.create(3, 1.0, (5,), seed=int(rng.integers(1 << 30)))
    feats = rng.normal(size=4)
    raw = rng.normal(size=6)
    choice = 2
    _, grads = log_prob_and_grad(head, feats, raw, choice)
    b = head.actor.biases[-1]
    worst = 0.0
    for i in range(b.size):
        if 6 <= i < 12 and not (-5.0 < b[i] < 2.0):
            continue
        old = b[i]
        b[i] = old + 1e-6
        up, _ = log_prob_and_grad(head, feats, raw, choice)
        b[i] = old - 1e-6
        dn, _ = log_prob_and_grad(head, feats, raw, choice)
        b[i] = old
        fd = (up - dn) / 2e-6
        an = grads[-1][1][i]
        worst = max(worst, abs(fd - an) / max(1e-8, abs(fd) + abs(an)))
    return worst < 1e-4, f"max relative error {worst:.2e}"


def check_outage_oracle(cfg, rng):
    from .harness import grid_point_config
    radio, action = grid_point_config(cfg, 0.2, 2.0, 100.0, 0.5)
    a = outage_analytic(radio, action, 0)
    mc, se = mc_outage_oracle(radio, action, 0, 4000, int(rng.integers(1 << 62)))
    return abs(mc - a) < 4 * se, f"analytic {a:.4f} mc {mc:.4f} se {se:.4f}"


CHECKS = {
    "harmonic_numbers": check_harmonic,
    "forward_conservation": check_forward_conservation,
    "backward_boundary": check_backward_boundary,
    "projection_optimality": check_projection,
    "mlp_gradient": check_mlp_gradient,
    "logprob_gradient": check_logprob_gradient,
    "outage_oracle": check_outage_oracle,
}


def run_selftest(cfg: ExperimentConfig):
    rows = []
    for name, fn in CHECKS.items():
        rng = np.random.default_rng([cfg.seed, len(rows)])
        try:
            ok, detail = fn(cfg, rng)
        except Exception as exc:  # report, keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        rows.append((name, bool(ok), detail))
    return rows

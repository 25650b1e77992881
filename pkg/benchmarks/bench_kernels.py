"""Compiled kernels vs the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-N wall time per kernel and backend, and checks that the
two backends return identical results on every benchmark input.
"""
import argparse
import math
import time

import numpy as np

from fbcast import _fallback
from fbcast.config import preset
from fbcast.harness import grid_point_config
from fbcast.netmodel import gamma_R, harmonic_number, mc_disk

try:
    from fbcast import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    best, out = math.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def mc_args():
    """Kernel arguments of the mid-range outage validation point (p=0.2, alpha=2, lambda=100)."""
    cfg = preset("paper")
    radio, action = grid_point_config(cfg, 0.2, 2.0, 100.0, 0.5)
    lam = radio.lambda_bs * float(action.p_cach[0])
    gamma_tx = gamma_R(radio, harmonic_number(action.n_hb)) / float(np.sum(1.0 / action.alpha))
    thr = 2.0 ** action.alpha[0] - 1.0
    rho, tail = mc_disk(radio, lam, thr / gamma_tx)
    return lam, lam * math.pi * rho * rho, radio.path_loss_exp / 2.0, gamma_tx, thr, tail


def cases():
    args = mc_args()
    # one outage validation grid point's worth of samples
    yield "mc_outage_count 1e5", lambda m: m.mc_outage_count(7, 0, 100_000, *args)
    rng = np.random.default_rng(0)
    raws = [rng.normal(size=200) for _ in range(200)]
    # one episode of cache projections with the default preset sizes
    yield "capped_simplex_shift 200x(N=200)", lambda m: [m.capped_simplex_shift(r, 10.0, 1e-10) for r in raws]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':34s} {'python':>10s} {'compiled':>10s} {'speedup':>8s}")
    for name, fn in cases():
        tp, out_p = best_of(lambda: fn(_fallback), args.repeat)
        if _kernels is None:
            print(f"{name:34s} {tp:10.4f} {'n/a':>10s}")
            continue
        tc, out_c = best_of(lambda: fn(_kernels), args.repeat)
        if out_p != out_c:
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:34s} {tp:10.4f} {tc:10.4f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()

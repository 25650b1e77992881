"""Compiled kernels against the numpy fallback."""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fbcast import _fallback, kernels

try:
    from fbcast import _kernels
except ImportError:
    _kernels = None

needs_ext = pytest.mark.skipif(_kernels is None, reason="compiled kernels not built")


def test_backend_flag(monkeypatch):
    assert kernels.BACKEND in ("compiled", "python")
    if kernels.BACKEND == "python":
        assert kernels.mc_outage_count is _fallback.mc_outage_count


@needs_ext
@pytest.mark.parametrize("seed,lam,gamma_tx,thr", [
    (1, 20.0, 0.01, 3.0), (9, 5.0, 0.3, 1.0), (77, 80.0, 0.002, 0.4), (2**64 - 1, 10.0, 0.05, 2.0),
])
def test_mc_counts_identical(seed, lam, gamma_tx, thr):
    area = lam * math.pi * 25.0
    c = _kernels.mc_outage_count(seed, 0, 3000, lam, area, 2.0, gamma_tx, thr, 1e-3)
    f = _fallback.mc_outage_count(seed, 0, 3000, lam, area, 2.0, gamma_tx, thr, 1e-3)
    assert c == f


@needs_ext
def test_mc_counts_identical_on_sub_ranges():
    args = (40.0, 40.0 * math.pi * 16.0, 1.75, 0.02, 1.5, 1e-3)
    for a, b in ((0, 1), (5, 400), (1000, 1333)):
        assert _kernels.mc_outage_count(3, a, b, *args) == _fallback.mc_outage_count(3, a, b, *args)


@needs_ext
@given(st.integers(1, 40).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=st.floats(-5, 5)), st.floats(0.01, 0.99).map(lambda f: f * n))))
def test_simplex_shift_identical(args):
    raw, C = args
    assert _kernels.capped_simplex_shift(raw, C, 1e-10) == _fallback.capped_simplex_shift(raw, C, 1e-10)

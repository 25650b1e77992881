"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable or when
``FBCAST_PURE=1`` is set. Results match the compiled kernels up to
last-ulp differences in ``log``/``pow`` between libm and numpy.
"""
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


def mix64(z):
    """splitmix64 finalizer, elementwise on uint64 arrays (wrapping)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def sample_keys(seed, start, stop):
    """Per-sample stream keys; sample ``s`` always gets the same key."""
    seed_m = mix64(np.uint64(seed))
    idx = np.arange(start + 1, stop + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(seed_m ^ (idx * GOLDEN))


def uniforms(keys, first, count):
    """Draws ``first .. first+count-1`` of each stream, in (0, 1)."""
    j = np.arange(first + 1, first + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = mix64(keys[:, None] + j[None, :] * GOLDEN)
    return ((x >> np.uint64(11)).astype(np.float64) + 0.5) * _INV53


def mc_outage_count(seed, start, stop, lam, area_count, half_exp,
                    gamma_tx, threshold, tail):
    """Count outage events for samples ``start .. stop-1``.

    Each sample walks the PPP outward from the origin: even draws are
    unit-mean exponential area increments (so ``pi*lam*r_k**2`` is the
    running sum), odd draws are Rayleigh power gains. Points beyond the
    disk holding ``area_count`` expected points are replaced by the
    deterministic ``tail`` mean.
    """
    if stop <= start:
        return 0
    chunk = max(1, min(stop - start, int(1_000_000 // max(area_count, 1.0))))
    kmax = int(area_count + 8.0 * np.sqrt(area_count) + 16)
    scale = np.pi * lam
    count = 0
    for lo in range(start, stop, chunk):
        hi = min(lo + chunk, stop)
        keys = sample_keys(seed, lo, hi)
        agg = _aggregate(keys, kmax, area_count, scale, half_exp)
        total = gamma_tx * (agg + tail)
        count += int(np.count_nonzero(total <= threshold))
    return count


def _aggregate(keys, kmax, area_count, scale, half_exp):
    while True:
        u = uniforms(keys, 0, 2 * kmax)
        area = np.cumsum(-np.log(u[:, 0::2]), axis=1)
        if np.all(area[:, -1] > area_count):
            break
        kmax *= 2
    gain = -np.log(u[:, 1::2])
    inside = area <= area_count
    contrib = np.where(inside, gain * np.power(area / scale, -half_exp), 0.0)
    return contrib.sum(axis=1)


def capped_simplex_shift(raw, total, tol):
    """Bisection for the shift ``tau`` with sum(clip(raw - tau, 0, 1)) = total."""
    raw = np.asarray(raw, dtype=np.float64)
    lo = raw.min() - 1.0
    hi = raw.max()
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if np.clip(raw - mid, 0.0, 1.0).sum() > total:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)

"""Physical-layer model of orthogonal multipoint multicast (OMPMC).

Harmonic broadcasting arithmetic, the per-file outage probability of a
typical user served by every base station caching the file, total
bandwidth consumption, and a Monte-Carlo spatial sampler that checks the
closed-form outage independently.

All quantities are linear-scale SI. Distances are normalized to a 1 km
reference, so ``lambda_bs`` is in points per km^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from . import kernels

CACHE_SUM_TOL = 1e-9


class UnsupportedModelError(ValueError):
    """The closed-form outage only exists for path-loss exponent 4."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class RadioConfig:
    """Link budget and library parameters, linear scale.

    ``ref_loss`` is the path loss at the 1 km reference distance; received
    power at distance r (km) is ``p_tx * antenna_gain / ref_loss * r**-e``.
    """

    lambda_bs: float = 100.0
    p_tx: float = dbm_to_watts(23.0)
    n0: float = dbm_to_watts(-174.0 + 9.0)
    antenna_gain: float = db_to_linear(8.0)
    path_loss_exp: float = 4.0
    rate_R: float = 1e6
    file_len_L: float = 600.0
    num_files_N: int = 200
    cache_cap_C: float = 10.0
    ref_loss: float = db_to_linear(128.1)

    def __post_init__(self):
        for name in ("lambda_bs", "p_tx", "n0", "antenna_gain", "path_loss_exp",
                     "rate_R", "file_len_L", "ref_loss"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if self.num_files_N < 1:
            raise ValueError(f"num_files_N must be >= 1, got {self.num_files_N}")
        if not 1 <= self.cache_cap_C <= self.num_files_N:
            raise ValueError(
                f"cache_cap_C={self.cache_cap_C} must lie in [1, num_files_N={self.num_files_N}]"
            )

    @classmethod
    def from_db(cls, *, p_tx_dbm=23.0, n0_dbm_hz=-174.0, noise_figure_db=9.0,
                antenna_gain_dbi=8.0, ref_path_loss_db=128.1, **linear):
        """Build a config from link-budget values in dB units."""
        return cls(
            p_tx=dbm_to_watts(p_tx_dbm),
            n0=dbm_to_watts(n0_dbm_hz + noise_figure_db),
            antenna_gain=db_to_linear(antenna_gain_dbi),
            ref_loss=db_to_linear(ref_path_loss_db),
            **linear,
        )

    @property
    def snr_per_hz(self) -> float:
        """Received power at 1 km over noise density, in Hz."""
        return self.p_tx * self.antenna_gain / (self.ref_loss * self.n0)


@dataclass(frozen=True)
class SlotAction:
    """Per-slot control: cache probabilities, spectral efficiencies, HB index."""

    p_cach: np.ndarray
    alpha: np.ndarray
    n_hb: int

    def validate(self, cache_cap: float | None = None) -> None:
        p = np.asarray(self.p_cach)
        a = np.asarray(self.alpha)
        if p.shape != a.shape or p.ndim != 1:
            raise ValueError(f"p_cach {p.shape} and alpha {a.shape} must be equal-length vectors")
        if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
            raise ValueError("p_cach entries must lie in [0, 1]")
        if cache_cap is not None and abs(p.sum() - cache_cap) > CACHE_SUM_TOL:
            raise ValueError(f"sum(p_cach)={p.sum()!r} differs from C={cache_cap}")
        if not np.all(np.isfinite(a)) or a.min() <= 0.0:
            raise ValueError("alpha entries must be positive")
        if int(self.n_hb) != self.n_hb or self.n_hb < 1:
            raise ValueError(f"n_hb must be a positive integer, got {self.n_hb!r}")


_H_TABLE = np.zeros(1)


def _harmonic_table(m: int) -> np.ndarray:
    """Prefix sums H(0..m). np.cumsum adds left to right, matching direct summation."""
    global _H_TABLE
    if m >= len(_H_TABLE):
        size = max(m + 1, 2 * len(_H_TABLE))
        _H_TABLE = np.concatenate(([0.0], np.cumsum(1.0 / np.arange(1, size))))
    return _H_TABLE


def harmonic_number(m: int) -> float:
    """H(m) = 1 + 1/2 + ... + 1/m."""
    if int(m) != m or m < 1:
        raise ValueError(f"harmonic number needs an integer m >= 1, got {m!r}")
    return float(_harmonic_table(int(m))[int(m)])


def inverse_harmonic(target_nhb: float) -> int:
    """Largest m with H(m) <= target_nhb."""
    if not target_nhb >= 1.0:
        raise ValueError(f"target harmonic number must be >= 1, got {target_nhb!r}")
    m = 1
    while True:
        table = _harmonic_table(2 * m)
        if table[-1] > target_nhb:
            return int(np.searchsorted(table, target_nhb, side="right") - 1)
        m = len(table)


def slot_duration(file_len_L: float, m: int) -> float:
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m!r}")
    return file_len_L / m


def _check_alpha(alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 1 or alpha.size == 0:
        raise ValueError("alpha must be a non-empty vector")
    if not np.all(alpha > 0):
        raise ValueError("spectral efficiencies must be positive")
    return alpha


def eta(alpha, n: int) -> float:
    alpha = _check_alpha(alpha)
    return float((2.0 ** alpha[n] - 1.0) * np.sum(1.0 / alpha))


def eta_all(alpha) -> np.ndarray:
    alpha = _check_alpha(alpha)
    return (2.0 ** alpha - 1.0) * np.sum(1.0 / alpha)


def gamma_R(cfg: RadioConfig, n_hb_value: float) -> float:
    if not n_hb_value >= 1.0:
        raise ValueError(f"harmonic number must be >= 1, got {n_hb_value!r}")
    return cfg.snr_per_hz / (cfg.rate_R * n_hb_value)


def _require_closed_form(cfg: RadioConfig) -> None:
    if cfg.path_loss_exp != 4.0:
        raise UnsupportedModelError(
            f"closed-form outage requires path_loss_exp=4 (got {cfg.path_loss_exp}); "
            "use mc_outage_oracle for other exponents"
        )


def outage_all(cfg: RadioConfig, action: SlotAction) -> np.ndarray:
    """Closed-form outage probability of every file under ``action``."""
    _require_closed_form(cfg)
    g = gamma_R(cfg, harmonic_number(action.n_hb))
    arg = (math.pi ** 2 * cfg.lambda_bs / 4.0) * np.asarray(action.p_cach) * np.sqrt(
        g / eta_all(action.alpha)
    )
    return erfc(arg)


def outage_analytic(cfg: RadioConfig, action: SlotAction, n: int) -> float:
    _require_closed_form(cfg)
    g = gamma_R(cfg, harmonic_number(action.n_hb))
    arg = (math.pi ** 2 * cfg.lambda_bs / 4.0) * action.p_cach[n] * math.sqrt(
        g / eta(action.alpha, n)
    )
    return math.erfc(arg)


def bandwidth_total(cfg: RadioConfig, action: SlotAction) -> float:
    alpha = _check_alpha(action.alpha)
    # sorted so the sum is permutation invariant bit-for-bit
    return harmonic_number(action.n_hb) * float(np.sum(np.sort(cfg.rate_R / alpha)))


# Disk truncation: the mean aggregate power of points beyond the disk is at
# most this fraction of the decoding threshold; that mean is added back.
MC_TAIL_FRACTION = 1e-3


def mc_disk(cfg: RadioConfig, lam: float, threshold_power: float):
    """Disk radius and tail mean for a PPP of intensity ``lam``.

    ``threshold_power`` is the aggregate received power (in units of
    ``gamma_tx``) at which decoding just fails.
    """
    e = cfg.path_loss_exp
    if e <= 2.0:
        raise ValueError("aggregate interference-free power diverges for path_loss_exp <= 2")
    # tail mean beyond rho: 2*pi*lam*rho**(2-e)/(e-2)
    bound = MC_TAIL_FRACTION * threshold_power
    rho = (2.0 * math.pi * lam / ((e - 2.0) * bound)) ** (1.0 / (e - 2.0))
    tail = 2.0 * math.pi * lam * rho ** (2.0 - e) / (e - 2.0)
    return rho, tail


def mc_outage_oracle(cfg: RadioConfig, action: SlotAction, n: int,
                     samples: int, seed: int) -> tuple[float, float]:
    """Monte-Carlo outage of file ``n`` for a typical user at the origin.

    Returns ``(empirical outage, binomial standard error)``. Deterministic
    in ``seed``; sample ``s`` uses its own RNG stream so the estimate does
    not depend on how samples are chunked.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    alpha = _check_alpha(action.alpha)
    lam = cfg.lambda_bs * float(action.p_cach[n])
    if lam <= 0.0:
        return 1.0, 0.0
    gamma_tx = gamma_R(cfg, harmonic_number(action.n_hb)) / float(np.sum(1.0 / alpha))
    threshold = 2.0 ** alpha[n] - 1.0
    rho, tail = mc_disk(cfg, lam, threshold / gamma_tx)
    area_count = lam * math.pi * rho * rho
    hits = kernels.mc_outage_count(
        int(seed) & 0xFFFFFFFFFFFFFFFF, 0, int(samples), lam, area_count,
        cfg.path_loss_exp / 2.0, gamma_tx, threshold, tail,
    )
    p = hits / samples
    return p, math.sqrt(p * (1.0 - p) / samples)

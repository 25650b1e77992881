"""Reference policies: rule-based LFU multicast, forward-only learners, unicast.

The unicast model is a stand-in: nearest-BS association, a dedicated
bandwidth slice per request, Rayleigh fading, full-reuse interference from
all other base stations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfcx

from .dynamics import ForwardState, StreamingEnv, rollout
from .fbmoac import ActorCritic, LearnerConfig
from .netmodel import RadioConfig, SlotAction, harmonic_number, inverse_harmonic


# -- LFU ----------------------------------------------------------------------

@dataclass
class LfuState:
    freq: np.ndarray
    alpha_star: float
    m_star: int

    @classmethod
    def create(cls, num_files: int, alpha_star: float, m_star: int) -> "LfuState":
        if alpha_star <= 0 or m_star < 1:
            raise ValueError(f"need alpha* > 0 and m* >= 1, got {alpha_star}, {m_star}")
        return cls(np.zeros(num_files), float(alpha_star), int(m_star))


def lfu_policy_step(state: LfuState, obs: ForwardState, C: float) -> SlotAction:
    """Accumulate p_req and cache the C most requested files so far.

    Ties go to the lower file index. A fractional capacity puts the
    remainder on the next file in that order.
    """
    state.freq += obs.p_req
    N = state.freq.size
    if not 0 <= C <= N:
        raise ValueError(f"cache capacity C={C} must lie in [0, N={N}]")
    order = np.lexsort((np.arange(N), -state.freq))  # last key is primary
    full = int(math.floor(C))
    p_cach = np.zeros(N)
    p_cach[order[:full]] = 1.0
    if full < N and C > full:
        p_cach[order[full]] = C - full
    return SlotAction(p_cach, np.full(N, state.alpha_star), state.m_star)


@dataclass
class LfuPolicy:
    """ActionSource wrapper; the frequency table resets at slot 0."""

    num_files: int
    cache_cap: float
    alpha_star: float
    m_star: int
    state: LfuState = field(init=False)

    def __post_init__(self):
        self.state = LfuState.create(self.num_files, self.alpha_star, self.m_star)

    def act(self, state: ForwardState, num_slots: int, rng):
        if state.slot == 0:
            self.state.freq[:] = 0.0
        return lfu_policy_step(self.state, state, self.cache_cap), None


def matched_resources(policy, env: StreamingEnv, eval_seeds) -> tuple[float, int]:
    """(alpha*, m*) matching a policy's time-averaged resource use.

    alpha* keeps the mean per-slot sum of 1/alpha; m* is the harmonic index
    whose H(m) is closest from below to the mean H(m_t).
    """
    inv_alpha, h = [], []
    for s in eval_seeds:
        traj = rollout(policy, env.track(10_000_000 + int(s)), env.radio,
                       np.random.default_rng([int(s), 99]))
        inv_alpha.append((1.0 / traj.alpha).sum(axis=1).mean())
        h.append(np.mean([harmonic_number(int(m)) for m in traj.n_hb]))
    alpha_star = env.num_files / float(np.mean(inv_alpha))
    m_star = max(1, inverse_harmonic(float(np.mean(h))))
    return alpha_star, m_star


def lfu_matched(policy, env: StreamingEnv, eval_seeds) -> LfuPolicy:
    a, m = matched_resources(policy, env, eval_seeds)
    return LfuPolicy(env.num_files, env.radio.cache_cap_C, a, m)


# -- forward-only learners --------------------------------------------------------

class PPOLearner(ActorCritic):
    """Forward-only learner with the clipped surrogate, several epochs per episode."""

    variant = "ppo"

    def __init__(self, env, cfg, menu=None, clip_eps: float = 0.2, epochs: int = 4):
        super().__init__(env, cfg, backward=False, menu=menu)
        self.clip_eps = clip_eps
        self.epochs = epochs
        self._batch = None

    def update_actor(self, feats, raws, choices, scalar, logp_old) -> float:
        # first epoch: ratio is exactly 1, so this is the plain A2C gradient
        self._pending, entropy, _ = self.actor_gradient(feats, raws, choices, scalar, logp_old)
        self._batch = (feats, raws, choices, scalar, logp_old)
        return entropy

    def _apply_actor(self):
        super()._apply_actor()
        feats, raws, choices, scalar, logp_old = self._batch
        for _ in range(self.epochs - 1):
            self._pending, _, _ = self.actor_gradient(feats, raws, choices, scalar, logp_old)
            super()._apply_actor()
        self._batch = None


class A2CLearner(ActorCritic):
    variant = "a2c"

    def __init__(self, env, cfg, menu=None):
        super().__init__(env, cfg, backward=False, menu=menu)


def forward_only_learner(variant: str, env: StreamingEnv, cfg: LearnerConfig) -> ActorCritic:
    """Untrained forward-only learner; the slot duration stands in for latency."""
    if variant == "a2c":
        return A2CLearner(env, cfg)
    if variant == "ppo":
        return PPOLearner(env, cfg)
    raise ValueError(f"unknown forward-only variant {variant!r} (expected a2c or ppo)")


# -- unicast ------------------------------------------------------------------

@dataclass(frozen=True)
class UnicastConfig:
    lambda_ue: float = 1000.0     # users per km^2
    area: float = 1.0             # km^2 served
    target_outage: float = 0.05   # spectral efficiency is the largest meeting this

    def __post_init__(self):
        if not self.lambda_ue > 0:
            raise ValueError(f"lambda_ue must be > 0, got {self.lambda_ue}")
        if not self.area > 0:
            raise ValueError(f"area must be > 0, got {self.area}")
        if not 0.0 < self.target_outage < 1.0:
            raise ValueError(f"target_outage must lie in (0, 1), got {self.target_outage}")


def interference_factor(theta: float) -> float:
    """rho(theta) of full-reuse PPP interference, path-loss exponent 4."""
    r = math.sqrt(theta)
    return r * math.atan(r)


def unicast_outage(radio: RadioConfig, ucfg: UnicastConfig, alpha: float) -> float:
    """Nearest-BS Rayleigh outage of one request at spectral efficiency alpha.

    Every BS transmits on the same band (full reuse); each request gets its
    own slice of bandwidth R/alpha at the BS's full power spectral density,
    so the link budget does not depend on how many users share a BS and
    total bandwidth stays linear in lambda_ue. With x = r^2 ~ Exp(pi*lambda), threshold theta = 2^alpha - 1 and
    exponent 4, coverage is E[exp(-pi*lambda*rho*x - theta*x^2/gamma)]:
      P = (pi*lambda/b) * sqrt(pi/(4s)) * erfcx(1/(2 sqrt(s))),
      b = pi*lambda*(1 + rho), s = theta / (gamma * b^2).
    """
    if radio.path_loss_exp != 4.0:
        raise ValueError("unicast coverage formula needs path-loss exponent 4")
    gamma = radio.snr_per_hz * alpha / radio.rate_R
    theta = math.expm1(alpha * math.log(2.0))
    base = math.pi * radio.lambda_bs
    b = base * (1.0 + interference_factor(theta))
    s = theta / (gamma * b * b)
    cover = (base / b) * math.sqrt(math.pi / (4.0 * s)) * float(erfcx(1.0 / (2.0 * math.sqrt(s))))
    return min(1.0, max(0.0, 1.0 - cover))


def unicast_alpha(radio: RadioConfig, ucfg: UnicastConfig) -> float:
    """Largest spectral efficiency whose unicast outage stays at the target."""
    f = lambda a: unicast_outage(radio, ucfg, a) - ucfg.target_outage
    lo, hi = 1e-6, 1.0
    if f(lo) > 0:
        raise ValueError("unicast target outage unreachable even at vanishing rate")
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e3:
            raise ValueError("unicast spectral efficiency search diverged")
    return brentq(f, lo, hi, xtol=1e-12)


@dataclass
class UnicastTrace:
    r_qos: np.ndarray
    r_bw: np.ndarray
    r_lat: np.ndarray
    alpha_uc: float


def unicast_eval(ucfg: UnicastConfig, env: StreamingEnv, episode: int = 0) -> UnicastTrace:
    """Per-slot costs of serving every request on its own unicast link.

    Requests never wait, so latency is zero. Request probabilities follow
    the popularity track directly since no request is deferred.
    """
    radio = env.radio
    a = unicast_alpha(radio, ucfg)
    o = unicast_outage(radio, ucfg, a)
    p = env.track(episode).p_pop
    users = ucfg.lambda_ue * ucfg.area
    bw = users * p.sum(axis=1) * radio.rate_R / a
    qos = p @ np.full(p.shape[1], o)
    return UnicastTrace(qos, bw, np.zeros(len(bw)), a)


def unicast_costs(ucfg: UnicastConfig, env: StreamingEnv, eval_seeds) -> np.ndarray:
    """Mean undiscounted (r_qos, r_bw, r_lat) episode sums, like ``fbmoac.evaluate``."""
    rows = []
    for s in eval_seeds:
        tr = unicast_eval(ucfg, env, 10_000_000 + int(s))
        rows.append([tr.r_qos.sum(), tr.r_bw.sum(), tr.r_lat.sum()])
    return np.mean(rows, axis=0)

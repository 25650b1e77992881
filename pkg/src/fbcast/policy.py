"""Stochastic actor head and the maps from raw samples to feasible actions.

The actor emits Gaussian parameters for one raw cache score and one raw
spectral-efficiency score per file, plus categorical logits over a fixed
menu of harmonic indices. Log-probabilities live in raw space; the
projection onto the capped simplex and the softplus are deterministic
post-processing that the policy gradient never differentiates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dynamics import ForwardState
from .netmodel import SlotAction
from .nn import MlpParams, mlp_backward, mlp_forward

DEFAULT_MENU = (1, 2, 5, 10, 20, 50, 100, 200, 620)
LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
ALPHA_FLOOR = 0.05
PROJECTION_TOL = 1e-10
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class InfeasibleError(ValueError):
    pass


def transform_cache(raw, C: float) -> np.ndarray:
    """Euclidean projection onto {x : 0 <= x <= 1, sum(x) = C}."""
    raw = np.asarray(raw, dtype=np.float64)
    N = raw.size
    if C > N:
        raise InfeasibleError(f"cache capacity C={C} exceeds the number of files N={N}")
    if C < 0:
        raise InfeasibleError(f"cache capacity C={C} is negative")
    if C == N:
        return np.ones(N)
    if C == 0:
        return np.zeros(N)
    tau = kernels.capped_simplex_shift(raw, float(C), PROJECTION_TOL)
    # bisection fixes the active set; solve for the shift on it exactly
    shifted = raw - tau
    upper = shifted >= 1.0
    free = (shifted > 0.0) & ~upper
    n_free = np.count_nonzero(free)
    if n_free:
        tau = (raw[free].sum() - (C - np.count_nonzero(upper))) / n_free
    return np.clip(raw - tau, 0.0, 1.0)


def transform_alpha(raw, floor: float = ALPHA_FLOOR) -> np.ndarray:
    return np.logaddexp(0.0, np.asarray(raw, dtype=np.float64)) + floor


@dataclass(frozen=True)
class HarmonicMenu:
    values: tuple[int, ...] = DEFAULT_MENU

    def __post_init__(self):
        v = tuple(int(m) for m in self.values)
        if not v or v[0] < 1 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError(f"harmonic menu must be strictly increasing and >= 1, got {self.values}")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


@dataclass
class PolicyHead:
    """Actor network plus the fixed maps from its outputs to distributions.

    Output layout: ``[cache scores (N) | alpha scores (N) | log-std (2N) |
    harmonic logits (|menu|)]``. The Gaussian mean of raw cache score n is
    ``C/N + cache_gain * output[n]``, so a zero network proposes the
    uniform placement and small weight changes move it gently.
    """

    actor: MlpParams
    num_files: int
    cache_cap: float
    menu: HarmonicMenu = HarmonicMenu()
    alpha_floor: float = ALPHA_FLOOR
    cache_gain: float = 0.02
    deterministic: bool = False

    @classmethod
    def create(cls, num_files: int, cache_cap: float, hidden=(100,), menu=None,
               seed: int = 0, cache_log_std: float = -4.0, alpha_log_std: float = -1.0,
               alpha_bias: float = 1.0, cache_gain: float = 0.02):
        menu = menu or HarmonicMenu()
        N = num_files
        out = 4 * N + len(menu)
        actor = MlpParams.init((N + 1, *hidden, out), seed)
        actor.biases[-1][N:2 * N] = alpha_bias
        actor.biases[-1][2 * N:3 * N] = cache_log_std
        actor.biases[-1][3 * N:4 * N] = alpha_log_std
        return cls(actor, N, cache_cap, menu, cache_gain=cache_gain)

    @property
    def out_dim(self) -> int:
        return 4 * self.num_files + len(self.menu)

    def split(self, out):
        """``(mean, log_std, unclamped_mask, logits)`` from raw network outputs."""
        N = self.num_files
        mu = out[..., :2 * N].copy()
        mu[..., :N] = self.cache_cap / N + self.cache_gain * mu[..., :N]
        raw_log_std = out[..., 2 * N:4 * N]
        log_std = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
        inside = (raw_log_std > LOG_STD_MIN) & (raw_log_std < LOG_STD_MAX)
        return mu, log_std, inside, out[..., 4 * N:]

    def features(self, state: ForwardState, num_slots: int) -> np.ndarray:
        return state_features(state.p_req, state.slot, num_slots)

    def act(self, state: ForwardState, num_slots: int, rng):
        feats = self.features(state, num_slots)
        if self.deterministic:
            return mean_action(self, feats), None
        action, raw, logp = sample_action(self, feats, rng)
        return action, (feats, raw[0], raw[1], logp)


def state_features(p_req, slot: int, num_slots: int) -> np.ndarray:
    """Request probabilities scaled by N (so entries are O(1)) plus t/T."""
    p_req = np.asarray(p_req, dtype=np.float64)
    return np.append(p_req * p_req.size, slot / num_slots)


def _log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def to_action(head: PolicyHead, raw: np.ndarray, choice: int) -> SlotAction:
    N = head.num_files
    return SlotAction(
        transform_cache(raw[:N], head.cache_cap),
        transform_alpha(raw[N:], head.alpha_floor),
        head.menu.values[int(choice)],
    )


def sample_action(head: PolicyHead, feats, rng: np.random.Generator):
    """Returns ``(action, (raw, choice), log_prob)``."""
    out, _ = mlp_forward(head.actor, feats)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("actor produced non-finite outputs")
    mu, log_std, _, logits = head.split(out)
    raw = mu + np.exp(log_std) * rng.standard_normal(mu.shape)
    logp_cat = _log_softmax(logits)
    choice = int(rng.choice(len(logits), p=np.exp(logp_cat)))
    logp, _ = log_prob_terms(head, out, raw, np.array(choice))
    return to_action(head, raw, choice), (raw, choice), float(logp)


def mean_action(head: PolicyHead, feats) -> SlotAction:
    out, _ = mlp_forward(head.actor, feats)
    mu, _, _, logits = head.split(out)
    return to_action(head, mu, int(np.argmax(logits)))


def log_prob_terms(head: PolicyHead, out, raw, choice):
    """Log-probability and its gradient w.r.t. the actor outputs.

    Works on a single output row or a batch of rows (``choice`` then holds
    one menu index per row).
    """
    N = head.num_files
    mu, log_std, inside, logits = head.split(out)
    inv_var = np.exp(-2.0 * log_std)
    diff = raw - mu
    z2 = diff * diff * inv_var
    gauss = -0.5 * z2 - log_std - _HALF_LOG_2PI
    logp_cat = _log_softmax(logits)
    choice = np.asarray(choice)
    onehot = np.zeros_like(logits)
    np.put_along_axis(onehot, choice[..., None], 1.0, axis=-1)
    logp = gauss.sum(axis=-1) + (onehot * logp_cat).sum(axis=-1)

    grad = np.zeros_like(out)
    grad[..., :2 * N] = diff * inv_var
    grad[..., :N] *= head.cache_gain
    grad[..., 2 * N:4 * N] = (z2 - 1.0) * inside
    grad[..., 4 * N:] = onehot - np.exp(logp_cat)
    return logp, grad


def entropy_terms(head: PolicyHead, out):
    """Entropy of the raw-space distribution and its gradient w.r.t. outputs."""
    N = head.num_files
    _, log_std, inside, logits = head.split(out)
    logp_cat = _log_softmax(logits)
    p = np.exp(logp_cat)
    ent_cat = -(p * logp_cat).sum(axis=-1)
    ent = (log_std + 0.5 + _HALF_LOG_2PI).sum(axis=-1) + ent_cat
    grad = np.zeros_like(out)
    grad[..., 2 * N:4 * N] = 1.0 * inside
    grad[..., 4 * N:] = -p * (logp_cat + ent_cat[..., None])
    return ent, grad


def log_prob_and_grad(head: PolicyHead, feats, raw, choice):
    out, cache = mlp_forward(head.actor, feats)
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != out[..., :2 * head.num_files].shape:
        raise ValueError(f"raw sample shape {raw.shape} does not match the head")
    logp, g = log_prob_terms(head, out, raw, choice)
    return float(np.sum(logp)), mlp_backward(head.actor, cache, g)

"""Forward-backward multi-objective actor-critic.

Each episode runs in three phases:

1. forward pass: roll the policy through slots 0..T-1, recording samples;
2. backward pass: resolve expected latencies from the end of the episode;
3. learning: a forward critic scores the QoS and bandwidth costs along
   forward time, a backward critic scores the latency cost along reversed
   time, and the actor follows a preference-weighted sum of the
   per-objective advantages after EMA normalization.

Costs are divided by fixed units (see ``StreamingEnv.reward_scales``)
before they reach the critics.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import StreamingEnv, Trajectory, rollout
from .nn import AdamState, MlpParams, NonFiniteError, adam_step, mlp_backward, mlp_forward
from .policy import PolicyHead, entropy_terms, log_prob_terms, state_features

EPISODE_SCHEMA = "fbcast-episodes/1"
EPISODE_COLUMNS = ["episode", "r_qos", "r_bw", "r_lat", "scalarized", "entropy"]


@dataclass(frozen=True)
class LearnerConfig:
    gamma: float = 0.99
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)  # (QoS, BW, latency)
    gamma_mov: float = 0.95
    lr_actor: float = 3e-4
    lr_forward: float = 3e-4
    lr_backward: float = 3e-4
    episodes: int = 2000
    entropy_coef: float = 1e-3
    seed: int = 0
    hidden: tuple[int, ...] = (100,)

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 <= self.gamma_mov < 1.0:
            raise ValueError(f"gamma_mov must lie in [0, 1), got {self.gamma_mov}")
        if len(self.weights) != 3 or min(self.weights) < 0 or max(self.weights) <= 0:
            raise ValueError(f"preference weights must be 3 nonnegative values, not all 0: {self.weights}")


@dataclass
class CriticPair:
    forward: MlpParams
    backward: MlpParams | None

    @classmethod
    def create(cls, num_files: int, hidden=(100,), seed: int = 0, forward_outputs: int = 2,
               with_backward: bool = True):
        fwd = MlpParams.init((num_files + 1, *hidden, forward_outputs), seed + 1)
        bwd = MlpParams.init((num_files + 1, *hidden, 1), seed + 2) if with_backward else None
        # flat initial values: a random critic injects action-correlated noise
        for net in (fwd, bwd):
            if net is not None:
                net.weights[-1][:] = 0.0
        return cls(fwd, bwd)


@dataclass
class RunningMoments:
    """Exponential moving mean/variance of each advantage stream."""

    mean: np.ndarray
    var: np.ndarray
    gamma_mov: float = 0.95

    @classmethod
    def create(cls, k: int, gamma_mov: float = 0.95):
        return cls(np.zeros(k), np.ones(k), gamma_mov)

    def update(self, batch: np.ndarray) -> None:
        batch = np.atleast_2d(batch)
        g = self.gamma_mov
        self.mean = g * self.mean + (1.0 - g) * batch.mean(axis=0)
        self.var = g * self.var + (1.0 - g) * batch.var(axis=0)

    def normalize(self, adv: np.ndarray) -> np.ndarray:
        return (adv - self.mean) / np.sqrt(self.var + 1e-8)


@dataclass
class EpisodeStats:
    episode: int
    discounted: np.ndarray  # discounted cumulative cost per reported objective
    scalarized: float
    entropy: float
    totals: np.ndarray      # undiscounted (r_qos, r_bw, r_lat) sums


def td_advantages(costs: np.ndarray, values: np.ndarray, gamma: float) -> np.ndarray:
    """A(k) = -c(k) + gamma * V(k+1) - V(k) along axis 0, with V after the end = 0."""
    nxt = np.zeros_like(values)
    nxt[:-1] = values[1:]
    return -costs + gamma * nxt - values


def discounted_sum(costs: np.ndarray, gamma: float) -> np.ndarray:
    w = gamma ** np.arange(costs.shape[0])
    return np.tensordot(w, costs, axes=(0, 0))


def forward_features(traj: Trajectory) -> np.ndarray:
    T = traj.num_slots
    return np.stack([state_features(traj.p_req[t], t, T) for t in range(T)])


def backward_features(traj: Trajectory, lat_scale: float) -> np.ndarray:
    """Backward-critic inputs along reversed time.

    Row k belongs to slot t = T-1-k and describes the latency state the
    action of slot t starts from, L(t+1) (zero past the end), together
    with (t+1)/T. The action then produces L(t) and the cost r_lat(t).
    """
    T, N = traj.lat.shape
    before = np.vstack([traj.lat[1:], np.zeros((1, N))]) / lat_scale
    clock = (np.arange(T) + 1.0) / T
    return np.column_stack([before, clock])[::-1]


def forward_costs(traj: Trajectory, scales, with_duration: bool = False) -> np.ndarray:
    cols = [traj.r_qos / scales[0], traj.r_bw / scales[1]]
    if with_duration:
        cols.append(traj.durations / scales[2])
    return np.stack(cols, axis=1)


def forward_advantages(traj: Trajectory, critic: CriticPair, gamma: float,
                       scales=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Per-slot advantages of the forward objectives, shape (T, k)."""
    values, _ = mlp_forward(critic.forward, forward_features(traj))
    costs = forward_costs(traj, scales, with_duration=values.shape[1] == 3)
    return td_advantages(costs, values, gamma)


def backward_advantages(traj: Trajectory, critic: CriticPair, gamma: float,
                        scales=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Latency advantages along reversed time: entry k belongs to slot T-1-k."""
    values, _ = mlp_forward(critic.backward, backward_features(traj, scales[2]))
    costs = traj.r_lat[::-1] / scales[2]
    return td_advantages(costs, values[:, 0], gamma)


def reverse_trajectory(traj: Trajectory) -> Trajectory:
    """Copy of ``traj`` with every per-slot sequence in reverse order."""
    rev = {k: getattr(traj, k)[::-1].copy() for k in
           ("p_req", "p_cach", "alpha", "n_hb", "outage", "durations", "lat",
            "r_qos", "r_bw", "r_lat")}
    return replace(traj, info=list(reversed(traj.info)), **rev)


def _cost_matrix(traj: Trajectory) -> np.ndarray:
    # latency is accrued backward in time, so it is discounted from slot T
    return np.column_stack([traj.r_qos, traj.r_bw, traj.r_lat[::-1]])


class ActorCritic:
    """FB-MOAC learner; ``backward=False`` gives the forward-only variant.

    The forward-only variant drops the backward critic and instead treats
    the slot duration d(t) as a third forward cost, weighted by the latency
    preference.
    """

    variant = "a2c"

    def __init__(self, env: StreamingEnv, cfg: LearnerConfig, backward: bool = True,
                 menu=None):
        self.env = env
        self.cfg = cfg
        self.backward = backward
        N = env.num_files
        self.head = PolicyHead.create(N, env.radio.cache_cap_C, cfg.hidden, menu, seed=cfg.seed)
        self.critics = CriticPair.create(N, cfg.hidden, cfg.seed,
                                         forward_outputs=2 if backward else 3,
                                         with_backward=backward)
        self.opt_actor = AdamState.for_params(self.head.actor, cfg.lr_actor)
        self.opt_forward = AdamState.for_params(self.critics.forward, cfg.lr_forward)
        self.opt_backward = (AdamState.for_params(self.critics.backward, cfg.lr_backward)
                             if backward else None)
        self.moments = RunningMoments.create(3, cfg.gamma_mov)
        # cost units chosen so discounted values stay O(1) for the critics
        horizon = discounted_sum(np.ones(env.num_slots), cfg.gamma)
        self.scales = env.reward_scales() * horizon
        self.weights = np.asarray(cfg.weights, dtype=np.float64)
        self.episode = 0
        self.history: list[EpisodeStats] = []
        self.reference = self._reference_costs()

    REFERENCE_EPISODE = 2**31 - 1

    def _reference_costs(self) -> np.ndarray:
        """Discounted costs of the untrained policy on a held-out track.

        The reported scalarized return divides each objective by this, so it
        reads as a weighted cost relative to the starting policy.
        """
        ep = self.REFERENCE_EPISODE
        rng = np.random.default_rng([self.cfg.seed, ep, 7])
        traj = rollout(self.head, self.env.track(ep), self.env.radio, rng)
        disc = discounted_sum(_cost_matrix(traj), self.cfg.gamma)
        floor = 1e-6 * self.scales
        return np.maximum(disc, floor)

    # -- phase 1 + 2 -------------------------------------------------------
    def collect(self, episode: int) -> Trajectory:
        rng = np.random.default_rng([self.cfg.seed, episode, 7])
        return rollout(self.head, self.env.track(episode), self.env.radio, rng)

    # -- phase 3 -----------------------------------------------------------
    def advantages(self, traj: Trajectory):
        """Raw advantages (T, 3) aligned to slots, plus critic regression terms."""
        gamma = self.cfg.gamma
        T = traj.num_slots
        ff = forward_features(traj)
        vf, cache_f = mlp_forward(self.critics.forward, ff)
        cf = forward_costs(traj, self.scales, with_duration=not self.backward)
        af = td_advantages(cf, vf, gamma)
        terms = {"forward": (vf, cache_f, af)}
        if self.backward:
            bf = backward_features(traj, self.scales[2])
            vb, cache_b = mlp_forward(self.critics.backward, bf)
            ab = td_advantages(traj.r_lat[::-1, None] / self.scales[2], vb, gamma)
            terms["backward"] = (vb, cache_b, ab)
            adv = np.column_stack([af, ab[::-1, 0]])
        else:
            adv = af
        if not np.all(np.isfinite(adv)):
            bad = int(np.argwhere(~np.isfinite(adv))[0, 0])
            raise NonFiniteError(f"episode {self.episode}: non-finite advantage at slot {bad} (phase 3)")
        assert adv.shape == (T, 3)
        return adv, terms

    def scalarize(self, adv: np.ndarray, update_moments: bool = True) -> np.ndarray:
        if update_moments:
            self.moments.update(adv)
        return self.moments.normalize(adv) @ self.weights

    def actor_gradient(self, feats, raws, choices, scalar_adv, logp_old=None):
        """Gradient of the actor loss; PPO passes the behaviour log-probs."""
        T = len(scalar_adv)
        out, cache = mlp_forward(self.head.actor, feats)
        logp, g_logp = log_prob_terms(self.head, out, raws, choices)
        ent, g_ent = entropy_terms(self.head, out)
        if logp_old is None:
            coef = scalar_adv
        else:
            ratio = np.exp(logp - logp_old)
            eps = self.clip_eps
            active = np.where(scalar_adv >= 0, ratio < 1.0 + eps, ratio > 1.0 - eps)
            coef = ratio * scalar_adv * active
        d_out = -(coef[:, None] * g_logp) / T - self.cfg.entropy_coef * g_ent / T
        return mlp_backward(self.head.actor, cache, d_out), float(ent.mean()), logp

    @staticmethod
    def _critic_grad(params, cache, values, adv):
        # semi-gradient TD(0): target = -c + gamma*V(next) held fixed; V - target = -adv
        T = values.shape[0]
        return mlp_backward(params, cache, -adv / T)

    def update(self, traj: Trajectory) -> float:
        adv, terms = self.advantages(traj)
        scalar = self.scalarize(adv)
        feats = np.stack([i[0] for i in traj.info])
        raws = np.stack([i[1] for i in traj.info])
        choices = np.array([i[2] for i in traj.info])
        logp_old = np.array([i[3] for i in traj.info])

        grads_b = None
        if self.backward:
            vb, cache_b, ab = terms["backward"]
            grads_b = self._critic_grad(self.critics.backward, cache_b, vb, ab)
        vf, cache_f, af = terms["forward"]
        grads_f = self._critic_grad(self.critics.forward, cache_f, vf, af)
        entropy = self.update_actor(feats, raws, choices, scalar, logp_old)
        if grads_b is not None:
            adam_step(self.critics.backward, grads_b, self.opt_backward)
        adam_step(self.critics.forward, grads_f, self.opt_forward)
        self._apply_actor()
        return entropy

    def update_actor(self, feats, raws, choices, scalar, logp_old) -> float:
        self._pending, entropy, _ = self.actor_gradient(feats, raws, choices, scalar)
        return entropy

    def _apply_actor(self):
        adam_step(self.head.actor, self._pending, self.opt_actor)
        self._pending = None

    def stats(self, traj: Trajectory, entropy: float) -> EpisodeStats:
        gamma = self.cfg.gamma
        disc = discounted_sum(_cost_matrix(traj), gamma)
        scalarized = -float(np.dot(self.weights, disc / self.reference))
        totals = np.array([traj.r_qos.sum(), traj.r_bw.sum(), traj.r_lat.sum()])
        return EpisodeStats(self.episode, disc, scalarized, entropy, totals)

    def train_episode(self) -> EpisodeStats:
        traj = self.collect(self.episode)
        entropy = self.update(traj)
        st = self.stats(traj, entropy)
        self.history.append(st)
        self.episode += 1
        return st

    def train(self, episodes: int | None = None, csv_path=None) -> list[EpisodeStats]:
        episodes = self.cfg.episodes if episodes is None else episodes
        out = [self.train_episode() for _ in range(episodes)]
        if csv_path is not None:
            write_episode_csv(self.history, csv_path)
        return out

    def policy(self, deterministic: bool = True) -> PolicyHead:
        return replace(self.head, actor=self.head.actor.copy(), deterministic=deterministic)

    def networks(self) -> dict[str, MlpParams]:
        nets = {"actor": self.head.actor, "forward_critic": self.critics.forward}
        if self.critics.backward is not None:
            nets["backward_critic"] = self.critics.backward
        return nets


class FBMOAC(ActorCritic):
    def __init__(self, env, cfg, menu=None):
        super().__init__(env, cfg, backward=True, menu=menu)


def train_episode(learner: ActorCritic) -> EpisodeStats:
    return learner.train_episode()


def write_episode_csv(history, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={EPISODE_SCHEMA}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPISODE_COLUMNS)
        for st in history:
            w.writerow([st.episode, *(repr(float(x)) for x in st.discounted),
                        repr(st.scalarized), repr(st.entropy)])


# -- evaluation ---------------------------------------------------------------

@dataclass
class ParetoReport:
    names: list[str]
    costs: np.ndarray  # (policies, 3) mean cumulative (r_qos, r_bw, r_lat)
    dominance: list[tuple[str, str]] = field(default_factory=list)

    def dominated(self, name: str) -> bool:
        return any(loser == name for _, loser in self.dominance)


def dominates(x, y) -> bool:
    x, y = np.asarray(x), np.asarray(y)
    return bool(np.all(x <= y) and np.any(x < y))


def evaluate(policy, env: StreamingEnv, eval_seeds) -> np.ndarray:
    """Mean undiscounted (r_qos, r_bw, r_lat) episode sums over ``eval_seeds``."""
    rows = []
    for s in eval_seeds:
        traj = rollout(policy, env.track(10_000_000 + int(s)), env.radio, np.random.default_rng([int(s), 99]))
        rows.append([traj.r_qos.sum(), traj.r_bw.sum(), traj.r_lat.sum()])
    return np.mean(rows, axis=0)


def pareto_eval(policies: dict, env: StreamingEnv, eval_seeds) -> ParetoReport:
    names = list(policies)
    costs = np.array([evaluate(policies[n], env, eval_seeds) for n in names])
    pairs = [(a, b) for i, a in enumerate(names) for j, b in enumerate(names)
             if i != j and dominates(costs[i], costs[j])]
    return ParetoReport(names, costs, pairs)

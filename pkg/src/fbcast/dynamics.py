"""Forward-backward streaming environment.

The forward state is the request-probability vector ``p_req(t)``; it mixes
requests deferred by outage with fresh, popularity-driven requests. The
backward state is the expected latency ``L_n(t)`` until successful
reception, which only resolves once the whole outage sequence is known.
A rollout therefore runs forward over slots 1..T and then backward T..1.

Slots are indexed 0..T-1 internally. The backward recursion starts from a
zero latency *after* the last slot, so the final slot still costs
``d/2`` (no outage) up to ``d`` (full outage).
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

from .netmodel import (
    RadioConfig,
    SlotAction,
    bandwidth_total,
    outage_all,
    slot_duration,
)

TRAJECTORY_SCHEMA = "fbcast-trajectory/1"


class ConstraintViolation(RuntimeError):
    """A policy emitted an infeasible action."""

    def __init__(self, slot: int, reason: str):
        super().__init__(f"slot {slot}: {reason}")
        self.slot = slot


@dataclass(frozen=True)
class ForwardState:
    p_req: np.ndarray
    slot: int

    def __post_init__(self):
        _check_simplex(self.p_req, "p_req")


@dataclass(frozen=True)
class BackwardState:
    lat: np.ndarray
    slot: int


@dataclass(frozen=True)
class RewardVector:
    r_qos: float
    r_bw: float
    r_lat: float


@dataclass(frozen=True)
class PopularityTrack:
    p_pop: np.ndarray  # (T, N)
    skew: float
    churn_k: int
    seed: int

    @property
    def num_slots(self) -> int:
        return self.p_pop.shape[0]


def _check_simplex(p, name, tol=1e-8):
    p = np.asarray(p)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(p)) or p.min() < 0.0:
        raise ValueError(f"{name} must be finite and nonnegative")
    if abs(p.sum() - 1.0) > tol:
        raise ValueError(f"{name} sums to {p.sum()!r}, not 1")


def zipf_pmf(num: int, skew: float) -> np.ndarray:
    w = np.arange(1, num + 1, dtype=np.float64) ** -skew
    return w / w.sum()


def default_churn(num_files: int) -> int:
    return math.ceil(num_files / 10)


def make_popularity(N: int, T: int, skew: float = 0.6, churn_k: int | None = None,
                    seed: int = 0) -> PopularityTrack:
    """Zipf popularity over a rank order that drifts by adjacent swaps.

    Slot 0 ranks files in index order. Each later slot applies ``churn_k``
    uniformly chosen adjacent transpositions to the previous ranking.
    """
    if N < 1 or T < 1 or skew < 0:
        raise ValueError(f"need N >= 1, T >= 1, skew >= 0 (got {N}, {T}, {skew})")
    if churn_k is None:
        churn_k = default_churn(N)
    if churn_k < 0:
        raise ValueError("churn_k must be >= 0")
    rng = np.random.default_rng(seed)
    base = zipf_pmf(N, skew)
    order = np.arange(N)  # order[rank] = file
    rows = np.empty((T, N))
    for t in range(T):
        if t > 0 and N > 1:
            for i in rng.integers(0, N - 1, size=churn_k):
                order[i], order[i + 1] = order[i + 1], order[i]
        rows[t, order] = base
    return PopularityTrack(rows, float(skew), int(churn_k), int(seed))


def forward_step(prev: ForwardState, outage_prev, pop_t) -> ForwardState:
    """Request probabilities for the next slot.

    Users in outage repeat their request; everyone served draws a new
    request from the current popularity.
    """
    outage_prev = np.asarray(outage_prev, dtype=np.float64)
    if outage_prev.shape != prev.p_req.shape:
        raise ValueError("outage vector does not match p_req")
    if outage_prev.min() < 0.0 or outage_prev.max() > 1.0:
        raise ValueError("outage entries must lie in [0, 1]")
    _check_simplex(pop_t, "p_pop")
    # share of requests served; dividing by sum(p_req) (= 1) keeps the
    # no-outage and full-outage limits exact in floating point
    served = np.sum((1.0 - outage_prev) * prev.p_req) / np.sum(prev.p_req)
    return ForwardState(prev.p_req * outage_prev + np.asarray(pop_t) * served, prev.slot + 1)


def backward_step(next_lat, outage_t, d_t: float) -> np.ndarray:
    next_lat = np.asarray(next_lat, dtype=np.float64)
    outage_t = np.asarray(outage_t, dtype=np.float64)
    if d_t <= 0:
        raise ValueError("slot duration must be positive")
    if next_lat.min() < 0.0:
        raise ValueError("latencies must be nonnegative")
    if outage_t.min() < 0.0 or outage_t.max() > 1.0:
        raise ValueError("outage entries must lie in [0, 1]")
    return outage_t * (d_t + next_lat) + (1.0 - outage_t) * (0.5 * d_t)


def slot_rewards(state: ForwardState, action: SlotAction, outage, lat,
                 cfg: RadioConfig) -> RewardVector:
    p = state.p_req
    return RewardVector(
        r_qos=float(np.dot(p, outage)),
        r_bw=bandwidth_total(cfg, action),
        r_lat=float(np.dot(p, lat)),
    )


def latency_sequence(outage: np.ndarray, durations: np.ndarray) -> np.ndarray:
    """Backward pass over a whole episode; row t holds L(t)."""
    T = outage.shape[0]
    lat = np.empty_like(outage, dtype=np.float64)
    nxt = np.zeros(outage.shape[1])
    for t in range(T - 1, -1, -1):
        nxt = backward_step(nxt, outage[t], durations[t])
        lat[t] = nxt
    return lat


def reversed_latency(outage: np.ndarray, durations: np.ndarray) -> np.ndarray:
    """The same latencies through the time-reversed forward recursion.

    ``K(k)`` with ``K(0) = 0`` is stepped forward over k = 1..T using the
    outage of slot ``T-k``; row ``k-1`` of the result equals ``L(T-k)``.
    """
    T = outage.shape[0]
    out = np.empty_like(outage, dtype=np.float64)
    K = np.zeros(outage.shape[1])
    for k in range(1, T + 1):
        o = outage[T - k]
        d = durations[T - k]
        K = (d + K) * o + 0.5 * d * (1.0 - o)
        out[k - 1] = K
    return out


class ActionSource(Protocol):
    def act(self, state: ForwardState, num_slots: int,
            rng: np.random.Generator) -> tuple[SlotAction, Any]: ...


@dataclass
class Trajectory:
    p_req: np.ndarray      # (T, N)
    p_cach: np.ndarray     # (T, N)
    alpha: np.ndarray      # (T, N)
    n_hb: np.ndarray       # (T,) harmonic index m
    outage: np.ndarray     # (T, N)
    durations: np.ndarray  # (T,)
    lat: np.ndarray        # (T, N)
    r_qos: np.ndarray
    r_bw: np.ndarray
    r_lat: np.ndarray
    seed: int
    config_hash: str
    info: list = field(default_factory=list)

    @property
    def num_slots(self) -> int:
        return len(self.durations)

    def forward_states(self):
        return [ForwardState(self.p_req[t], t) for t in range(self.num_slots)]

    def backward_states(self):
        return [BackwardState(self.lat[t], t) for t in range(self.num_slots)]

    def actions(self):
        return [SlotAction(self.p_cach[t], self.alpha[t], int(self.n_hb[t]))
                for t in range(self.num_slots)]

    def rewards(self):
        return [RewardVector(float(a), float(b), float(c))
                for a, b, c in zip(self.r_qos, self.r_bw, self.r_lat)]


def config_hash(cfg: RadioConfig) -> str:
    return hashlib.sha256(repr(cfg).encode()).hexdigest()[:16]


def rollout(policy: ActionSource, pop: PopularityTrack, cfg: RadioConfig,
            seed: int | np.random.Generator = 0) -> Trajectory:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    T, N = pop.p_pop.shape
    if N != cfg.num_files_N:
        raise ValueError(f"popularity has {N} files, radio config expects {cfg.num_files_N}")
    p_req = np.empty((T, N))
    p_cach = np.empty((T, N))
    alpha = np.empty((T, N))
    n_hb = np.empty(T, dtype=np.int64)
    outage = np.empty((T, N))
    durations = np.empty(T)
    info = []

    state = ForwardState(pop.p_pop[0].copy(), 0)
    for t in range(T):
        action, extra = policy.act(state, T, rng)
        try:
            action.validate(cfg.cache_cap_C)
        except ValueError as exc:
            raise ConstraintViolation(t, str(exc)) from None
        if len(action.p_cach) != N:
            raise ConstraintViolation(t, f"action has {len(action.p_cach)} files, expected {N}")
        o = outage_all(cfg, action)
        p_req[t] = state.p_req
        p_cach[t] = action.p_cach
        alpha[t] = action.alpha
        n_hb[t] = action.n_hb
        outage[t] = o
        durations[t] = slot_duration(cfg.file_len_L, action.n_hb)
        info.append(extra)
        if t + 1 < T:
            state = forward_step(state, o, pop.p_pop[t + 1])

    lat = latency_sequence(outage, durations)
    r_qos = np.einsum("tn,tn->t", p_req, outage)
    r_lat = np.einsum("tn,tn->t", p_req, lat)
    r_bw = np.array([bandwidth_total(cfg, SlotAction(p_cach[t], alpha[t], int(n_hb[t])))
                     for t in range(T)])
    seed_val = pop.seed if isinstance(seed, np.random.Generator) else int(seed)
    return Trajectory(p_req, p_cach, alpha, n_hb, outage, durations, lat,
                      r_qos, r_bw, r_lat, seed_val, config_hash(cfg), info)


TRAJECTORY_COLUMNS = ["t", "d", "r_qos", "r_bw", "r_lat", "sum_p_cach",
                      "min_outage", "max_outage"]


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={TRAJECTORY_SCHEMA} seed={traj.seed} config={traj.config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for t in range(traj.num_slots):
            w.writerow([
                t + 1, repr(float(traj.durations[t])), repr(float(traj.r_qos[t])),
                repr(float(traj.r_bw[t])), repr(float(traj.r_lat[t])),
                repr(float(traj.p_cach[t].sum())), repr(float(traj.outage[t].min())),
                repr(float(traj.outage[t].max())),
            ])


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        header = fh.readline()
        if f"schema={TRAJECTORY_SCHEMA}" not in header:
            raise ValueError(f"{path}: not a {TRAJECTORY_SCHEMA} file")
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in TRAJECTORY_COLUMNS}


@dataclass(frozen=True)
class StreamingEnv:
    """Radio model plus a popularity generator; one fresh track per episode."""

    radio: RadioConfig
    num_slots: int = 256
    skew: float = 0.6
    churn_k: int | None = None
    seed: int = 0

    @property
    def num_files(self) -> int:
        return self.radio.num_files_N

    def track_seed(self, episode: int) -> int:
        return int(np.random.SeedSequence([self.seed, episode]).generate_state(1)[0])

    def track(self, episode: int) -> PopularityTrack:
        return make_popularity(self.num_files, self.num_slots, self.skew, self.churn_k,
                               self.track_seed(episode))

    def reward_scales(self) -> np.ndarray:
        """Fixed cost units: QoS as is, bandwidth in units of N*R, time in units of L."""
        r = self.radio
        return np.array([1.0, r.num_files_N * r.rate_R, r.file_len_L])

"""Run orchestration behind the CLI: train, eval, compare, validate-outage.

Every run writes into its own directory: the resolved config, a manifest
with the seed and a content hash of the config, and the CSV outputs.
"""
from __future__ import annotations

import csv
import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy.special import erfcinv

from . import __version__, kernels
from .baselines import forward_only_learner, lfu_matched, unicast_costs
from .config import ExperimentConfig, content_hash, dump_config
from .dynamics import rollout, write_trajectory_csv
from .fbmoac import FBMOAC, ActorCritic, evaluate, pareto_eval
from .netmodel import SlotAction, gamma_R, harmonic_number, mc_outage_oracle, outage_analytic, eta
from .nn import load_checkpoint, save_checkpoint
from .policy import PolicyHead

RUN_SCHEMA = "fbcast-run/1"
OUTAGE_SCHEMA = "fbcast-outage-validation/1"
COMPARE_SCHEMA = "fbcast-compare/1"
SUMMARY_SCHEMA = "fbcast-eval-summary/1"
LEARNERS = ("fbmoac", "a2c", "ppo")
OBJECTIVES = ("r_qos", "r_bw", "r_lat")


class RunError(RuntimeError):
    pass


def default_out_root() -> Path:
    return Path(os.environ.get("FBCAST_OUT") or "fbcast-runs")


def prepare_run_dir(cfg: ExperimentConfig, command: str, out: str | None, tag: str = "") -> Path:
    text = dump_config(cfg)
    digest = content_hash(text)
    if out:
        run = Path(out)
    else:
        name = f"{command}{'-' + tag if tag else ''}-{digest[:12]}"
        run = default_out_root() / name
    run.mkdir(parents=True, exist_ok=True)
    (run / "config.txt").write_text(text)
    (run / "manifest.txt").write_text(
        f"schema = {RUN_SCHEMA}\ncommand = {command}\nseed = {cfg.seed}\n"
        f"config_hash = {digest}\nversion = {__version__}\n"
    )
    return run


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, schema: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={schema}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- training -------------------------------------------------------------------

def make_learner(name: str, cfg: ExperimentConfig, weights=None) -> ActorCritic:
    env = cfg.env()
    lcfg = cfg.learner(weights)
    if name == "fbmoac":
        return FBMOAC(env, lcfg)
    if name in ("a2c", "ppo"):
        return forward_only_learner(name, env, lcfg)
    raise RunError(f"unknown learner {name!r} (choose from {', '.join(LEARNERS)})")


def train_job(name: str, cfg: ExperimentConfig, run_dir: Path, weights=None):
    """Train one learner; writes episodes.csv and checkpoint.fbck. Returns the actor."""
    learner = make_learner(name, cfg, weights)
    run_dir.mkdir(parents=True, exist_ok=True)
    learner.train(cfg.episodes, run_dir / "episodes.csv")
    save_checkpoint(run_dir / "checkpoint.fbck", learner.networks())
    return learner.head.actor


def head_from_actor(cfg: ExperimentConfig, actor) -> PolicyHead:
    head = PolicyHead.create(cfg.num_files_N, cfg.cache_cap_C, cfg.hidden)
    if actor.sizes != head.actor.sizes:
        raise RunError(f"checkpoint actor has layer sizes {actor.sizes}, config expects {head.actor.sizes}")
    return dataclasses.replace(head, actor=actor, deterministic=True)


def policy_from_checkpoint(cfg: ExperimentConfig, path) -> PolicyHead:
    try:
        nets = load_checkpoint(path)
    except OSError as exc:
        raise RunError(f"{path}: cannot read checkpoint ({exc.strerror})") from None
    if "actor" not in nets:
        raise RunError(f"{path}: checkpoint has no actor network")
    return head_from_actor(cfg, nets["actor"])


def eval_run(cfg: ExperimentConfig, policy, run_dir: Path) -> np.ndarray:
    """Trajectory CSV for the first evaluation seed plus a summary over all of them."""
    env = cfg.env()
    seeds = cfg.eval_seeds()
    s0 = seeds[0]
    traj = rollout(policy, env.track(10_000_000 + s0), env.radio, np.random.default_rng([s0, 99]))
    write_trajectory_csv(traj, run_dir / "trajectory.csv")
    costs = evaluate(policy, env, seeds)
    _write_csv(run_dir / "summary.csv", SUMMARY_SCHEMA, ["episodes", *OBJECTIVES],
               [[len(seeds), *map(_fmt, costs)]])
    return costs


def _map(fn, args, jobs: int):
    if jobs <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=min(jobs, len(args))) as pool:
        futures = [pool.submit(fn, *a) for a in args]
        return [f.result() for f in futures]


# -- comparison -----------------------------------------------------------------

def compare_run(cfg: ExperimentConfig, run_dir: Path, jobs: int = 1) -> dict:
    """Train the three learners, add LFU and unicast, and rank them."""
    actors = _map(train_job, [(n, cfg, run_dir / n) for n in LEARNERS], jobs)
    policies = {n: head_from_actor(cfg, a) for n, a in zip(LEARNERS, actors)}
    env = cfg.env()
    seeds = cfg.eval_seeds()
    lfu = lfu_matched(policies["fbmoac"], env, seeds)
    policies["lfu"] = lfu
    report = pareto_eval(policies, env, seeds)
    names = report.names + ["unicast"]
    costs = np.vstack([report.costs, unicast_costs(cfg.unicast(), env, seeds)])
    dominated_by = {n: [] for n in names}
    for i, a in enumerate(names):
        for j, b in enumerate(names):
            if i != j and np.all(costs[i] <= costs[j]) and np.any(costs[i] < costs[j]):
                dominated_by[b].append(a)
    _write_csv(run_dir / "compare.csv", COMPARE_SCHEMA,
               ["policy", *OBJECTIVES, "dominated_by"],
               [[n, *map(_fmt, costs[i]), ";".join(dominated_by[n])] for i, n in enumerate(names)])
    worst = costs.max(axis=0)
    worst[worst == 0] = 1.0
    norm = costs / worst
    _write_csv(run_dir / "normalized.csv", COMPARE_SCHEMA,
               ["policy", *(f"norm_{o}" for o in OBJECTIVES)],
               [[n, *map(_fmt, norm[i])] for i, n in enumerate(names)])
    with open(run_dir / "lfu.txt", "w") as fh:
        fh.write(f"alpha_star = {lfu.alpha_star!r}\nm_star = {lfu.m_star}\n")
    return {"names": names, "costs": costs, "dominated_by": dominated_by,
            "lfu": (lfu.alpha_star, lfu.m_star)}


# -- outage validation ------------------------------------------------------------

GRID_P = (0.05, 0.2, 0.8)
GRID_ALPHA = (0.5, 2.0)
GRID_LAMBDA = (50.0, 100.0)
GRID_TARGETS = (0.3, 0.5, 0.7)
GRID_FILES = 20
GRID_M = 2


def outage_grid():
    """(index, p_cach, alpha, lambda_bs, target outage) for every grid point."""
    pts = []
    for p in GRID_P:
        for a in GRID_ALPHA:
            for lam in GRID_LAMBDA:
                i = len(pts)
                pts.append((i, p, a, lam, GRID_TARGETS[i % len(GRID_TARGETS)]))
    return pts


def grid_point_config(cfg: ExperimentConfig, p: float, alpha: float, lam: float, target: float):
    """Radio config and action whose analytic outage for file 0 equals ``target``.

    The transmit power is solved for so each point sits mid-range, where a
    Monte-Carlo mismatch is easiest to see.
    """
    base = cfg.radio()
    H = harmonic_number(GRID_M)
    alphas = np.full(GRID_FILES, alpha)
    z = float(erfcinv(target))
    g_target = eta(alphas, 0) * (4.0 * z / (math.pi ** 2 * lam * p)) ** 2
    p_tx = g_target * base.rate_R * H * base.ref_loss * base.n0 / base.antenna_gain
    radio = dataclasses.replace(base, lambda_bs=lam, p_tx=p_tx, num_files_N=GRID_FILES,
                                cache_cap_C=p * GRID_FILES)
    action = SlotAction(np.full(GRID_FILES, p), alphas, GRID_M)
    return radio, action


def _grid_job(cfg: ExperimentConfig, point, seed: int, samples: int):
    i, p, a, lam, target = point
    radio, action = grid_point_config(cfg, p, a, lam, target)
    analytic = outage_analytic(radio, action, 0)
    pseed = int(np.random.SeedSequence([seed, i]).generate_state(1, np.uint64)[0])
    mc, se = mc_outage_oracle(radio, action, 0, samples, pseed)
    z = abs(mc - analytic) / se if se > 0 else math.inf
    g = gamma_R(radio, harmonic_number(GRID_M))
    return [i, p, a, lam, g, analytic, mc, se, z, z < 3.0]


def validate_outage(cfg: ExperimentConfig, run_dir: Path, jobs: int = 1) -> list:
    rows = _map(_grid_job, [(cfg, pt, cfg.seed, cfg.mc_samples) for pt in outage_grid()], jobs)
    _write_csv(run_dir / "outage_validation.csv", OUTAGE_SCHEMA,
               ["point", "p_cach", "alpha", "lambda_bs", "gamma_R", "analytic", "monte_carlo",
                "std_err", "z", "pass"],
               [[r[0], *map(_fmt, r[1:9]), int(r[9])] for r in rows])
    with open(run_dir / "manifest.txt", "a") as fh:
        fh.write(f"kernel_backend = {kernels.BACKEND}\nmc_samples = {cfg.mc_samples}\n")
    return rows

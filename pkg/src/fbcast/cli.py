"""Command line entry point.

Errors go to stderr as a single line ``fbcast: error: <kind>: <message>``
and the exit code is nonzero (2 usage, 3 config, 4 run failure,
5 a validation or selftest check failed).
"""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, ExperimentConfig, load_config, preset

EXIT_USAGE, EXIT_CONFIG, EXIT_RUN, EXIT_CHECK = 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed {text} is not an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _weights(text: str):
    try:
        w = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"weights must be three numbers, got {text!r}") from None
    if len(w) != 3:
        raise argparse.ArgumentTypeError(f"weights must be three numbers, got {text!r}")
    return w


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value or JSON config file")
    common.add_argument("--preset", choices=["paper", "tiny"], default="paper",
                        help="base settings the config file overrides (default: paper)")
    common.add_argument("--seed", type=_u64, help="global seed (overrides the config)")
    common.add_argument("--out", help="run directory (default: $FBCAST_OUT/<command>-<hash>)")
    common.add_argument("--episodes", type=_positive, help="training episodes (overrides the config)")
    common.add_argument("--jobs", type=_positive, default=1, help="parallel worker processes")

    p = _Parser(prog="fbcast", description="Forward-backward multicast streaming simulator and trainer.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    t = sub.add_parser("train", parents=[common], help="train a learner")
    t.add_argument("--learner", choices=["fbmoac", "a2c", "ppo"], default="fbmoac")
    t.add_argument("--weights", type=_weights, help="preference weights qos,bw,lat")
    e = sub.add_parser("eval", parents=[common], help="trajectory CSV from a checkpoint")
    e.add_argument("--checkpoint", required=True)
    sub.add_parser("compare", parents=[common], help="train and rank all policies")
    sub.add_parser("validate-outage", parents=[common], help="closed-form vs Monte-Carlo outage grid")
    sub.add_parser("selftest", parents=[common], help="run the built-in invariant checks")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = preset(args.preset)
    if args.config:
        cfg = load_config(args.config, cfg)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.episodes is not None:
        changes["episodes"] = args.episodes
    return cfg.replace(**changes) if changes else cfg


def run(argv) -> int:
    from . import harness

    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "train" and args.weights:
            cfg = cfg.replace(w_qos=args.weights[0], w_bw=args.weights[1], w_lat=args.weights[2])
    except ConfigError as exc:
        raise CliError("config", str(exc), EXIT_CONFIG) from None

    cmd = args.command
    try:
        if cmd == "train":
            run_dir = harness.prepare_run_dir(cfg, cmd, args.out, args.learner)
            harness.train_job(args.learner, cfg, run_dir)
            print(f"ok: wrote {run_dir}")
        elif cmd == "eval":
            policy = harness.policy_from_checkpoint(cfg, args.checkpoint)
            run_dir = harness.prepare_run_dir(cfg, cmd, args.out)
            costs = harness.eval_run(cfg, policy, run_dir)
            print(f"ok: r_qos={costs[0]:.6g} r_bw={costs[1]:.6g} r_lat={costs[2]:.6g} ({run_dir})")
        elif cmd == "compare":
            run_dir = harness.prepare_run_dir(cfg, cmd, args.out)
            res = harness.compare_run(cfg, run_dir, args.jobs)
            for name, row in zip(res["names"], res["costs"]):
                dom = ",".join(res["dominated_by"][name]) or "-"
                print(f"{name:8s} r_qos={row[0]:.6g} r_bw={row[1]:.6g} r_lat={row[2]:.6g} dominated_by={dom}")
            print(f"ok: wrote {run_dir}")
        elif cmd == "validate-outage":
            run_dir = harness.prepare_run_dir(cfg, cmd, args.out)
            rows = harness.validate_outage(cfg, run_dir, args.jobs)
            bad = [r[0] for r in rows if not r[-1]]
            if bad:
                raise CliError("check", f"{len(bad)} of {len(rows)} grid points outside 3 standard errors: "
                                        f"{','.join(map(str, bad))}", EXIT_CHECK)
            print(f"ok: {len(rows)} grid points within 3 standard errors ({run_dir})")
        elif cmd == "selftest":
            from .selftest import run_selftest
            run_dir = harness.prepare_run_dir(cfg, cmd, args.out)
            rows = run_selftest(cfg)
            harness._write_csv(run_dir / "selftest.csv", "fbcast-selftest/1",
                               ["check", "pass", "detail"], [[n, int(ok), d] for n, ok, d in rows])
            for n, ok, d in rows:
                print(f"{'PASS' if ok else 'FAIL'} {n}: {d}")
            bad = [n for n, ok, _ in rows if not ok]
            if bad:
                raise CliError("check", f"selftest failed: {','.join(bad)}", EXIT_CHECK)
            print("ok: selftest passed")
    except (harness.RunError, ConfigError, ValueError, OSError, FloatingPointError, RuntimeError) as exc:
        raise CliError("run", f"{type(exc).__name__}: {exc}", EXIT_RUN) from None
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(argv)
    except CliError as exc:
        msg = " ".join(str(exc).split())
        print(f"fbcast: error: {exc.kind}: {msg}", file=sys.stderr)
        return exc.code
    except KeyboardInterrupt:
        print("fbcast: error: interrupted: keyboard interrupt", file=sys.stderr)
        return 130

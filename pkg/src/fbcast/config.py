"""Flat experiment configuration: defaults, presets, file loading, dumping.

A config file is either JSON (a single object) or ``key = value`` lines
with ``#`` comments. Keys are the field names of :class:`ExperimentConfig`.
Lists (``hidden``) are comma separated in the key/value form.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, fields

from .baselines import UnicastConfig
from .dynamics import StreamingEnv
from .fbmoac import LearnerConfig
from .netmodel import RadioConfig


class ConfigError(ValueError):
    """Malformed or infeasible configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    # radio, in the units people quote them in
    lambda_bs: float = 100.0
    p_tx_dbm: float = 23.0
    n0_dbm_hz: float = -174.0
    noise_figure_db: float = 9.0
    antenna_gain_dbi: float = 8.0
    ref_path_loss_db: float = 128.1
    path_loss_exp: float = 4.0
    carrier_ghz: float = 2.0          # metadata only
    rate_R: float = 1e6
    file_len_L: float = 600.0
    num_files_N: int = 200
    cache_cap_C: float = 10.0
    # popularity
    num_slots_T: int = 256
    zipf_skew: float = 0.6
    churn_k: int | None = None        # None: ceil(N/10) swaps per slot
    # learner
    gamma: float = 0.99
    w_qos: float = 1.0
    w_bw: float = 1.0
    w_lat: float = 1.0
    gamma_mov: float = 0.95
    lr_actor: float = 3e-4
    lr_forward: float = 3e-4
    lr_backward: float = 3e-4
    episodes: int = 2000
    entropy_coef: float = 1e-3
    hidden: tuple[int, ...] = (100,)
    # baselines and evaluation
    lambda_ue: float = 1000.0
    unicast_area: float = 1.0
    unicast_target_outage: float = 0.05
    eval_episodes: int = 20
    mc_samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        hidden = self.hidden
        if isinstance(hidden, int):
            hidden = (hidden,)
        object.__setattr__(self, "hidden", tuple(int(h) for h in hidden))
        if self.num_files_N < 1:
            raise ConfigError("num_files_N: must be >= 1")
        if self.cache_cap_C > self.num_files_N:
            raise ConfigError(f"cache_cap_C={self.cache_cap_C} exceeds num_files_N={self.num_files_N}; "
                              "cache capacity cannot exceed the library size")
        if self.cache_cap_C < 0:
            raise ConfigError("cache_cap_C: must be >= 0")
        for name in ("num_slots_T", "episodes", "eval_episodes", "mc_samples"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        if self.episodes < 10:
            raise ConfigError("episodes: need at least 10 for the learning-curve summary")
        if self.churn_k is not None and self.churn_k < 0:
            raise ConfigError("churn_k: must be >= 0")
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigError("hidden: need at least one layer of width >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed: must fit in an unsigned 64-bit integer")
        # let the component types check their own invariants
        for build in (self.radio, self.learner, self.unicast, self.env):
            try:
                build()
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(str(exc)) from None

    # -- component views ----------------------------------------------------
    def radio(self) -> RadioConfig:
        return RadioConfig.from_db(
            p_tx_dbm=self.p_tx_dbm, n0_dbm_hz=self.n0_dbm_hz,
            noise_figure_db=self.noise_figure_db, antenna_gain_dbi=self.antenna_gain_dbi,
            ref_path_loss_db=self.ref_path_loss_db, lambda_bs=self.lambda_bs,
            path_loss_exp=self.path_loss_exp, rate_R=self.rate_R,
            file_len_L=self.file_len_L, num_files_N=self.num_files_N,
            cache_cap_C=self.cache_cap_C,
        )

    def env(self) -> StreamingEnv:
        return StreamingEnv(self.radio(), self.num_slots_T, self.zipf_skew, self.churn_k, self.seed)

    def learner(self, weights=None, seed: int | None = None) -> LearnerConfig:
        return LearnerConfig(
            gamma=self.gamma, weights=tuple(weights or (self.w_qos, self.w_bw, self.w_lat)),
            gamma_mov=self.gamma_mov, lr_actor=self.lr_actor, lr_forward=self.lr_forward,
            lr_backward=self.lr_backward, episodes=self.episodes,
            entropy_coef=self.entropy_coef, seed=self.seed if seed is None else seed,
            hidden=self.hidden,
        )

    def unicast(self) -> UnicastConfig:
        return UnicastConfig(self.lambda_ue, self.unicast_area, self.unicast_target_outage)

    def eval_seeds(self) -> list[int]:
        return list(range(self.eval_episodes))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


PRESETS = {
    "paper": {},
    "tiny": {"num_files_N": 20, "cache_cap_C": 2.0, "num_slots_T": 32,
             "episodes": 2000, "hidden": (64,)},
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (choose from {', '.join(PRESETS)})")
    return ExperimentConfig(**PRESETS[name])


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _coerce(name: str, value, where: str):
    f = _FIELDS.get(name)
    if f is None:
        raise ConfigError(f"{where}: unknown key {name!r}")
    kind = f.type if isinstance(f.type, str) else str(f.type)
    try:
        if name == "hidden":
            if isinstance(value, str):
                return tuple(int(v) for v in value.split(",") if v.strip())
            if isinstance(value, int):
                return (value,)
            return tuple(int(v) for v in value)
        if name == "churn_k":
            if value is None or (isinstance(value, str) and value.strip().lower() in ("none", "auto", "")):
                return None
            return _as_int(value)
        if kind.startswith("int"):
            return _as_int(value)
        if kind.startswith("float"):
            x = float(value)
            if math.isnan(x):
                raise ValueError("nan")
            return x
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: bad value {value!r} for {name}") from None
    raise AssertionError(name)


def _as_int(value) -> int:
    if isinstance(value, bool):
        raise ValueError(value)
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(value)
        return int(value)
    s = str(value).strip()
    try:
        return int(s)
    except ValueError:
        x = float(s)
        if not x.is_integer():
            raise
        return int(x)


def parse_config_text(text: str, base: ExperimentConfig | None = None,
                      source: str = "<config>") -> ExperimentConfig:
    """Overlay a config file's contents on ``base`` (defaults if None)."""
    base = base or ExperimentConfig()
    values = {}
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}: JSON parse error: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise ConfigError(f"{source}:1: top level must be an object")
        for k, v in obj.items():
            values[k] = _coerce(k, v, source)
    else:
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in values:
                raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
            values[key] = _coerce(key, value, f"{source}:{lineno}")
    return base.replace(**values)


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config_text(text, base, str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    """Key/value text that ``parse_config_text`` maps back to ``cfg``."""
    lines = []
    for name in _FIELDS:
        v = getattr(cfg, name)
        if name == "hidden":
            text = ",".join(str(h) for h in v)
        elif v is None:
            text = "auto"
        else:
            text = repr(v)
        lines.append(f"{name} = {text}")
    return "\n".join(lines) + "\n"


def content_hash(text: str) -> str:
    """Git blob hash of ``text``."""
    data = text.encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()

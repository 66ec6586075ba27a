"""Experiment configuration and the INI-style config file format.

A config file has up to three sections; every key is optional::

    [experiment]
    env = closed_rooms          ; bottleneck | closed_rooms | red_blue_doors | foraging
    variant = clustercomm       ; random | nocomm | latentcomm | clustercomm | spherical | centroidcomm
    k = 8                       ; clusters (defaults: 8 bottleneck/closed_rooms, 16 otherwise)
    seeds = 0, 1, 2
    total_steps = 200000        ; env steps (joint transitions) per seed
    eval_episodes = 1000
    eval_every = 20000          ; learning-curve snapshot interval in env steps
    snapshot_episodes = 200
    hidden = 32
    out_dir = runs

    [env]
    n_agents = 2
    max_steps = 10
    step_penalty = 0.1
    commit = interact           ; any other key is passed to the environment constructor

    [ppo]
    lr = 0.00025
    gamma = 0.99
    ...                         ; any PPOHyper field
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import List, Optional

from .comm import Variant

DEFAULT_K = {"bottleneck": 8, "closed_rooms": 8, "red_blue_doors": 16, "foraging": 16}


@dataclass
class PPOHyper:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    minibatch: int = 256
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    horizon: int = 256
    n_envs: int = 8
    lr: float = 2.5e-4
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0 <= self.lam <= 1:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if self.clip <= 0:
            raise ValueError(f"clip must be > 0, got {self.clip}")
        if self.horizon < 1 or self.n_envs < 1 or self.minibatch < 1 or self.epochs < 0:
            raise ValueError("horizon, n_envs and minibatch must be >= 1, epochs >= 0")


@dataclass
class ExperimentConfig:
    env: str = "closed_rooms"
    variant: str = "clustercomm"
    n_agents: Optional[int] = None
    max_steps: Optional[int] = None
    step_penalty: Optional[float] = None
    env_options: dict = field(default_factory=dict)
    k: Optional[int] = None
    hidden: int = 32
    seeds: List[int] = field(default_factory=lambda: [0])
    total_steps: int = 100_000
    eval_episodes: int = 1000
    eval_every: int = 20_000
    snapshot_episodes: int = 200
    eval_envs: int = 32
    out_dir: str = "runs"
    ppo: PPOHyper = field(default_factory=PPOHyper)

    def __post_init__(self):
        from .envs import ALIASES, ENVS
        self.env = ALIASES.get(self.env.lower(), self.env.lower())
        if self.env not in ENVS:
            raise ValueError(f"unknown env {self.env!r}")
        self.variant = Variant.parse(self.variant).value
        if self.k is None:
            self.k = DEFAULT_K[self.env]
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"seeds must be distinct, got {self.seeds}")
        if self.total_steps < 0 or self.eval_episodes < 1:
            raise ValueError("total_steps must be >= 0 and eval_episodes >= 1")

    def replace(self, **changes) -> "ExperimentConfig":
        ppo_changes = {k[4:]: changes.pop(k) for k in list(changes) if k.startswith("ppo_")}
        cfg = dataclasses.replace(self, **changes)
        if ppo_changes:
            cfg.ppo = dataclasses.replace(cfg.ppo, **ppo_changes)
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        ppo = PPOHyper(**d.pop("ppo", {}))
        return cls(**d, ppo=ppo)

    def content_hash(self, seed=None) -> str:
        """Hash of everything that determines a training run's output."""
        d = self.to_dict()
        d.pop("out_dir")
        d.pop("seeds")
        d["seed"] = seed
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _convert(value: str, annotation):
    text = value.strip()
    ann = str(annotation)
    if text.lower() in ("none", ""):
        return None
    if "List[int]" in ann:
        return [int(v) for v in text.replace(",", " ").split()]
    if "float" in ann:
        return float(text)
    if "int" in ann:
        return int(text)
    return text


def _auto(value: str):
    text = value.strip()
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(path) as fh:
        parser.read_file(fh)
    exp_fields = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    ppo_fields = {f.name: f.type for f in dataclasses.fields(PPOHyper)}
    kwargs = {}
    if parser.has_section("experiment"):
        for key, value in parser.items("experiment"):
            if key not in exp_fields or key in ("ppo", "env_options"):
                raise ValueError(f"unknown [experiment] key {key!r}")
            kwargs[key] = _convert(value, exp_fields[key])
    options = {}
    if parser.has_section("env"):
        for key, value in parser.items("env"):
            if key in ("n_agents", "max_steps", "step_penalty"):
                kwargs[key] = _convert(value, exp_fields[key])
            else:
                options[key] = _auto(value)
    kwargs["env_options"] = options
    ppo = {}
    if parser.has_section("ppo"):
        for key, value in parser.items("ppo"):
            if key not in ppo_fields:
                raise ValueError(f"unknown [ppo] key {key!r}")
            ppo[key] = _convert(value, ppo_fields[key])
    return ExperimentConfig(**kwargs, ppo=PPOHyper(**ppo))


def dump_config(cfg: ExperimentConfig) -> str:
    lines = ["[experiment]"]
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in ("ppo", "env_options", "n_agents", "max_steps", "step_penalty"):
            continue
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {', '.join(map(str, v)) if isinstance(v, list) else v}")
    lines.append("")
    lines.append("[env]")
    for key in ("n_agents", "max_steps", "step_penalty"):
        lines.append(f"{key} = {getattr(cfg, key)}")
    for key, v in cfg.env_options.items():
        lines.append(f"{key} = {v}")
    lines.append("")
    lines.append("[ppo]")
    for f in dataclasses.fields(PPOHyper):
        lines.append(f"{f.name} = {getattr(cfg.ppo, f.name)}")
    return "\n".join(lines) + "\n"

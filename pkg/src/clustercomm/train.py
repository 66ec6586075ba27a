"""Training loop: rollout -> per-agent PPO update -> per-agent centroid update."""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .comm import Variant
from .config import ExperimentConfig
from .kmeans import assign
from .evaluation import Checkpoint, comm_variant, env_from_config, evaluate, fresh_agents
from .ppo import ppo_update, update_clustering
from .rollout import Agent, VecEnv, collect_rollout

log = logging.getLogger(__name__)

CURVE_HEADER = ["env_steps", "mean_eval_reward", "success_rate", "mean_steps"]


@dataclass
class CurvePoint:
    env_steps: int
    mean_eval_reward: float
    success_rate: float
    mean_steps: float

    def row(self):
        return [self.env_steps, self.mean_eval_reward, self.success_rate, self.mean_steps]


@dataclass
class TrainingArtifacts:
    config: ExperimentConfig
    seed: int
    curve: List[CurvePoint]
    agents: List[Agent]
    env_steps: int
    diagnostics: List[dict] = field(default_factory=list)
    messages_seen: Optional[np.ndarray] = None  # per-agent max emitted index (cluster variants)

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(self.config, self.seed, self.agents, self.env_steps)


def write_curve(curve: List[CurvePoint], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        for p in curve:
            w.writerow([p.env_steps, repr(p.mean_eval_reward), repr(p.success_rate),
                        repr(p.mean_steps)])


def read_curve(path) -> List[CurvePoint]:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return [CurvePoint(int(r["env_steps"]), float(r["mean_eval_reward"]), float(r["success_rate"]),
                       float(r["mean_steps"])) for r in rows]


def update_agents(agents: List[Agent], buffers, cfg: ExperimentConfig, only=None) -> List[dict]:
    """PPO update then centroid update for each agent (or just agent ``only``)."""
    cv = comm_variant(cfg)
    diags = []
    for agent, buf in zip(agents, buffers):
        if only is not None and agent.index != only:
            continue
        diag = ppo_update(agent, buf, cfg.ppo)
        update_clustering(agent, buf, cv)
        diags.append(diag)
    return diags


def train(cfg: ExperimentConfig, seed: int, out_dir: Optional[str] = None,
          vocab_check: bool = False) -> TrainingArtifacts:
    """Train one seed for ``cfg.total_steps`` env steps.

    Learning-curve snapshots are taken every ``cfg.eval_every`` env steps and
    after the last update. If ``out_dir`` is given, the curve and a checkpoint
    are flushed there even when training aborts.
    """
    cv = comm_variant(cfg)
    master = np.random.SeedSequence(seed)
    agent_ss, env_ss, eval_ss = master.spawn(3)
    agents = fresh_agents(cfg, int(agent_ss.generate_state(1)[0]))
    eval_seed = int(eval_ss.generate_state(1)[0])
    curve: List[CurvePoint] = []
    diagnostics = []
    steps = 0
    max_index = np.full(len(agents), -1)
    art = TrainingArtifacts(cfg, seed, curve, agents, 0, diagnostics)
    if cv.kind is Variant.RANDOM or cfg.total_steps == 0:
        _flush(art, out_dir)
        return art

    vec = VecEnv(lambda: env_from_config(cfg), cfg.ppo.n_envs,
                 int(env_ss.generate_state(1)[0]), cv)
    per_iter = cfg.ppo.horizon * cfg.ppo.n_envs
    next_snapshot = cfg.eval_every
    buffers = None
    try:
        while steps < cfg.total_steps:
            buffers, stats = collect_rollout(vec, agents, cv, cfg.ppo.horizon, buffers=buffers)
            steps += per_iter
            if vocab_check and cv.kind.clusters:
                for a in agents:
                    if a.table.initialized:
                        idx = assign(buffers[a.index].flat_reps(), a.table)
                        max_index[a.index] = max(max_index[a.index], int(idx.max()))
                        if idx.min() < 0 or idx.max() >= cv.k:
                            raise AssertionError(f"agent {a.index} emitted index outside [0, {cv.k})")
            diag = update_agents(agents, buffers, cfg)
            diagnostics.append({"env_steps": steps, "episodes": len(stats.episodes),
                                "train_success": float(np.mean([e.success for e in stats.episodes]))
                                if stats.episodes else float("nan"),
                                "agents": diag})
            if steps >= next_snapshot or steps >= cfg.total_steps:
                m = evaluate(agents, cfg, cfg.snapshot_episodes, seed=eval_seed)
                curve.append(CurvePoint(steps, m.avg_reward, m.success_rate, m.avg_steps))
                log.info("seed %d steps %d: reward %.3f success %.3f steps %.2f", seed, steps,
                         m.avg_reward, m.success_rate, m.avg_steps)
                while next_snapshot <= steps:
                    next_snapshot += cfg.eval_every
    finally:
        art.env_steps = steps
        art.messages_seen = max_index
        _flush(art, out_dir)
    return art


def _flush(art: TrainingArtifacts, out_dir):
    if out_dir is None:
        return
    os.makedirs(out_dir, exist_ok=True)
    write_curve(art.curve, os.path.join(out_dir, "curve.csv"))
    art.checkpoint().save(os.path.join(out_dir, "checkpoint.npz"))

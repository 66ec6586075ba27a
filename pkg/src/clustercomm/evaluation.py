"""Frozen-policy evaluation and checkpoints."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .comm import CommVariant, Variant, assemble_inbox, emit_payload, encode_payload
from .config import ExperimentConfig
from .envs import ACTION_NAMES, make_env
from .kmeans import CentroidTable
from .nn import forward, pack_arrays, unpack_net
from .rollout import Agent, EpisodeRecord, make_agents


class CheckpointMismatchError(ValueError):
    pass


def env_from_config(cfg: ExperimentConfig, seed=None):
    return make_env(cfg.env, n_agents=cfg.n_agents, max_steps=cfg.max_steps,
                    step_penalty=cfg.step_penalty, seed=seed, **cfg.env_options)


def comm_variant(cfg: ExperimentConfig) -> CommVariant:
    return CommVariant(cfg.variant, cfg.k, cfg.hidden)


def fresh_agents(cfg: ExperimentConfig, seed: int) -> List[Agent]:
    env = env_from_config(cfg)
    return make_agents(comm_variant(cfg), env.n_agents, env.obs_dim, env.n_actions, cfg.hidden,
                       cfg.ppo.lr, seed, cfg.ppo.adam_eps)


# --- checkpoints -------------------------------------------------------------

@dataclass
class Checkpoint:
    config: ExperimentConfig
    seed: int
    agents: List[Agent]
    env_steps: int = 0
    extra: dict = field(default_factory=dict)

    def save(self, path):
        arrays = {}
        agents_meta = []
        for a in self.agents:
            prefix = f"agent{a.index}/"
            arrays.update(pack_arrays(prefix, a.net, a.adam))
            meta = {"spec": a.net.spec(), "version": a.net.version,
                    "adam": {"step": a.adam.step, "lr": a.adam.lr, "beta1": a.adam.beta1,
                             "beta2": a.adam.beta2, "eps": a.adam.eps},
                    "rng": a.rng.bit_generator.state, "table": None}
            if a.table is not None:
                arrays[prefix + "centroids"] = a.table.centroids
                arrays[prefix + "counts"] = a.table.counts
                meta["table"] = {"k": a.table.k, "d": a.table.d,
                                 "initialized": a.table.initialized, "skipped": a.table.skipped}
            agents_meta.append(meta)
        header = {"format": "clustercomm-checkpoint/1", "config": self.config.to_dict(),
                  "config_hash": self.config.content_hash(self.seed), "seed": self.seed,
                  "env_steps": self.env_steps, "agents": agents_meta, "extra": self.extra}
        arrays["__meta__"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        with open(path, "wb") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with np.load(path) as data:
            header = json.loads(bytes(data["__meta__"]).decode())
            cfg = ExperimentConfig.from_dict(header["config"])
            agents = []
            for i, meta in enumerate(header["agents"]):
                prefix = f"agent{i}/"
                net, adam = unpack_net(prefix, data, meta["spec"], meta["adam"])
                net.version = meta["version"]
                rng = np.random.default_rng()
                rng.bit_generator.state = meta["rng"]
                table = None
                if meta["table"] is not None:
                    t = meta["table"]
                    table = CentroidTable(t["k"], t["d"], np.array(data[prefix + "centroids"]),
                                          np.array(data[prefix + "counts"]), t["initialized"],
                                          t["skipped"])
                agents.append(Agent(i, net, adam, table, rng))
        return cls(cfg, header["seed"], agents, header["env_steps"], header.get("extra", {}))


def exchange_tables(agents: List[Agent]) -> List[Optional[CentroidTable]]:
    """Copies of every agent's centroid table, as broadcast once after training."""
    return [None if a.table is None else a.table.copy() for a in agents]


# --- evaluation ----------------------------------------------------------------

@dataclass
class EvalMetrics:
    avg_reward: float
    success_rate: float
    avg_steps: float
    episodes: int
    records: List[EpisodeRecord] = field(default_factory=list, repr=False)

    @classmethod
    def from_records(cls, records: List[EpisodeRecord]) -> "EvalMetrics":
        n = len(records)
        if n == 0:
            return cls(float("nan"), float("nan"), float("nan"), 0, [])
        return cls(float(np.mean([r.reward for r in records])),
                   sum(r.success for r in records) / n,
                   float(np.mean([r.steps for r in records])), n, records)

    def summary(self) -> dict:
        return {"avg_reward": self.avg_reward, "success_rate": self.success_rate,
                "avg_steps": self.avg_steps, "episodes": self.episodes}


def episode_seed(base_seed, episode):
    return np.random.SeedSequence([int(base_seed), int(episode)])


def evaluate(agents: List[Agent], cfg: ExperimentConfig, episodes: int, seed: int = 12345,
             deterministic: bool = True, index_mode: bool = False, tables=None,
             trace: Optional[list] = None, n_slots: Optional[int] = None) -> EvalMetrics:
    """Run ``episodes`` fresh episodes with frozen parameters and centroids.

    Episode ``j`` always uses the layout seeded by ``(seed, j)``, so results do
    not depend on how many episodes run side by side. ``index_mode`` sends
    CentroidComm messages as indices decoded through ``tables`` (defaults to
    a fresh exchange of the agents' tables). ``trace`` collects one entry per
    agent per step: ``(episode, t, sender, action, tag, payload)``.
    """
    cv = comm_variant(cfg)
    if len(agents) != (env_from_config(cfg).n_agents):
        raise CheckpointMismatchError("agent count does not match the environment")
    if index_mode:
        if cv.kind is not Variant.CENTROID:
            raise CheckpointMismatchError("index_mode only applies to centroidcomm")
        cv = cv.with_index_mode()
        tables = exchange_tables(agents) if tables is None else tables
    else:
        tables = [a.table for a in agents]
    for a in agents:
        if a.net.obs_dim != env_from_config(cfg).obs_dim:
            raise CheckpointMismatchError("checkpoint observation width does not match env")
        if a.net.msg_dim != (len(agents) - 1) * cv.slot_width:
            raise CheckpointMismatchError("checkpoint message width does not match variant")

    width = n_slots or min(cfg.eval_envs, episodes)
    envs = [env_from_config(cfg) for _ in range(width)]
    n = len(agents)
    obs = np.zeros((width, n, envs[0].obs_dim))
    slots = [np.zeros((width, cv.slot_width)) for _ in range(n)]
    episode_of = np.full(width, -1)
    t_of = np.zeros(width, dtype=np.int64)
    returns = np.zeros((width, n))
    action_rngs = [None] * width
    records = [None] * episodes
    next_episode = 0

    def start(slot):
        nonlocal next_episode
        if next_episode >= episodes:
            episode_of[slot] = -1
            return
        ss = episode_seed(seed, next_episode)
        env_ss, act_ss = ss.spawn(2)
        obs[slot] = _reset_with(envs[slot], env_ss)
        action_rngs[slot] = np.random.default_rng(act_ss)
        episode_of[slot] = next_episode
        t_of[slot] = 0
        returns[slot] = 0.0
        for s in slots:
            s[slot] = 0.0
        next_episode += 1

    for slot in range(width):
        start(slot)
    random_policy = cv.kind is Variant.RANDOM
    while (episode_of >= 0).any():
        live = np.flatnonzero(episode_of >= 0)
        actions = np.zeros((len(live), n), dtype=np.int64)
        new_slots = [s.copy() for s in slots]
        payloads = []
        for i, agent in enumerate(agents):
            inbox = assemble_inbox([s[live] for s in slots], i)
            out = forward(agent.net, obs[live, i], inbox)
            if random_policy:
                actions[:, i] = [action_rngs[s].integers(agent.net.n_actions) for s in live]
            elif deterministic:
                actions[:, i] = np.argmax(out.logits, axis=1)
            else:
                logits = out.logits
                for row, s in enumerate(live):
                    p = np.exp(logits[row] - logits[row].max())
                    actions[row, i] = action_rngs[s].choice(len(p), p=p / p.sum())
            payload = emit_payload(cv, out.representation, agent.table)
            payloads.append(payload)
            if payload is not None:
                new_slots[i][live] = encode_payload(cv, payload, tables[i])
        if trace is not None:
            for row, s in enumerate(live):
                for i in range(n):
                    p = payloads[i]
                    if p is None:
                        tag, val = "none", ""
                    elif np.ndim(p) == 1:
                        tag, val = "index", int(p[row])
                    else:
                        tag, val = "vector", tuple(float(x) for x in p[row])
                    trace.append((int(episode_of[s]), int(t_of[s]), i, int(actions[row, i]),
                                  tag, val))
        slots = new_slots
        for row, s in enumerate(live):
            res = envs[s].step(actions[row])
            returns[s] += res.rewards
            t_of[s] += 1
            if res.done:
                records[episode_of[s]] = EpisodeRecord(float(returns[s].mean()), bool(res.success),
                                                       int(t_of[s]))
                start(s)
            else:
                obs[s] = res.observations
    return EvalMetrics.from_records(records)


def _reset_with(env, seed_seq):
    env.rng = np.random.default_rng(seed_seq)
    return env.reset()[1]


def write_message_trace(trace, path):
    """CSV of (episode, t, sender, tag, payload) rows from an :func:`evaluate` trace."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "t", "sender", "tag", "payload"])
        for episode, t, sender, _action, tag, payload in trace:
            if tag == "vector":
                payload = " ".join(repr(x) for x in payload)
            w.writerow([episode, t, sender, tag, payload])


def render_episode(agents: List[Agent], cfg: ExperimentConfig, seed: int = 0,
                   index_mode: bool = False) -> List[str]:
    """ASCII frames of evaluation episode 0 under ``seed``, one per step."""
    trace = []
    evaluate(agents, cfg, 1, seed=seed, index_mode=index_mode, trace=trace)
    env = env_from_config(cfg)
    _reset_with(env, episode_seed(seed, 0).spawn(2)[0])
    frames = [f"t=0\n{env.render()}"]
    by_t = {}
    for _episode, t, sender, action, tag, payload in trace:
        by_t.setdefault(t, {})[sender] = (action, tag, payload)
    for t in sorted(by_t):
        acts = [by_t[t][i][0] for i in range(env.n_agents)]
        res = env.step(acts)
        msgs = " ".join(f"{i}:{by_t[t][i][2]}" for i in range(env.n_agents)
                        if by_t[t][i][1] == "index")
        line = f"t={t + 1} actions={[ACTION_NAMES[a] for a in acts]} reward={res.rewards.round(3).tolist()}"
        if msgs:
            line += f" messages {msgs}"
        if res.done:
            line += f" done success={res.success}"
        frames.append(f"{line}\n{env.render()}")
    return frames

"""Agents, vectorized environments and synchronous rollout collection."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .comm import CommVariant, Variant, assemble_inbox, emit_payload, encode_payload
from .kmeans import CentroidTable
from .nn import AdamState, AgentNet, forward


@dataclass
class Agent:
    """Everything one agent owns. Nothing in here is shared with other agents."""

    index: int
    net: AgentNet
    adam: AdamState
    table: Optional[CentroidTable]
    rng: np.random.Generator

    def state_hash(self) -> str:
        h = hashlib.sha256(self.net.param_hash().encode())
        for arr in list(self.adam.m.values()) + list(self.adam.v.values()):
            h.update(arr.tobytes())
        if self.table is not None:
            h.update(self.table.centroids.tobytes())
            h.update(self.table.counts.tobytes())
        return h.hexdigest()


def make_agents(cv: CommVariant, n_agents, obs_dim, n_actions, hidden, lr, seed, adam_eps=1e-8):
    ss = np.random.SeedSequence(seed)
    agents = []
    msg_dim = (n_agents - 1) * cv.slot_width
    for i, child in enumerate(ss.spawn(n_agents)):
        init_seed, rng_seed = child.spawn(2)
        net = AgentNet(obs_dim, n_actions, msg_dim=msg_dim, hidden=hidden,
                       spherical=cv.kind.spherical,
                       seed=int(init_seed.generate_state(1)[0]))
        adam = AdamState.zeros_like(net.params, lr=lr, eps=adam_eps)
        table = CentroidTable(cv.k, hidden) if cv.kind.clusters else None
        agents.append(Agent(i, net, adam, table, np.random.default_rng(rng_seed)))
    return agents


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def sample_actions(logits, rng):
    logp = log_softmax(logits)
    cdf = np.cumsum(np.exp(logp), axis=-1)
    u = rng.random(len(logits))[:, None]
    actions = np.minimum((cdf < u * cdf[:, -1:]).sum(axis=-1), logits.shape[-1] - 1)
    return actions, logp[np.arange(len(logits)), actions]


class VecEnv:
    """``n_envs`` copies of one environment stepped in lockstep, with the
    messages in flight between consecutive steps."""

    def __init__(self, env_fn, n_envs, seed, cv: CommVariant):
        self.envs = [env_fn() for _ in range(n_envs)]
        self.cv = cv
        for env, child in zip(self.envs, np.random.SeedSequence(seed).spawn(n_envs)):
            env.rng = np.random.default_rng(child)
        self.n_envs = n_envs
        self.n_agents = self.envs[0].n_agents
        self.obs = np.stack([env.reset()[1] for env in self.envs])  # (E, N, D)
        self.t = np.zeros(n_envs, dtype=np.int64)
        self.returns = np.zeros((n_envs, self.n_agents))
        self.slots = [np.zeros((n_envs, cv.slot_width)) for _ in range(self.n_agents)]

    def inbox(self, agent):
        return assemble_inbox(self.slots, agent)


@dataclass
class RolloutBuffer:
    obs: np.ndarray
    inbox: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    reps: np.ndarray
    last_values: np.ndarray = None

    @classmethod
    def empty(cls, horizon, n_envs, obs_dim, inbox_dim, rep_dim):
        return cls(np.zeros((horizon, n_envs, obs_dim)), np.zeros((horizon, n_envs, inbox_dim)),
                   np.zeros((horizon, n_envs), dtype=np.int64), np.zeros((horizon, n_envs)),
                   np.zeros((horizon, n_envs)), np.zeros((horizon, n_envs)),
                   np.zeros((horizon, n_envs), dtype=bool), np.zeros((horizon, n_envs, rep_dim)))

    def __len__(self):
        return self.actions.size

    def flat_reps(self):
        return self.reps.reshape(-1, self.reps.shape[-1])

    def clear(self):
        for arr in (self.obs, self.inbox, self.logp, self.values, self.rewards, self.reps):
            arr[...] = 0.0
        self.actions[...] = 0
        self.dones[...] = False
        self.last_values = None


@dataclass
class EpisodeRecord:
    reward: float  # mean over agents of the undiscounted episode return
    success: bool
    steps: int


@dataclass
class RolloutStats:
    episodes: List[EpisodeRecord] = field(default_factory=list)


def collect_rollout(vec: VecEnv, agents: List[Agent], cv: CommVariant, horizon: int,
                    trace: Optional[list] = None, buffers=None):
    """Run ``horizon`` synchronous steps in every env.

    At each step every agent reads its observation and the inbox of messages
    sent on the previous step, acts, and emits a new message; the new
    messages only become visible after all agents have acted. Finished
    episodes are reset and their in-flight messages zeroed.

    Returns ``(buffers, stats)`` with one :class:`RolloutBuffer` per agent.
    ``trace``, if given, receives one dict per step with the per-agent
    inboxes, emitted slots and episode time of every env.
    """
    n, e = vec.n_agents, vec.n_envs
    obs_dim = vec.obs.shape[-1]
    rep_dim = agents[0].net.rep_dim
    if buffers is None:
        buffers = [RolloutBuffer.empty(horizon, e, obs_dim, agents[0].net.msg_dim, rep_dim)
                   for _ in range(n)]
    stats = RolloutStats()
    random_policy = cv.kind is Variant.RANDOM
    for t in range(horizon):
        actions = np.zeros((e, n), dtype=np.int64)
        new_slots = []
        inboxes = []
        for i, agent in enumerate(agents):
            inbox = vec.inbox(i)
            out = forward(agent.net, vec.obs[:, i], inbox)
            if random_policy:
                a = agent.rng.integers(agent.net.n_actions, size=e)
                logp = np.full(e, -np.log(agent.net.n_actions))
            else:
                a, logp = sample_actions(out.logits, agent.rng)
            actions[:, i] = a
            payload = emit_payload(cv, out.representation, agent.table)
            slot = encode_payload(cv, payload, agent.table)
            new_slots.append(slot if slot is not None else np.zeros((e, 0)))
            inboxes.append(inbox)
            b = buffers[i]
            b.obs[t] = vec.obs[:, i]
            b.inbox[t] = inbox
            b.actions[t] = a
            b.logp[t] = logp
            b.values[t] = out.value
            b.reps[t] = out.representation
        if trace is not None:
            trace.append({"t": vec.t.copy(), "inbox": [x.copy() for x in inboxes],
                          "sent": [s.copy() for s in new_slots]})
        for k, env in enumerate(vec.envs):
            res = env.step(actions[k])
            vec.returns[k] += res.rewards
            vec.t[k] += 1
            for i in range(n):
                buffers[i].rewards[t, k] = res.rewards[i]
                buffers[i].dones[t, k] = res.done
            if res.done:
                stats.episodes.append(EpisodeRecord(float(vec.returns[k].mean()), res.success,
                                                    int(vec.t[k])))
                vec.obs[k] = env.reset()[1]
                vec.returns[k] = 0.0
                vec.t[k] = 0
                for s in new_slots:
                    s[k] = 0.0
            else:
                vec.obs[k] = res.observations
        vec.slots = new_slots
    for i, agent in enumerate(agents):
        buffers[i].last_values = forward(agent.net, vec.obs[:, i], vec.inbox(i)).value
    return buffers, stats

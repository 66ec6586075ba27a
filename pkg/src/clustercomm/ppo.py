"""Independent PPO: per-agent GAE, clipped-surrogate updates and centroid updates."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .comm import CommVariant
from .config import PPOHyper
from .kmeans import TooFewSamplesError, init_centroids, minibatch_update
from .nn import NonFiniteGradientError, apply_adam, backward, clip_by_global_norm, forward
from .rollout import Agent, RolloutBuffer, log_softmax

log = logging.getLogger(__name__)


class PPOUpdateError(FloatingPointError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def compute_gae(rewards, values, dones, bootstrap_value, gamma, lam):
    """Generalized advantage estimates along axis 0.

    ``dones[t]`` marks that the episode ended with the transition at ``t``;
    nothing after it is credited to ``t``. Works on (T,) or (T, E) arrays.
    Returns raw (unnormalized) ``advantages`` and ``returns = advantages + values``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    if not rewards.shape == values.shape == dones.shape:
        raise ValueError("rewards, values and dones must have equal shapes")
    adv = np.zeros_like(rewards)
    last = np.zeros_like(rewards[0]) if rewards.ndim > 1 else 0.0
    next_value = np.asarray(bootstrap_value, dtype=np.float64)
    for t in reversed(range(len(rewards))):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        last = delta + gamma * lam * live * last
        adv[t] = last
        next_value = values[t]
    return adv, adv + values


def normalize(adv):
    std = adv.std()
    return (adv - adv.mean()) / (std + 1e-8) if len(adv) > 1 else adv - adv.mean()


@dataclass
class LossTerms:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    approx_kl: float
    grad_logits: np.ndarray
    grad_value: np.ndarray


def ppo_loss(logits, values, actions, old_logp, advantages, returns, hyper: PPOHyper) -> LossTerms:
    """Clipped surrogate + value MSE - entropy bonus, with gradients w.r.t.
    logits and values (means over the minibatch)."""
    b = len(actions)
    logp_all = log_softmax(logits)
    p = np.exp(logp_all)
    rows = np.arange(b)
    logp = logp_all[rows, actions]
    ratio = np.exp(logp - old_logp)
    surr1 = ratio * advantages
    surr2 = np.clip(ratio, 1 - hyper.clip, 1 + hyper.clip) * advantages
    policy_loss = -np.mean(np.minimum(surr1, surr2))
    entropy_each = -np.sum(p * logp_all, axis=1)
    value_err = values - returns

    active = surr1 <= surr2
    g_logp = np.where(active, -ratio * advantages, 0.0) / b
    onehot = np.zeros_like(logits)
    onehot[rows, actions] = 1.0
    grad_logits = g_logp[:, None] * (onehot - p)
    grad_logits += hyper.ent_coef / b * p * (logp_all + entropy_each[:, None])
    grad_value = 2.0 * hyper.vf_coef * value_err / b
    return LossTerms(float(policy_loss), float(np.mean(value_err**2)), float(entropy_each.mean()),
                     float(np.mean(np.abs(ratio - 1.0) > hyper.clip)),
                     float(np.mean(old_logp - logp)), grad_logits, grad_value)


def ppo_update(agent: Agent, buffer: RolloutBuffer, hyper: PPOHyper) -> dict:
    """``epochs`` passes of shuffled minibatch Adam steps on one agent's data.

    Inbox encodings are inputs like the observation; no gradient leaves this
    agent's parameters.
    """
    adv, ret = compute_gae(buffer.rewards, buffer.values, buffer.dones, buffer.last_values,
                           hyper.gamma, hyper.lam)
    n = len(buffer)
    obs = buffer.obs.reshape(n, -1)
    inbox = buffer.inbox.reshape(n, -1)
    actions = buffer.actions.reshape(n)
    old_logp = buffer.logp.reshape(n)
    adv = adv.reshape(n)
    ret = ret.reshape(n)
    mb = min(hyper.minibatch, n)
    sums = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "clip_fraction": 0.0,
            "approx_kl": 0.0, "grad_norm": 0.0}
    count = 0
    for _ in range(hyper.epochs):
        perm = agent.rng.permutation(n)
        for start in range(0, n, mb):
            idx = perm[start:start + mb]
            out = forward(agent.net, obs[idx], inbox[idx])
            terms = ppo_loss(out.logits, out.value, actions[idx], old_logp[idx],
                             normalize(adv[idx]), ret[idx], hyper)
            diag = {"policy_loss": terms.policy_loss, "value_loss": terms.value_loss,
                    "entropy": terms.entropy}
            if not all(np.isfinite(v) for v in diag.values()):
                raise PPOUpdateError(f"agent {agent.index}: non-finite loss", diag)
            grads = backward(agent.net, out.cache, terms.grad_logits, terms.grad_value)
            grads, norm = clip_by_global_norm(grads, hyper.max_grad_norm)
            try:
                agent.adam = apply_adam(agent.net, grads, agent.adam)
            except NonFiniteGradientError as exc:
                raise PPOUpdateError(f"agent {agent.index}: {exc}", diag) from exc
            for key in ("policy_loss", "value_loss", "entropy", "clip_fraction", "approx_kl"):
                sums[key] += getattr(terms, key)
            sums["grad_norm"] += norm
            count += 1
    return {k: v / max(count, 1) for k, v in sums.items()}


def update_clustering(agent: Agent, buffer: RolloutBuffer, cv: CommVariant):
    """Fold this rollout's representations into the agent's centroid table.

    The first call with at least ``k`` representations seeds the table; later
    calls run the streaming update over all representations in collection
    order. No-op for variants without clustering.
    """
    if not cv.kind.clusters or agent.table is None:
        return agent.table
    reps = buffer.flat_reps() if buffer.reps.ndim == 3 else buffer.reps
    if not agent.table.initialized:
        try:
            agent.table = init_centroids(reps, cv.k, agent.rng)
        except TooFewSamplesError:
            log.debug("agent %d: deferring centroid init (%d samples)", agent.index, len(reps))
        return agent.table
    minibatch_update(agent.table, reps)
    return agent.table

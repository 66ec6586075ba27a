"""Small numpy MLP engine: tanh encoders, linear heads, exact gradients, Adam.

Every agent owns one :class:`AgentNet`. Parameters live in a flat ``dict`` of
float64 arrays so optimizer state, checkpoints and hashing all work on the
same structure.
"""
from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

Params = Dict[str, np.ndarray]

SCALE_NORM_EPS = 1e-8


class ConfigurationError(ValueError):
    pass


class StaleCacheError(RuntimeError):
    pass


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class DenseLayer:
    name: str
    in_dim: int
    out_dim: int
    activation: str = "tanh"  # "tanh" | "identity"

    def __post_init__(self):
        if self.activation not in ("tanh", "identity"):
            raise ConfigurationError(f"layer {self.name}: unknown activation {self.activation!r}")


def orthogonal(shape, gain, rng):
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def scale_norm(x, r, eps=SCALE_NORM_EPS):
    """Project rows of ``x`` onto the sphere of radius ``r``.

    The denominator is ``||x||`` except when ``||x|| < eps``, where ``eps`` is
    added to keep the map finite at the origin.
    """
    x = np.asarray(x, dtype=np.float64)
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    denom = np.where(n < eps, n + eps, n)
    return r * x / denom


def scale_norm_backward(x, r, grad_out, eps=SCALE_NORM_EPS):
    """Return ``(grad_x, grad_r)`` for ``y = scale_norm(x, r)``."""
    x = np.asarray(x, dtype=np.float64)
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    denom = np.where(n < eps, n + eps, n)
    safe_n = np.where(n > 0, n, 1.0)
    xg = np.sum(x * grad_out, axis=-1, keepdims=True)
    # d(denom)/dx = x / n on both branches
    grad_x = r * grad_out / denom - r * x * xg / (denom**2 * safe_n)
    grad_r = float(np.sum(xg / denom))
    return grad_x, grad_r


class AgentNet:
    """One agent's private network.

    ``obs_encoder`` and the optional ``msg_encoder`` are two tanh layers of
    width ``hidden``; their outputs are concatenated and fed to a linear
    action head and a linear value head. With ``spherical=True`` the
    observation representation is passed through :func:`scale_norm` with a
    learned radius before anything else sees it.
    """

    def __init__(self, obs_dim, n_actions, msg_dim=0, hidden=32, spherical=False, seed=0,
                 init="orthogonal"):
        if obs_dim <= 0 or n_actions <= 0 or msg_dim < 0 or hidden <= 0:
            raise ConfigurationError(
                f"bad AgentNet sizes obs_dim={obs_dim} n_actions={n_actions} "
                f"msg_dim={msg_dim} hidden={hidden}")
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.msg_dim = msg_dim
        self.hidden = hidden
        self.spherical = spherical
        self.version = 0

        self.obs_layers = [DenseLayer("obs0", obs_dim, hidden), DenseLayer("obs1", hidden, hidden)]
        self.msg_layers: List[DenseLayer] = []
        if msg_dim > 0:
            self.msg_layers = [DenseLayer("msg0", msg_dim, hidden), DenseLayer("msg1", hidden, hidden)]
        head_in = hidden * (2 if msg_dim > 0 else 1)
        self.action_head = DenseLayer("act", head_in, n_actions, "identity")
        self.value_head = DenseLayer("val", head_in, 1, "identity")

        self.params: Params = {}
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            if init == "orthogonal":
                gain = {"act": 0.01, "val": 1.0}.get(layer.name, np.sqrt(2.0))
                w = orthogonal((layer.out_dim, layer.in_dim), gain, rng)
            elif init == "normal":
                w = rng.standard_normal((layer.out_dim, layer.in_dim)) / np.sqrt(layer.in_dim)
            elif init == "zeros":
                w = np.zeros((layer.out_dim, layer.in_dim))
            else:
                raise ConfigurationError(f"unknown init {init!r}")
            self.params[layer.name + ".W"] = w
            self.params[layer.name + ".b"] = np.zeros(layer.out_dim)
            if init == "normal":
                self.params[layer.name + ".b"] = 0.1 * rng.standard_normal(layer.out_dim)
        if spherical:
            self.params["scale.r"] = np.array(np.sqrt(hidden))

    @property
    def layers(self) -> List[DenseLayer]:
        return self.obs_layers + self.msg_layers + [self.action_head, self.value_head]

    @property
    def rep_dim(self) -> int:
        return self.hidden

    def bump_version(self):
        self.version += 1

    def copy(self) -> "AgentNet":
        other = AgentNet.__new__(AgentNet)
        other.__dict__.update(self.__dict__)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def param_hash(self) -> str:
        h = hashlib.sha256()
        for key in sorted(self.params):
            h.update(key.encode())
            h.update(np.ascontiguousarray(self.params[key]).tobytes())
        return h.hexdigest()

    def spec(self) -> dict:
        return {"obs_dim": self.obs_dim, "n_actions": self.n_actions, "msg_dim": self.msg_dim,
                "hidden": self.hidden, "spherical": self.spherical}


@dataclass
class ForwardResult:
    representation: np.ndarray
    logits: np.ndarray
    value: np.ndarray
    cache: dict = field(repr=False)


def _dense(layer: DenseLayer, params: Params, x):
    w = params[layer.name + ".W"]
    if x.shape[-1] != w.shape[1]:
        raise ConfigurationError(
            f"layer {layer.name}: expected input width {w.shape[1]}, got {x.shape[-1]}")
    z = x @ w.T + params[layer.name + ".b"]
    return np.tanh(z) if layer.activation == "tanh" else z


def forward(net: AgentNet, obs, inbox=None) -> ForwardResult:
    """Run the network on one observation (1-D) or a batch (2-D).

    ``inbox`` is the encoded message vector; omit it (or pass a zero-width
    array) for nets built without a message encoder.
    """
    obs = np.asarray(obs, dtype=np.float64)
    single = obs.ndim == 1
    x = obs[None, :] if single else obs
    batch = x.shape[0]
    if inbox is None:
        inbox = np.zeros((batch, 0))
    m = np.asarray(inbox, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.shape[-1] != net.msg_dim:
        raise ConfigurationError(
            f"layer msg0: expected inbox width {net.msg_dim}, got {m.shape[-1]}")
    p = net.params

    obs_acts = [x]
    for layer in net.obs_layers:
        obs_acts.append(_dense(layer, p, obs_acts[-1]))
    h = obs_acts[-1]
    rep = scale_norm(h, p["scale.r"]) if net.spherical else h

    msg_acts = [m]
    for layer in net.msg_layers:
        msg_acts.append(_dense(layer, p, msg_acts[-1]))
    z = np.concatenate([rep, msg_acts[-1]], axis=1) if net.msg_layers else rep

    logits = _dense(net.action_head, p, z)
    value = _dense(net.value_head, p, z)[:, 0]
    cache = {"obs_acts": obs_acts, "msg_acts": msg_acts, "z": z, "version": net.version,
             "single": single}
    if single:
        return ForwardResult(rep[0], logits[0], value[0], cache)
    return ForwardResult(rep, logits, value, cache)


def _dense_backward(layer, params, x_in, y_out, grad_y, grads, need_input_grad=True):
    if layer.activation == "tanh":
        grad_y = grad_y * (1.0 - y_out**2)
    grads[layer.name + ".W"] = grad_y.T @ x_in
    grads[layer.name + ".b"] = grad_y.sum(axis=0)
    if need_input_grad:
        return grad_y @ params[layer.name + ".W"]
    return None


def backward(net: AgentNet, cache: dict, grad_logits, grad_value) -> Params:
    """Gradients of ``sum(grad_logits * logits) + sum(grad_value * value)``.

    The inbox is treated as a constant: the first message layer never
    produces an input gradient.
    """
    if cache["version"] != net.version:
        raise StaleCacheError(
            f"cache from parameter version {cache['version']}, net is at {net.version}")
    p = net.params
    gl = np.atleast_2d(np.asarray(grad_logits, dtype=np.float64))
    gv = np.atleast_1d(np.asarray(grad_value, dtype=np.float64)).reshape(-1, 1)
    z = cache["z"]
    grads: Params = {}
    gz = _dense_backward(net.action_head, p, z, None, gl, grads)
    gz = gz + _dense_backward(net.value_head, p, z, None, gv, grads)

    d = net.hidden
    g_rep = gz[:, :d]
    if net.msg_layers:
        g = gz[:, d:]
        acts = cache["msg_acts"]
        for i in reversed(range(len(net.msg_layers))):
            g = _dense_backward(net.msg_layers[i], p, acts[i], acts[i + 1], g, grads,
                                need_input_grad=i > 0)

    acts = cache["obs_acts"]
    if net.spherical:
        g, g_r = scale_norm_backward(acts[-1], p["scale.r"], g_rep)
        grads["scale.r"] = np.array(g_r)
    else:
        g = g_rep
    for i in reversed(range(len(net.obs_layers))):
        g = _dense_backward(net.obs_layers[i], p, acts[i], acts[i + 1], g, grads,
                            need_input_grad=i > 0)
    return grads


def global_norm(grads: Params) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: Params, max_norm: float):
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


@dataclass
class AdamState:
    m: Params
    v: Params
    step: int = 0
    lr: float = 2.5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Params, **hyper) -> "AdamState":
        return cls(m={k: np.zeros_like(v) for k, v in params.items()},
                   v={k: np.zeros_like(v) for k, v in params.items()}, **hyper)

    def copy(self) -> "AdamState":
        return AdamState({k: a.copy() for k, a in self.m.items()},
                         {k: a.copy() for k, a in self.v.items()},
                         self.step, self.lr, self.beta1, self.beta2, self.eps)


def adam_step(params: Params, grads: Params, state: AdamState):
    """Bias-corrected Adam. Returns fresh ``(params, state)``; inputs are untouched.

    Raises :class:`NonFiniteGradientError` without updating anything if any
    gradient entry is nan/inf.
    """
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for {k}")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            g = np.zeros_like(p)
        m = b1 * state.m[k] + (1 - b1) * g
        v = b2 * state.v[k] + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_p[k] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v, t, state.lr, b1, b2, state.eps)


def apply_adam(net: AgentNet, grads: Params, state: AdamState) -> AdamState:
    net.params, state = adam_step(net.params, grads, state)
    net.bump_version()
    return state


# --- checkpoint serialization -------------------------------------------------

def pack_arrays(prefix: str, net: AgentNet, adam: Optional[AdamState]) -> Dict[str, np.ndarray]:
    out = {f"{prefix}param/{k}": v for k, v in net.params.items()}
    if adam is not None:
        out.update({f"{prefix}adam_m/{k}": v for k, v in adam.m.items()})
        out.update({f"{prefix}adam_v/{k}": v for k, v in adam.v.items()})
    return out


def unpack_net(prefix: str, arrays, spec: dict, adam_meta: Optional[dict]):
    net = AgentNet(**spec, init="zeros")
    for k in list(net.params):
        net.params[k] = np.array(arrays[f"{prefix}param/{k}"], dtype=np.float64)
    adam = None
    if adam_meta is not None:
        adam = AdamState({k: np.array(arrays[f"{prefix}adam_m/{k}"]) for k in net.params},
                         {k: np.array(arrays[f"{prefix}adam_v/{k}"]) for k in net.params},
                         **adam_meta)
    return net, adam


def save_net(path, net: AgentNet, adam: Optional[AdamState] = None):
    """Single-net checkpoint: ``.npz`` with a JSON header describing shapes."""
    arrays = pack_arrays("", net, adam)
    meta = {"spec": net.spec(), "version": net.version,
            "adam": None if adam is None else {"step": adam.step, "lr": adam.lr,
                                               "beta1": adam.beta1, "beta2": adam.beta2,
                                               "eps": adam.eps},
            "shapes": {k: list(v.shape) for k, v in net.params.items()}}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_net(path):
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        net, adam = unpack_net("", data, meta["spec"], meta["adam"])
    net.version = meta["version"]
    return net, adam

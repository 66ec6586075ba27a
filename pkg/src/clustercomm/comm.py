"""Message emission and inbox encoding for every communication variant.

Messages travel as *slots*: each sender's message is encoded into a fixed
width vector (one-hot of width k for indices, raw d-vector otherwise) and a
receiver's inbox is the concatenation of all other senders' slots in
ascending sender order. A missing message (first step of an episode) is an
all-zero slot.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np

from .kmeans import CentroidTable, assign


class ProtocolError(RuntimeError):
    pass


class Variant(str, Enum):
    RANDOM = "random"
    NOCOMM = "nocomm"
    LATENT = "latentcomm"
    CLUSTER = "clustercomm"
    SPHERICAL = "spherical"
    CENTROID = "centroidcomm"

    @classmethod
    def parse(cls, name) -> "Variant":
        if isinstance(name, Variant):
            return name
        key = str(name).lower().replace("-", "").replace("_", "")
        aliases = {"latent": "latentcomm", "cluster": "clustercomm", "centroid": "centroidcomm",
                   "sphericalclustercomm": "spherical", "clustercommspherical": "spherical"}
        key = aliases.get(key, key)
        for v in cls:
            if v.value == key:
                return v
        raise ValueError(f"unknown variant {name!r}; choose from {[v.value for v in cls]}")

    @property
    def clusters(self) -> bool:
        return self in (Variant.CLUSTER, Variant.SPHERICAL, Variant.CENTROID)

    @property
    def communicates(self) -> bool:
        return self not in (Variant.RANDOM, Variant.NOCOMM)

    @property
    def spherical(self) -> bool:
        return self is Variant.SPHERICAL

    @property
    def display(self) -> str:
        return {"random": "Random", "nocomm": "NoComm", "latentcomm": "LatentComm",
                "clustercomm": "ClusterComm", "spherical": "ClusterComm (Spher.)",
                "centroidcomm": "CentroidComm"}[self.value]


@dataclass(frozen=True)
class CommVariant:
    kind: Variant
    k: int = 8
    d: int = 32
    test_time_index_mode: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", Variant.parse(self.kind))
        if self.kind.clusters and self.k < 2:
            raise ValueError(f"k must be >= 2 for {self.kind.value}, got {self.k}")

    @property
    def sends_index(self) -> bool:
        """Whether messages on the wire are cluster indices."""
        if self.kind is Variant.CENTROID:
            return self.test_time_index_mode
        return self.kind in (Variant.CLUSTER, Variant.SPHERICAL)

    @property
    def slot_width(self) -> int:
        """Width of one sender's encoded message as seen by the receiver's net."""
        if self.kind in (Variant.CLUSTER, Variant.SPHERICAL):
            return self.k
        if self.kind in (Variant.LATENT, Variant.CENTROID):
            return self.d
        return 0

    def with_index_mode(self, on=True) -> "CommVariant":
        return CommVariant(self.kind, self.k, self.d, on)


@dataclass(frozen=True)
class Message:
    tag: str  # "none" | "index" | "vector"
    payload: object = None

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def index(cls, i):
        return cls("index", int(i))

    @classmethod
    def vector(cls, v):
        v = np.asarray(v, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise ProtocolError("vector message has non-finite entries")
        return cls("vector", v)

    def __eq__(self, other):
        if not isinstance(other, Message) or self.tag != other.tag:
            return False
        if self.tag == "vector":
            return np.array_equal(self.payload, other.payload)
        return self.payload == other.payload

    __hash__ = None


def message_input_width(variant, n_agents, k=8, d=32) -> int:
    if n_agents < 2:
        raise ValueError("need at least two agents")
    cv = variant if isinstance(variant, CommVariant) else CommVariant(variant, k, d)
    return (n_agents - 1) * cv.slot_width


def _legal_tags(cv: CommVariant):
    if not cv.kind.communicates:
        return {"none"}
    if cv.kind is Variant.CENTROID:
        return {"vector", "index"}
    return {"index"} if cv.sends_index else {"vector"}


def _cluster_index(representation, table: Optional[CentroidTable]):
    if table is None or not table.initialized:
        return 0
    return assign(representation, table)


def emit_message(cv: CommVariant, representation, table: Optional[CentroidTable] = None) -> Message:
    rep = np.asarray(representation, dtype=np.float64)
    kind = cv.kind
    if not kind.communicates:
        return Message.none()
    if kind is Variant.LATENT:
        return Message.vector(rep)
    idx = _cluster_index(rep, table)
    if kind is Variant.CENTROID and not cv.test_time_index_mode:
        if table is None or not table.initialized:
            return Message.vector(np.zeros(cv.d))
        return Message.vector(table.centroids[idx])
    return Message.index(idx)


def encode_message(cv: CommVariant, msg: Optional[Message],
                   sender_table: Optional[CentroidTable] = None) -> np.ndarray:
    """One slot. ``None`` means "no message yet" and encodes to zeros."""
    width = cv.slot_width
    if msg is None:
        return np.zeros(width)
    if msg.tag not in _legal_tags(cv):
        raise ProtocolError(f"{msg.tag!r} message is illegal for {cv.kind.value}")
    if msg.tag == "none":
        return np.zeros(0)
    if msg.tag == "vector":
        v = np.asarray(msg.payload, dtype=np.float64)
        if v.shape != (width,):
            raise ProtocolError(f"vector message of shape {v.shape}, expected ({width},)")
        return v.copy()
    i = msg.payload
    if cv.kind is Variant.CENTROID:
        # index mode: receiver looks the centroid up in the sender's exchanged table
        if sender_table is None:
            raise ProtocolError("centroid index message needs the sender's centroid table")
        if not 0 <= i < sender_table.k:
            raise ProtocolError(f"index {i} outside vocabulary of size {sender_table.k}")
        if not sender_table.initialized:
            return np.zeros(width)
        return sender_table.centroids[i].copy()
    if not 0 <= i < cv.k:
        raise ProtocolError(f"index {i} outside vocabulary of size {cv.k}")
    out = np.zeros(width)
    out[i] = 1.0
    return out


def encode_inbox(cv: CommVariant, inbox: Sequence[Optional[Message]],
                 sender_tables: Optional[Sequence[Optional[CentroidTable]]] = None) -> np.ndarray:
    """Concatenate the slots of an inbox ordered by sender index (own slot omitted)."""
    tags = {m.tag for m in inbox if m is not None}
    if len(tags) > 1:
        raise ProtocolError(f"mixed message tags in inbox: {sorted(tags)}")
    if not cv.kind.communicates:
        if tags - {"none"}:
            raise ProtocolError(f"{cv.kind.value} inbox must only hold empty messages")
        return np.zeros(0)
    tables = sender_tables if sender_tables is not None else [None] * len(inbox)
    parts = [encode_message(cv, m, t) for m, t in zip(inbox, tables)]
    return np.concatenate(parts) if parts else np.zeros(0)


# --- batched forms used by rollouts ------------------------------------------

def emit_payload(cv: CommVariant, reps, table: Optional[CentroidTable]):
    """Batch form of :func:`emit_message`: int indices (B,) or vectors (B, d), or ``None``."""
    kind = cv.kind
    if not kind.communicates:
        return None
    reps = np.asarray(reps, dtype=np.float64)
    if kind is Variant.LATENT:
        return reps.copy()
    if table is None or not table.initialized:
        idx = np.zeros(len(reps), dtype=np.int64)
    else:
        idx = assign(reps, table)
    if kind is Variant.CENTROID and not cv.test_time_index_mode:
        if table is None:
            return np.zeros((len(reps), cv.d))
        return table.centroids[idx].copy()
    return idx


def encode_payload(cv: CommVariant, payload, sender_table: Optional[CentroidTable] = None):
    """Batch form of :func:`encode_message` -> (B, slot_width)."""
    if payload is None:
        return None
    if not cv.sends_index:
        return np.asarray(payload, dtype=np.float64)
    idx = np.asarray(payload, dtype=np.int64)
    if cv.kind is Variant.CENTROID:
        if sender_table is None:
            raise ProtocolError("centroid index message needs the sender's centroid table")
        return sender_table.centroids[idx].copy()
    if np.any((idx < 0) | (idx >= cv.k)):
        raise ProtocolError(f"index outside vocabulary of size {cv.k}")
    out = np.zeros((len(idx), cv.k))
    out[np.arange(len(idx)), idx] = 1.0
    return out


def assemble_inbox(slots: List[np.ndarray], receiver: int) -> np.ndarray:
    """Receiver's inbox from per-sender slot arrays (each (B, w))."""
    others = [s for j, s in enumerate(slots) if j != receiver]
    if not others or others[0].shape[1] == 0:
        return np.zeros((slots[0].shape[0], 0))
    return np.concatenate(others, axis=1)

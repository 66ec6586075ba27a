"""Shared gridworld machinery: layouts, simultaneous moves, egocentric 5x5 views."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

FLOOR, WALL, DOOR = 0, 1, 2

UP, DOWN, LEFT, RIGHT, STAY = range(5)
INTERACT = STAY
ACTION_NAMES = ("up", "down", "left", "right", "stay")
MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1), STAY: (0, 0)}
N_ACTIONS = 5

VIEW = 5
RADIUS = VIEW // 2
N_FRAMES = 3


class EnvConfigError(ValueError):
    pass


class EpisodeDoneError(RuntimeError):
    pass


@dataclass
class GridState:
    layout: np.ndarray
    agent_positions: List[Tuple[int, int]]
    objects: Dict = field(default_factory=dict)
    step_counter: int = 0
    terminated: List[bool] = field(default_factory=list)

    def copy(self) -> "GridState":
        objects = {k: (v.copy() if hasattr(v, "copy") else v) for k, v in self.objects.items()}
        return GridState(self.layout.copy(), list(self.agent_positions), objects,
                         self.step_counter, list(self.terminated))


@dataclass
class StepResult:
    observations: np.ndarray  # (n_agents, obs_dim)
    rewards: np.ndarray  # (n_agents,)
    done: bool
    success: bool
    info: dict = field(default_factory=dict)


def _sight_lines():
    """For every view offset, the sample points between viewer and cell.

    Each sample is the tuple of cells the segment passes through at that
    point (two cells where it runs exactly along a cell border). A sample
    blocks sight only if every cell in it is opaque.
    """
    lines = {}
    ts = np.linspace(0.0, 1.0, 41)[1:-1]
    for dr in range(-RADIUS, RADIUS + 1):
        for dc in range(-RADIUS, RADIUS + 1):
            samples = []
            for t in ts:
                pr, pc = dr * t, dc * t
                rows = _cover(pr)
                cols = _cover(pc)
                cells = tuple(sorted({(r, c) for r in rows for c in cols}))
                if (0, 0) in cells or (dr, dc) in cells:
                    continue
                if cells not in samples:
                    samples.append(cells)
            lines[(dr, dc)] = samples
    return lines


def _cover(v):
    frac = v - np.floor(v)
    if abs(frac - 0.5) < 1e-9:
        return (int(np.floor(v)), int(np.floor(v)) + 1)
    return (int(np.floor(v + 0.5)),)


SIGHT_LINES = _sight_lines()


class GridEnv:
    """Base class for the N-agent gridworlds.

    Subclasses provide ``_build`` (fresh state), ``_resolve`` (task events and
    rewards after movement), ``_paint`` (object channels for one agent) and
    ``_blocked`` for non-wall obstacles.
    """

    name = "grid"
    channel_names: Tuple[str, ...] = ("wall", "agents")
    default_max_steps = 30
    agent_range = (2, 2)

    def __init__(self, n_agents=None, max_steps=None, step_penalty=None, seed=None):
        lo, hi = self.agent_range
        n_agents = lo if n_agents is None else int(n_agents)
        if not lo <= n_agents <= hi:
            raise EnvConfigError(f"{self.name} supports {lo}-{hi} agents, got {n_agents}")
        self.n_agents = n_agents
        self.max_steps = int(max_steps) if max_steps else self.default_max_steps_for(n_agents)
        self.step_penalty = (1.0 / self.max_steps) if step_penalty is None else float(step_penalty)
        self.rng = np.random.default_rng(seed)
        self.state: GridState = None
        self.done = True
        self._frames = None
        self._vis_cache = {}

    def default_max_steps_for(self, n_agents):
        return self.default_max_steps

    @property
    def n_channels(self):
        return len(self.channel_names)

    @property
    def obs_dim(self):
        return VIEW * VIEW * self.n_channels * N_FRAMES

    @property
    def n_actions(self):
        return N_ACTIONS

    # -- lifecycle -----------------------------------------------------------
    def reset(self, seed=None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.state = self._build(self.rng)
        self.state.terminated = [False] * self.n_agents
        self.done = False
        self._vis_cache = {}
        self._frames = np.zeros((self.n_agents, N_FRAMES, self.n_channels, VIEW, VIEW))
        for i in range(self.n_agents):
            view = self.view(i)
            self._frames[i, :] = view
        return self.state, self._stacked()

    def step(self, actions) -> StepResult:
        if self.done:
            raise EpisodeDoneError("step() called on a finished episode; call reset()")
        actions = [int(a) for a in actions]
        if len(actions) != self.n_agents:
            raise EnvConfigError(f"expected {self.n_agents} actions, got {len(actions)}")
        s = self.state
        before = list(s.agent_positions)
        s.agent_positions = self._move(before, actions)
        s.step_counter += 1
        rewards = np.full(self.n_agents, -self.step_penalty)
        events = self._resolve(actions, before, rewards)
        success = bool(events.get("success", False))
        failure = bool(events.get("failure", False))
        done = success or failure or s.step_counter >= self.max_steps
        self.done = done
        if done:
            s.terminated = [True] * self.n_agents
        obs = np.stack([self.observe(i) for i in range(self.n_agents)])
        info = dict(events)
        info["step"] = s.step_counter
        return StepResult(obs, rewards, done, success, info)

    # -- movement ------------------------------------------------------------
    def _blocked(self, cell) -> bool:
        return False

    def _passable(self, cell) -> bool:
        r, c = cell
        h, w = self.state.layout.shape
        if not (0 <= r < h and 0 <= c < w):
            return False
        return self.state.layout[r, c] == FLOOR and not self._blocked(cell)

    def _move(self, positions, actions):
        """Simultaneous moves: walls block, contested cells go to the lowest
        agent index, swaps and moves into a cell whose occupant stays are refused."""
        n = len(positions)
        proposed = []
        for pos, a in zip(positions, actions):
            dr, dc = MOVES.get(a, (0, 0))
            tgt = (pos[0] + dr, pos[1] + dc)
            proposed.append(tgt if tgt != pos and self._passable(tgt) else pos)
        changed = True
        while changed:
            changed = False
            for i in range(n):
                if proposed[i] == positions[i]:
                    continue
                for j in range(n):
                    if j == i:
                        continue
                    contested = proposed[j] == proposed[i] and (j < i or proposed[j] == positions[j])
                    swap = positions[j] == proposed[i] and proposed[j] == positions[i]
                    if contested or swap:
                        proposed[i] = positions[i]
                        changed = True
                        break
        return proposed

    # -- observation ---------------------------------------------------------
    def _opaque(self):
        return self.state.layout != FLOOR

    def _visible(self, pos):
        vis = self._vis_cache.get(pos)
        if vis is not None:
            return vis
        opaque = np.pad(self._opaque(), RADIUS, constant_values=True)
        r0, c0 = pos[0] + RADIUS, pos[1] + RADIUS
        vis = np.zeros((VIEW, VIEW), dtype=bool)
        for (dr, dc), samples in SIGHT_LINES.items():
            ok = True
            for cells in samples:
                if all(opaque[r0 + r, c0 + c] for r, c in cells):
                    ok = False
                    break
            vis[dr + RADIUS, dc + RADIUS] = ok
        self._vis_cache[pos] = vis
        return vis

    def _paint(self, agent, grid):
        """Fill env-specific channels (index >= 2) of ``grid`` for ``agent``."""

    def view(self, agent) -> np.ndarray:
        """Current egocentric (C, 5, 5) frame; hidden cells read as wall."""
        s = self.state
        h, w = s.layout.shape
        grid = np.zeros((self.n_channels, h, w))
        grid[0] = s.layout == WALL
        for j, (r, c) in enumerate(s.agent_positions):
            if j != agent:
                grid[1, r, c] = 1.0
        self._paint(agent, grid)
        padded = np.zeros((self.n_channels, h + 2 * RADIUS, w + 2 * RADIUS))
        padded[0] = 1.0
        padded[:, RADIUS:RADIUS + h, RADIUS:RADIUS + w] = grid
        r, c = s.agent_positions[agent]
        crop = padded[:, r:r + VIEW, c:c + VIEW].copy()
        hidden = ~self._visible((r, c))
        crop[:, hidden] = 0.0
        crop[0, hidden] = 1.0
        return crop

    def observe(self, agent) -> np.ndarray:
        """Push the current view onto ``agent``'s frame stack; return it flat."""
        f = self._frames[agent]
        f[1:] = f[:-1].copy()
        f[0] = self.view(agent)
        return f.reshape(-1).copy()

    def _stacked(self):
        return self._frames.reshape(self.n_agents, -1).copy()

    # -- helpers -------------------------------------------------------------
    def _free_cells(self, region):
        return [cell for cell in region if self.state.layout[cell] == FLOOR]

    @staticmethod
    def _sample_cells(rng, cells, n):
        idx = rng.choice(len(cells), size=n, replace=False)
        return [tuple(int(v) for v in cells[i]) for i in idx]

    def success_predicate(self, state: GridState) -> bool:
        raise NotImplementedError

    def render(self) -> str:
        s = self.state
        chars = np.where(s.layout == WALL, "#", ".").astype(object)
        self._render_objects(chars)
        for i, (r, c) in enumerate(s.agent_positions):
            chars[r, c] = str(i)
        return "\n".join("".join(row) for row in chars)

    def _render_objects(self, chars):
        pass


def rect(r0, r1, c0, c1):
    """Cells of the inclusive rectangle rows r0..r1, cols c0..c1."""
    return [(r, c) for r in range(r0, r1 + 1) for c in range(c0, c1 + 1)]

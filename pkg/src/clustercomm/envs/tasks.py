"""The four benchmark gridworlds."""
from __future__ import annotations

import numpy as np

from .base import DOOR, FLOOR, INTERACT, WALL, GridEnv, GridState, rect


def _walled(h, w):
    layout = np.full((h, w), WALL, dtype=np.int8)
    return layout


class Bottleneck(GridEnv):
    """Two 3x5 rooms joined by one corridor cell. Every agent starts in the
    left room and earns +1 the first time it reaches the right room."""

    name = "bottleneck"
    channel_names = ("wall", "agents", "goal")
    agent_range = (2, 4)

    LEFT_ROOM = rect(1, 3, 1, 5)
    RIGHT_ROOM = rect(1, 3, 7, 11)
    CORRIDOR = (2, 6)

    def default_max_steps_for(self, n_agents):
        return 60 if n_agents >= 4 else 30

    def _build(self, rng):
        layout = _walled(5, 13)
        for cell in self.LEFT_ROOM + self.RIGHT_ROOM + [self.CORRIDOR]:
            layout[cell] = FLOOR
        state = GridState(layout, [])
        positions = self._sample_cells(rng, self.LEFT_ROOM, self.n_agents)
        state.agent_positions = positions
        state.objects["crossed"] = np.zeros(self.n_agents, dtype=bool)
        return state

    def _resolve(self, actions, before, rewards):
        crossed = self.state.objects["crossed"]
        for i, (r, c) in enumerate(self.state.agent_positions):
            if c >= 7 and not crossed[i]:
                crossed[i] = True
                rewards[i] += 1.0
        return {"success": bool(crossed.all()), "crossed": int(crossed.sum())}

    def success_predicate(self, state):
        return bool(state.objects["crossed"].all())

    def _paint(self, agent, grid):
        grid[2, 1:4, 7:12] = 1.0

    def _render_objects(self, chars):
        for cell in self.RIGHT_ROOM:
            chars[cell] = ","


class ClosedRooms(GridEnv):
    """Speaker (agent 0) and listener (agent 1) in separate 3x3 rooms.

    A corner of the speaker's room is marked (visible to the speaker only);
    the listener must pick the point-mirrored corner of its own room. With
    ``commit="interact"`` (default) a corner is picked by issuing Stay/Interact
    while standing on it; with ``commit="enter"`` the first corner entered is
    the pick. Either way the first pick ends the episode.
    """

    name = "closed_rooms"
    channel_names = ("wall", "agents", "target")
    default_max_steps = 10

    SPEAKER_ROOM = (1, 1)  # top-left interior cell
    LISTENER_ROOM = (1, 7)
    SPEAKER_CORNERS = ((0, 0), (0, 2))  # room-relative: top-left, top-right

    def __init__(self, *args, commit="interact", **kwargs):
        if commit not in ("interact", "enter"):
            raise ValueError(f"commit must be 'interact' or 'enter', got {commit!r}")
        self.commit = commit
        super().__init__(*args, **kwargs)

    def _room_cell(self, room, rel):
        return (room[0] + rel[0], room[1] + rel[1])

    def _build(self, rng):
        layout = _walled(5, 11)
        for room in (self.SPEAKER_ROOM, self.LISTENER_ROOM):
            for cell in rect(room[0], room[0] + 2, room[1], room[1] + 2):
                layout[cell] = FLOOR
        state = GridState(layout, [self._room_cell(self.SPEAKER_ROOM, (1, 1)),
                                   self._room_cell(self.LISTENER_ROOM, (1, 1))])
        rel = self.SPEAKER_CORNERS[int(rng.integers(len(self.SPEAKER_CORNERS)))]
        state.objects["speaker_target"] = self._room_cell(self.SPEAKER_ROOM, rel)
        state.objects["listener_target"] = self._room_cell(self.LISTENER_ROOM, (2 - rel[0], 2 - rel[1]))
        state.objects["speaker_reached"] = False
        state.objects["listener_corner"] = None
        return state

    def listener_corners(self):
        r, c = self.LISTENER_ROOM
        return [(r, c), (r, c + 2), (r + 2, c), (r + 2, c + 2)]

    def _resolve(self, actions, before, rewards):
        obj = self.state.objects
        events = {}
        if not obj["speaker_reached"] and self.state.agent_positions[0] == obj["speaker_target"]:
            obj["speaker_reached"] = True
            rewards[0] += 1.0
        pos = self.state.agent_positions[1]
        picked = pos in self.listener_corners()
        if self.commit == "interact":
            picked = picked and actions[1] == INTERACT
        if picked:
            obj["listener_corner"] = pos
            if pos == obj["listener_target"]:
                rewards += 1.0
                events["success"] = True
            else:
                events["failure"] = True
        return events

    def success_predicate(self, state):
        return state.objects["listener_corner"] == state.objects["listener_target"]

    def _paint(self, agent, grid):
        if agent == 0:
            grid[2][self.state.objects["speaker_target"]] = 1.0

    def _render_objects(self, chars):
        chars[self.state.objects["speaker_target"]] = "x"
        chars[self.state.objects["listener_target"]] = "o"


class RedBlueDoors(GridEnv):
    """8x8 room, red door on the left wall, blue door on the right wall.

    Staying next to a closed door opens it. Red then blue succeeds; blue
    while red is closed fails.
    """

    name = "red_blue_doors"
    channel_names = ("wall", "agents", "red", "blue", "open")
    default_max_steps = 288
    SIZE = 8
    red_reward = 0.25

    def _build(self, rng):
        n = self.SIZE
        layout = _walled(n + 2, n + 2)
        layout[1:n + 1, 1:n + 1] = FLOOR
        red = (int(rng.integers(1, n + 1)), 0)
        blue = (int(rng.integers(1, n + 1)), n + 1)
        layout[red] = DOOR
        layout[blue] = DOOR
        state = GridState(layout, self._sample_cells(rng, rect(1, n, 1, n), self.n_agents))
        state.objects.update(red=red, blue=blue, red_open=False, blue_open=False,
                             blue_before_red=False)
        return state

    def _adjacent(self, pos, door):
        return abs(pos[0] - door[0]) + abs(pos[1] - door[1]) == 1

    def _resolve(self, actions, before, rewards):
        obj = self.state.objects
        pos = self.state.agent_positions
        touch_red = any(a == INTERACT and self._adjacent(p, obj["red"]) for a, p in zip(actions, pos))
        touch_blue = any(a == INTERACT and self._adjacent(p, obj["blue"]) for a, p in zip(actions, pos))
        events = {}
        if touch_red and not obj["red_open"]:
            obj["red_open"] = True
            rewards += self.red_reward
            events["red_opened"] = True
        if touch_blue and not obj["blue_open"]:
            obj["blue_open"] = True
            if obj["red_open"]:
                rewards += 1.0
                events["success"] = True
            else:
                obj["blue_before_red"] = True
                events["failure"] = True
        return events

    def success_predicate(self, state):
        o = state.objects
        return bool(o["red_open"] and o["blue_open"] and not o["blue_before_red"])

    def _paint(self, agent, grid):
        o = self.state.objects
        grid[2][o["red"]] = 1.0
        grid[3][o["blue"]] = 1.0
        if o["red_open"]:
            grid[4][o["red"]] = 1.0
        if o["blue_open"]:
            grid[4][o["blue"]] = 1.0

    def _render_objects(self, chars):
        o = self.state.objects
        chars[o["red"]] = "r" if o["red_open"] else "R"
        chars[o["blue"]] = "b" if o["blue_open"] else "B"


class LevelBasedForaging(GridEnv):
    """8x8 field with two apples. An apple is collected only when both agents
    stand 4-adjacent to it and both interact in the same step."""

    name = "foraging"
    channel_names = ("wall", "agents", "apple")
    default_max_steps = 128
    SIZE = 8
    apple_reward = 0.5

    def _build(self, rng):
        n = self.SIZE
        layout = _walled(n + 2, n + 2)
        layout[1:n + 1, 1:n + 1] = FLOOR
        cells = self._sample_cells(rng, rect(1, n, 1, n), 2 + self.n_agents)
        state = GridState(layout, cells[2:])
        state.objects["apples"] = cells[:2]
        state.objects["collected"] = np.zeros(2, dtype=bool)
        return state

    def _blocked(self, cell):
        o = self.state.objects
        return any(cell == a and not got for a, got in zip(o["apples"], o["collected"]))

    def _resolve(self, actions, before, rewards):
        o = self.state.objects
        pos = self.state.agent_positions
        events = {}
        for k, (apple, got) in enumerate(zip(o["apples"], o["collected"])):
            if got:
                continue
            if all(a == INTERACT and abs(p[0] - apple[0]) + abs(p[1] - apple[1]) == 1
                   for a, p in zip(actions, pos)):
                o["collected"][k] = True
                rewards += self.apple_reward
                events["apples"] = events.get("apples", 0) + 1
        events["success"] = bool(o["collected"].all())
        return events

    def success_predicate(self, state):
        return bool(state.objects["collected"].all())

    def _paint(self, agent, grid):
        o = self.state.objects
        for apple, got in zip(o["apples"], o["collected"]):
            if not got:
                grid[2][apple] = 1.0

    def _render_objects(self, chars):
        o = self.state.objects
        for apple, got in zip(o["apples"], o["collected"]):
            if not got:
                chars[apple] = "a"

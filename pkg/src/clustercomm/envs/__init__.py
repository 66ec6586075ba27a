from .base import (ACTION_NAMES, N_ACTIONS, N_FRAMES, VIEW, EnvConfigError, EpisodeDoneError,
                   GridEnv, GridState, StepResult)
from .tasks import Bottleneck, ClosedRooms, LevelBasedForaging, RedBlueDoors

ENVS = {
    "bottleneck": Bottleneck,
    "closed_rooms": ClosedRooms,
    "red_blue_doors": RedBlueDoors,
    "foraging": LevelBasedForaging,
}

ALIASES = {"lbf": "foraging", "level_based_foraging": "foraging", "closedrooms": "closed_rooms",
           "redbluedoors": "red_blue_doors"}


def make_env(name, n_agents=None, max_steps=None, step_penalty=None, seed=None, **options) -> GridEnv:
    key = ALIASES.get(name.lower(), name.lower())
    if key not in ENVS:
        raise EnvConfigError(f"unknown environment {name!r}; choose from {sorted(ENVS)}")
    return ENVS[key](n_agents=n_agents, max_steps=max_steps, step_penalty=step_penalty, seed=seed,
                     **options)


__all__ = ["ACTION_NAMES", "N_ACTIONS", "N_FRAMES", "VIEW", "ENVS", "EnvConfigError",
           "EpisodeDoneError", "GridEnv", "GridState", "StepResult", "Bottleneck", "ClosedRooms",
           "RedBlueDoors", "LevelBasedForaging", "make_env"]

"""Game rules, rewards, and social-behavior metrics.

Two games are layered on the engine:

* Gathering -- two players collect apples (reward 1 each); a player hit
  twice by the beam is removed for a while.  Tagging itself pays nothing;
  its only value is keeping the apples to yourself.
* Wolfpack -- two wolves chase a scripted prey.  A capture pays every
  wolf inside the capture radius: ``r_lone`` to a solo captor, ``r_team``
  each when both wolves are in range.

Both step functions advance a :class:`~ssdlab.engine.WorldState` in
place through the engine's fixed frame order and return the per-player
reward pair plus event tags.  The env classes wrap them for episode
running.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .engine import (
    Action,
    ArityMismatch,
    EntityState,
    GridMap,
    KIND_PLAYER,
    MOVE_ACTIONS,
    MapError,
    MissingSpawn,
    Observation,
    WorldState,
    blank_observation,
    cast_beam,
    derive_rng,
    make_world,
    move_offset,
    render_ascii,
    render_observation,
    resolve_moves,
    tick_timers,
)

DEFAULT_EPISODE_LENGTH = 1000


@dataclass(frozen=True)
class GatheringParams:
    """Respawn delays: collected apples return after ``n_apple`` frames,
    tagged players after ``n_tagged`` frames."""

    n_apple: int = 5
    n_tagged: int = 50

    def __post_init__(self):
        if self.n_apple < 1 or self.n_tagged < 1:
            raise ValueError("n_apple and n_tagged must be >= 1")


@dataclass(frozen=True)
class WolfpackParams:
    capture_radius: int = 3
    r_lone: float = 1.0
    r_team: float = 5.0

    def __post_init__(self):
        if self.capture_radius < 0:
            raise ValueError("capture_radius must be >= 0")
        if not (self.r_team >= self.r_lone > 0):
            raise ValueError("need r_team >= r_lone > 0")


@dataclass
class EpisodeLog:
    """Per-frame record of one episode.

    ``actions``/``rewards``/``active`` hold one tuple per frame over the
    controllable players; ``active`` flags are sampled when the actions
    were chosen, so a frame spent removed counts as not playing.
    ``events`` holds per-frame tag tuples: ``("apple", player)``,
    ``("tag", player)``, ``("capture", wolves_in_radius)``.
    """

    n_agents: int = 2
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    active: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def append(self, actions, rewards, active, events) -> None:
        self.actions.append(tuple(actions))
        self.rewards.append(tuple(rewards))
        self.active.append(tuple(active))
        self.events.append(tuple(events))

    def __len__(self) -> int:
        return len(self.rewards)

    def undiscounted_return(self, agent: int) -> float:
        return float(sum(r[agent] for r in self.rewards))

    def discounted_return(self, agent: int, gamma: float) -> float:
        total = 0.0
        for t, r in enumerate(self.rewards):
            total += (gamma ** t) * r[agent]
        return total


def gathering_step(
    state: WorldState,
    actions,
    params: GatheringParams,
) -> tuple[WorldState, tuple[float, float], list[tuple]]:
    """Advance one Gathering frame.

    A player entering a cell holding a present apple collects it: reward
    1, and the site's timer restarts at ``n_apple``.  Beams from both
    players resolve from post-move poses; a player whose hit count
    reaches 2 is removed for ``n_tagged`` frames with its hit count
    cleared.  Tagging pays neither player.
    """
    if len(actions) != 2:
        raise ArityMismatch(f"gathering takes 2 actions, got {len(actions)}")
    players = state.entities
    before = (players[0].position, players[1].position)
    resolve_moves(state, actions)
    for i in range(2):
        if players[i].active and actions[i] == Action.USE_BEAM:
            cast_beam(state, i)

    rewards = [0.0, 0.0]
    events: list[tuple] = []
    fresh_sites: list[int] = []
    fresh_entities: list[int] = []
    site_index = state.grid.apple_site_index()
    for i in range(2):
        e = players[i]
        if e.active and e.position != before[i]:
            si = site_index.get(e.position)
            if si is not None and state.apple_timers[si] == 0:
                rewards[i] += 1.0
                state.apple_timers[si] = params.n_apple
                fresh_sites.append(si)
                events.append(("apple", i))
    for i in range(2):
        e = players[i]
        if e.active and e.hit_count >= 2:
            e.active = False
            e.removal_timer = params.n_tagged
            e.hit_count = 0
            fresh_entities.append(i)
            events.append(("tag", i))

    tick_timers(state, fresh_entities, fresh_sites)
    return state, (rewards[0], rewards[1]), events


def prey_policy(state: WorldState, rng: np.random.Generator) -> Action:
    """Scripted evader controlling the Wolfpack prey.

    With probability 0.8 take the legal step that maximizes L1 distance
    to the nearest wolf (ties broken by lowest action index), otherwise
    a uniformly random legal step.  Legal means onto floor and not into
    an active entity.  Stands still when boxed in.
    """
    prey = state.entities[2]
    px, py = prey.position
    legal: list[tuple[Action, tuple[int, int]]] = []
    for a in MOVE_ACTIONS:
        dx, dy = move_offset(prey.orientation, a)
        cell = (px + dx, py + dy)
        if state.grid.is_floor(*cell) and state.entity_at(cell) is None:
            legal.append((a, cell))
    if not legal:
        return Action.STAND_STILL

    wolves = [e for e in state.entities if e.kind == KIND_PLAYER and e.active]
    if rng.random() < 0.8 and wolves:
        best_action, best_dist = None, -1
        for a, (cx, cy) in legal:
            d = min(abs(cx - w.position[0]) + abs(cy - w.position[1]) for w in wolves)
            if d > best_dist:
                best_action, best_dist = a, d
        return best_action
    return legal[int(rng.integers(len(legal)))][0]


def wolfpack_step(
    state: WorldState,
    wolf_actions,
    params: WolfpackParams,
    prey_action: Action | None = None,
) -> tuple[WorldState, tuple[float, float], list[tuple]]:
    """Advance one Wolfpack frame.

    The prey's action comes from :func:`prey_policy` (drawing on the
    world RNG) unless supplied.  After movement, any wolf at L1 distance
    <= 1 from the prey triggers a capture: every wolf within the capture
    radius is paid (``r_lone`` if alone in radius, ``r_team`` each if
    both are), and the prey respawns at a free prey spawn point chosen
    by the world RNG.
    """
    if len(wolf_actions) != 2:
        raise ArityMismatch(f"wolfpack takes 2 wolf actions, got {len(wolf_actions)}")
    if prey_action is None:
        prey_action = prey_policy(state, state.rng)
    resolve_moves(state, (wolf_actions[0], wolf_actions[1], prey_action))
    wolves = state.entities[:2]
    prey = state.entities[2]
    for i in range(2):
        if wolves[i].active and wolf_actions[i] == Action.USE_BEAM:
            cast_beam(state, i)

    rewards = [0.0, 0.0]
    events: list[tuple] = []
    px, py = prey.position
    dists = [abs(w.position[0] - px) + abs(w.position[1] - py) for w in wolves]
    if min(dists) <= 1:
        in_radius = [i for i in range(2) if dists[i] <= params.capture_radius]
        if len(in_radius) == 2:
            rewards = [params.r_team, params.r_team]
        elif len(in_radius) == 1:
            rewards[in_radius[0]] = params.r_lone
        events.append(("capture", len(in_radius)))
        _respawn_prey(state, prey)

    tick_timers(state)
    return state, (rewards[0], rewards[1]), events


def _respawn_prey(state: WorldState, prey: EntityState) -> None:
    # Uniform choice among prey spawns not blocked by another entity;
    # ship maps with at least three so one is always free.  If somehow
    # none is, the prey holds position and the chase continues.
    candidates = []
    for cell in state.grid.prey_spawns:
        occupant = state.entity_at(cell)
        if occupant is None or occupant is prey:
            candidates.append(cell)
    if candidates:
        prey.position = candidates[int(state.rng.integers(len(candidates)))]


def beam_use_rate(log: EpisodeLog, agent: int) -> float:
    """Share of both-players-active frames in which `agent` fired.

    Frames with either player removed are excluded from both numerator
    and denominator; an episode with no such frames scores 0.
    """
    both = 0
    fired = 0
    for acts, flags in zip(log.actions, log.active):
        if flags[0] and flags[1]:
            both += 1
            if acts[agent] == Action.USE_BEAM:
                fired += 1
    return fired / both if both else 0.0


def wolves_per_capture(log: EpisodeLog) -> float | None:
    """Mean wolves-in-radius over the episode's captures; None if none."""
    counts = [ev[1] for frame in log.events for ev in frame if ev[0] == "capture"]
    if not counts:
        return None
    return sum(counts) / len(counts)


def lone_wolf_rate(log: EpisodeLog) -> float | None:
    """Two minus the wolves-per-capture mean: 0 = all joint captures,
    1 = all lone captures.  Oriented so larger means more defecting."""
    wpc = wolves_per_capture(log)
    return None if wpc is None else 2.0 - wpc


class StepResult(NamedTuple):
    obs: list[Observation] | None
    rewards: tuple[float, float]
    events: tuple
    active: tuple[bool, bool]   # player flags when actions were chosen


class _GridGameEnv:
    """Shared episode plumbing for both games.

    One env instance is advanced by one logical thread; concurrent
    experiments use separate instances.  ``reset()`` rebuilds the start
    state; without a new seed the RNG stream carries across episodes so
    a training run stays a single deterministic stream.
    """

    n_players = 2
    game_name = ""
    metric_name = ""
    player_teams = (0, 1)

    def __init__(self, grid: GridMap, params, *, seed: int = 0,
                 rng: np.random.Generator | None = None,
                 episode_length: int = DEFAULT_EPISODE_LENGTH):
        self._validate_map(grid)
        self.grid = grid
        self.params = params
        self.episode_length = episode_length
        self._rng = rng if rng is not None else derive_rng(seed, "world")
        self.state = make_world(grid, self._rng, player_teams=self.player_teams)

    def _validate_map(self, grid: GridMap) -> None:
        raise NotImplementedError

    def reset(self, *, seed: int | None = None, rng: np.random.Generator | None = None) -> None:
        if rng is not None:
            self._rng = rng
        elif seed is not None:
            self._rng = derive_rng(seed, "world")
        else:
            self._rng = self.state.rng
        self.state = make_world(self.grid, self._rng, player_teams=self.player_teams)

    def active_flags(self) -> tuple[bool, bool]:
        e = self.state.entities
        return (e[0].active, e[1].active)

    def observations(self) -> list[Observation]:
        return [
            render_observation(self.state, i) if self.state.entities[i].active else blank_observation(i)
            for i in range(self.n_players)
        ]

    def step(self, actions, want_obs: bool = True) -> StepResult:
        active = self.active_flags()
        _, rewards, events = self._advance(actions)
        obs = self.observations() if want_obs else None
        return StepResult(obs, rewards, tuple(events), active)

    def _advance(self, actions):
        raise NotImplementedError

    def render(self) -> str:
        return render_ascii(self.state)


class GatheringEnv(_GridGameEnv):
    game_name = "gathering"
    metric_name = "beam_use_rate"
    player_teams = (0, 1)

    def __init__(self, grid, params: GatheringParams | None = None, **kwargs):
        super().__init__(grid, params or GatheringParams(), **kwargs)

    def _validate_map(self, grid: GridMap) -> None:
        if not grid.apple_sites:
            raise MissingSpawn("apple")
        if grid.prey_spawns:
            raise MapError("gathering map must not declare prey spawns")

    def _advance(self, actions):
        return gathering_step(self.state, actions, self.params)


class WolfpackEnv(_GridGameEnv):
    game_name = "wolfpack"
    metric_name = "wolves_per_capture"
    player_teams = (0, 0)   # wolves render as teammates

    def __init__(self, grid, params: WolfpackParams | None = None,
                 prey_controller: Callable[[WorldState, np.random.Generator], Action] | None = None,
                 **kwargs):
        super().__init__(grid, params or WolfpackParams(), **kwargs)
        # Hook for substituting a learned prey; default is the evader.
        self.prey_controller = prey_controller

    def _validate_map(self, grid: GridMap) -> None:
        if not grid.prey_spawns:
            raise MissingSpawn("prey")
        if grid.apple_sites:
            raise MapError("wolfpack map must not declare apple sites")

    def _advance(self, actions):
        prey_action = None
        if self.prey_controller is not None:
            prey_action = self.prey_controller(self.state, self.state.rng)
        return wolfpack_step(self.state, actions, self.params, prey_action)

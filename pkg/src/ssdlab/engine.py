"""Deterministic 2D grid-world core.

Maps, entity kinematics, beam casting, and egocentric observation
rendering.  Game-specific reward rules (apple pickup, tagging, prey
capture) live in :mod:`ssdlab.games`; this module only knows about
walls, floor, spawn roles, and the shared action set.

A frame is resolved in a fixed published order (required for
determinism):

1. rotations and moves (:func:`resolve_moves`)
2. beams, cast from post-move poses (:func:`cast_beam`)
3. game-rule hooks (applied by the games layer)
4. timer decrements, respawns, step counter (:func:`tick_timers`)

:func:`apply_kinematics` bundles steps 1 and 4 for engine-only use.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

# Egocentric observation window: the agent's own row plus 15 rows ahead,
# 10 columns to each side of the agent's column.
VIEW_AHEAD = 15
VIEW_SIDE = 10
OBS_ROWS = VIEW_AHEAD + 1   # 16
OBS_COLS = 2 * VIEW_SIDE + 1  # 21
AGENT_ROW = OBS_ROWS - 1    # agent anchor cell in its own window
AGENT_COL = VIEW_SIDE

# Palette indices for the uint8 cell grid underlying every observation.
BG = 0
WALL = 1
APPLE = 2
BEAM = 3
SELF = 4
TEAMMATE = 5
OPPONENT = 6
PREY = 7

# RGB intensities per palette index, channels in [0, 1].
PALETTE = np.array(
    [
        [0.0, 0.0, 0.0],     # background / floor
        [0.5, 0.5, 0.5],     # wall
        [0.0, 1.0, 0.0],     # apple
        [1.0, 1.0, 0.0],     # beam fired this frame
        [0.0, 0.0, 1.0],     # self
        [0.5, 0.5, 1.0],     # teammate
        [1.0, 0.0, 0.0],     # opponent
        [1.0, 1.0, 1.0],     # prey
    ],
    dtype=np.float32,
)

MAP_WALL = "#"
MAP_FLOOR = "."
MAP_PLAYER1 = "1"
MAP_PLAYER2 = "2"
MAP_PREY = "P"
MAP_APPLE = "A"
MAP_ALPHABET = frozenset("#.12PA")


class MapError(ValueError):
    """Base class for map-document problems."""


class EmptyMap(MapError):
    pass


class RaggedRows(MapError):
    pass


class UnknownChar(MapError):
    def __init__(self, char: str, position: tuple[int, int]):
        super().__init__(f"unknown map character {char!r} at (x={position[0]}, y={position[1]})")
        self.char = char
        self.position = position


class MissingSpawn(MapError):
    def __init__(self, role: str):
        super().__init__(f"map declares no {role} spawn")
        self.role = role


class ArityMismatch(ValueError):
    pass


class InactiveShooter(RuntimeError):
    pass


class InactiveAgent(RuntimeError):
    pass


class Action(IntEnum):
    """The eight agent-centered actions, stable encoding 0-7."""

    STEP_FORWARD = 0
    STEP_BACKWARD = 1
    STEP_LEFT = 2
    STEP_RIGHT = 3
    ROTATE_LEFT = 4
    ROTATE_RIGHT = 5
    USE_BEAM = 6
    STAND_STILL = 7


N_ACTIONS = 8

MOVE_ACTIONS = (
    Action.STEP_FORWARD,
    Action.STEP_BACKWARD,
    Action.STEP_LEFT,
    Action.STEP_RIGHT,
)


class Orientation(IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3


# Unit vector (dx, dy) the agent faces, y growing downward.
FORWARD = {
    Orientation.NORTH: (0, -1),
    Orientation.EAST: (1, 0),
    Orientation.SOUTH: (0, 1),
    Orientation.WEST: (-1, 0),
}


def move_offset(orientation: Orientation, action: Action) -> tuple[int, int]:
    """World-frame (dx, dy) for a step action taken while facing `orientation`."""
    if action == Action.STEP_FORWARD:
        return FORWARD[orientation]
    if action == Action.STEP_BACKWARD:
        dx, dy = FORWARD[orientation]
        return (-dx, -dy)
    if action == Action.STEP_LEFT:
        return FORWARD[Orientation((orientation - 1) % 4)]
    if action == Action.STEP_RIGHT:
        return FORWARD[Orientation((orientation + 1) % 4)]
    return (0, 0)


# orientation x step-action offset table; move resolution runs per
# entity per frame, so it stays on plain ints and tuple lookups
_OFFSETS = tuple(
    tuple(move_offset(o, a) for a in MOVE_ACTIONS) for o in Orientation
)
_STEP_MAX = int(Action.STEP_RIGHT)
_ROTATE_LEFT = int(Action.ROTATE_LEFT)
_ROTATE_RIGHT = int(Action.ROTATE_RIGHT)


@dataclass(frozen=True)
class GridMap:
    """A validated map: dimensions, wall set, and role-tagged spawn cells."""

    width: int
    height: int
    walls: frozenset[tuple[int, int]]
    player_spawns: tuple[tuple[int, int], tuple[int, int]]
    prey_spawns: tuple[tuple[int, int], ...]
    apple_sites: tuple[tuple[int, int], ...]

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def is_floor(self, x: int, y: int) -> bool:
        return self.in_bounds(x, y) and (x, y) not in self.walls

    def apple_site_index(self) -> dict[tuple[int, int], int]:
        """Cell -> apple-site position lookup, cached."""
        index = getattr(self, "_site_index_cache", None)
        if index is None:
            index = {cell: i for i, cell in enumerate(self.apple_sites)}
            object.__setattr__(self, "_site_index_cache", index)
        return index

    def floor_cells(self) -> frozenset[tuple[int, int]]:
        """All in-bounds non-wall cells, cached (hot path of move resolution)."""
        cells = getattr(self, "_floor_cache", None)
        if cells is None:
            cells = frozenset(
                (x, y)
                for x in range(self.width)
                for y in range(self.height)
                if (x, y) not in self.walls
            )
            object.__setattr__(self, "_floor_cache", cells)
        return cells

    def static_canvas(self) -> np.ndarray:
        """Palette-index canvas of the static map, padded by the view reach.

        Padding by VIEW_AHEAD on every side guarantees any egocentric
        window crop stays inside the array, so out-of-map cells read as
        background without bounds checks.  Cached on first use.
        """
        canvas = getattr(self, "_canvas_cache", None)
        if canvas is None:
            pad = VIEW_AHEAD
            canvas = np.zeros((self.height + 2 * pad, self.width + 2 * pad), dtype=np.uint8)
            for (x, y) in self.walls:
                canvas[y + pad, x + pad] = WALL
            canvas.setflags(write=False)
            object.__setattr__(self, "_canvas_cache", canvas)
        return canvas


def load_map(text: str) -> GridMap:
    """Parse a map document into a validated :class:`GridMap`.

    Alphabet: ``#`` wall, ``.`` floor, ``1``/``2`` player spawns, ``P``
    prey spawn, ``A`` apple site (floor beneath).  Rows must be equal
    length; a trailing newline is optional.
    """
    rows = text.split("\n")
    if rows and rows[-1] == "":
        rows = rows[:-1]
    if not rows or all(len(r) == 0 for r in rows):
        raise EmptyMap("map document has no rows")
    width = len(rows[0])
    if width == 0 or any(len(r) != width for r in rows):
        raise RaggedRows("map rows differ in length")

    walls: set[tuple[int, int]] = set()
    players: dict[str, tuple[int, int]] = {}
    prey: list[tuple[int, int]] = []
    apples: list[tuple[int, int]] = []
    for y, row in enumerate(rows):
        for x, ch in enumerate(row):
            if ch not in MAP_ALPHABET:
                raise UnknownChar(ch, (x, y))
            if ch == MAP_WALL:
                walls.add((x, y))
            elif ch == MAP_PLAYER1 or ch == MAP_PLAYER2:
                role = "player1" if ch == MAP_PLAYER1 else "player2"
                if role in players:
                    raise MapError(f"duplicate {role} spawn at (x={x}, y={y})")
                players[role] = (x, y)
            elif ch == MAP_PREY:
                prey.append((x, y))
            elif ch == MAP_APPLE:
                apples.append((x, y))

    for role in ("player1", "player2"):
        if role not in players:
            raise MissingSpawn(role)

    return GridMap(
        width=width,
        height=len(rows),
        walls=frozenset(walls),
        player_spawns=(players["player1"], players["player2"]),
        prey_spawns=tuple(prey),
        apple_sites=tuple(apples),
    )


KIND_PLAYER = "player"
KIND_PREY = "prey"


@dataclass
class EntityState:
    id: int
    kind: str
    team: int
    position: tuple[int, int]
    orientation: Orientation
    spawn: tuple[int, int]
    active: bool = True
    removal_timer: int = 0
    hit_count: int = 0


@dataclass
class WorldState:
    """Full simulation state; advanced in place by one logical thread."""

    grid: GridMap
    entities: list[EntityState]
    apple_timers: list[int]
    step: int
    rng: np.random.Generator
    # Cells traversed by beams this frame, mapped to an axis glyph
    # ('|' for N/S beams, '-' for E/W) for ASCII replay.
    beam_cells: dict[tuple[int, int], str] = field(default_factory=dict)

    def entity_at(self, cell: tuple[int, int]) -> EntityState | None:
        for e in self.entities:
            if e.active and e.position == cell:
                return e
        return None


def derive_rng(seed: int, *labels) -> np.random.Generator:
    """Independent generator derived from `seed` by a fixed labeled path.

    Labels (strings or ints) are mapped through crc32 so the derivation
    is stable across processes and hosts.
    """
    key = tuple(
        lab if isinstance(lab, int) else zlib.crc32(str(lab).encode())
        for lab in labels
    )
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def make_world(grid: GridMap, rng: np.random.Generator, *, player_teams: tuple[int, int] = (0, 1)) -> WorldState:
    """Spawn entities at their map-declared points.

    Players get ids 0 and 1; a prey entity (id 2) is added when the map
    declares prey spawns.  Everyone starts facing north.  All of the
    world's randomness flows through the supplied generator.
    """
    entities = [
        EntityState(
            id=i,
            kind=KIND_PLAYER,
            team=player_teams[i],
            position=grid.player_spawns[i],
            orientation=Orientation.NORTH,
            spawn=grid.player_spawns[i],
        )
        for i in range(2)
    ]
    if grid.prey_spawns:
        entities.append(
            EntityState(
                id=2,
                kind=KIND_PREY,
                team=-1,
                position=grid.prey_spawns[0],
                orientation=Orientation.NORTH,
                spawn=grid.prey_spawns[0],
            )
        )
    return WorldState(
        grid=grid,
        entities=entities,
        apple_timers=[0] * len(grid.apple_sites),
        step=0,
        rng=rng,
    )


def resolve_moves(state: WorldState, joint: list[int] | tuple[int, ...]) -> None:
    """Apply rotations and simultaneous moves; frame sub-step 1.

    Moves into walls or out of bounds are cancelled.  Two entities
    targeting the same vacant cell are both cancelled, as are pairs
    attempting to swap cells (they would pass through each other).  A
    move into a cell still occupied after resolution is cancelled.
    Clears the previous frame's beam cells.
    """
    entities = state.entities
    if len(joint) != len(entities):
        raise ArityMismatch(f"expected {len(entities)} actions, got {len(joint)}")
    state.beam_cells.clear()

    floor = state.grid.floor_cells()
    targets: list[tuple[int, int]] = []
    for e, a in zip(entities, joint):
        pos = e.position
        if not e.active:
            targets.append(pos)
            continue
        a = int(a)
        if not 0 <= a < N_ACTIONS:
            raise ValueError(f"{a} is not a valid action")
        if a <= _STEP_MAX:
            dx, dy = _OFFSETS[e.orientation][a]
            target = (pos[0] + dx, pos[1] + dy)
            targets.append(target if target in floor else pos)
            continue
        if a == _ROTATE_LEFT:
            e.orientation = Orientation((e.orientation - 1) % 4)
        elif a == _ROTATE_RIGHT:
            e.orientation = Orientation((e.orientation + 1) % 4)
        targets.append(pos)

    # Fixed-point conflict resolution: cancelling one move can leave its
    # mover as an obstacle for another, so sweep until stable.  Same
    # target (vacant cell or a stayer's cell) cancels both parties;
    # a swap would have the pair pass through each other, so it is
    # cancelled too.  Each sweep turns at least one mover into a
    # stayer, so this terminates within len(entities) sweeps.
    n = len(entities)
    changed = True
    while changed:
        changed = False
        for i in range(n):
            if targets[i] == entities[i].position:
                continue
            for j in range(n):
                if i == j or not entities[j].active:
                    continue
                same_target = targets[j] == targets[i]
                swap = (
                    targets[i] == entities[j].position
                    and targets[j] == entities[i].position
                )
                if same_target or swap:
                    targets[i] = entities[i].position
                    targets[j] = entities[j].position
                    changed = True
                    break

    for e, t in zip(entities, targets):
        e.position = t


def cast_beam(state: WorldState, shooter: int) -> set[int]:
    """Fire a one-cell-wide instantaneous beam; frame sub-step 2.

    The ray starts one cell ahead of the shooter and extends along its
    orientation until the first wall or the map edge.  The nearest
    active entity on the ray blocks it and is the only one hit; the hit
    increments that entity's ``hit_count``.  Returns the set of hit
    entity ids.  Traversed cells are recorded for rendering.
    """
    e = state.entities[shooter]
    if not e.active:
        raise InactiveShooter(f"entity {shooter} is removed and cannot fire")
    dx, dy = FORWARD[e.orientation]
    glyph = "|" if dx == 0 else "-"
    grid = state.grid
    x, y = e.position
    hit: set[int] = set()
    while True:
        x += dx
        y += dy
        if not grid.is_floor(x, y):
            break
        state.beam_cells[(x, y)] = glyph
        target = state.entity_at((x, y))
        if target is not None:
            target.hit_count += 1
            hit.add(target.id)
            break
    return hit


def tick_timers(
    state: WorldState,
    fresh_entities: tuple[int, ...] | list[int] = (),
    fresh_sites: tuple[int, ...] | list[int] = (),
) -> None:
    """Decrement timers, respawn what expired, advance the step counter.

    Timers set this frame by a game hook are passed as ``fresh_*`` and
    skipped, so an entity removed for N frames sits out exactly the N
    frames after the tag (same for apple sites).  A respawn onto a spawn
    cell currently occupied by an active entity is deferred one frame.
    """
    for e in state.entities:
        if e.active or e.removal_timer == 0 or e.id in fresh_entities:
            continue
        if e.removal_timer == 1 and state.entity_at(e.spawn) is not None:
            continue
        e.removal_timer -= 1
        if e.removal_timer == 0:
            e.active = True
            e.position = e.spawn
            e.hit_count = 0
    timers = state.apple_timers
    for i in range(len(timers)):
        if timers[i] > 0 and i not in fresh_sites:
            timers[i] -= 1
    state.step += 1


def apply_kinematics(state: WorldState, joint: list[int] | tuple[int, ...]) -> WorldState:
    """Advance one frame with movement only (no beams, no game hooks)."""
    resolve_moves(state, joint)
    tick_timers(state)
    return state


@dataclass
class Observation:
    """Egocentric view: a 16x21 palette-index grid owned by one agent.

    The color form required by value networks is exposed as
    :attr:`tensor`; the index grid is the compact storage format used by
    replay buffers.
    """

    grid: np.ndarray        # (OBS_ROWS, OBS_COLS) uint8 palette indices
    agent_id: int

    @property
    def tensor(self) -> np.ndarray:
        """Color intensities, shape (3, OBS_ROWS, OBS_COLS), float32 in [0, 1]."""
        return np.ascontiguousarray(PALETTE[self.grid].transpose(2, 0, 1))


def _gather_tables() -> dict[Orientation, tuple[np.ndarray, np.ndarray]]:
    """Per-orientation (dy, dx) world offsets for every window cell.

    Window cell (r, c) sits f = AGENT_ROW - r cells ahead of the agent
    and l = c - AGENT_COL cells to its right; the tables translate that
    into world deltas for each facing.
    """
    rows, cols = np.meshgrid(np.arange(OBS_ROWS), np.arange(OBS_COLS), indexing="ij")
    f = AGENT_ROW - rows
    l = cols - AGENT_COL
    return {
        Orientation.NORTH: (-f, l),
        Orientation.EAST: (l, f),
        Orientation.SOUTH: (f, -l),
        Orientation.WEST: (-l, -f),
    }


_GATHER = _gather_tables()


def render_indices(state: WorldState, agent: int) -> np.ndarray:
    """Palette-index window for `agent`, rotated so it faces up."""
    viewer = state.entities[agent]
    if not viewer.active:
        raise InactiveAgent(f"entity {agent} is removed and has no view")
    canvas = state.grid.static_canvas().copy()
    pad = VIEW_AHEAD
    for i, (x, y) in enumerate(state.grid.apple_sites):
        if state.apple_timers[i] == 0:
            canvas[y + pad, x + pad] = APPLE
    for (x, y) in state.beam_cells:
        canvas[y + pad, x + pad] = BEAM
    for e in state.entities:
        if not e.active:
            continue
        x, y = e.position
        if e.kind == KIND_PREY:
            color = PREY
        elif e.id == agent:
            color = SELF
        elif e.team == viewer.team:
            color = TEAMMATE
        else:
            color = OPPONENT
        canvas[y + pad, x + pad] = color
    ax, ay = viewer.position
    dy, dx = _GATHER[viewer.orientation]
    return canvas[ay + pad + dy, ax + pad + dx]


def render_observation(state: WorldState, agent: int) -> Observation:
    """Render the egocentric observation for an active agent.

    Raises :class:`InactiveAgent` while the agent is removed from the
    game; callers that need a placeholder view for removed agents should
    use :func:`blank_observation`.
    """
    return Observation(grid=render_indices(state, agent), agent_id=agent)


def blank_observation(agent: int) -> Observation:
    """All-background observation, the view of a removed agent."""
    return Observation(grid=np.zeros((OBS_ROWS, OBS_COLS), dtype=np.uint8), agent_id=agent)


def render_ascii(state: WorldState) -> str:
    """One ASCII frame: map alphabet plus entity glyphs.

    Walls ``#``, floor ``.``, present apples ``a``, beams ``|``/``-``,
    players ``1``/``2``, prey ``p``.  Removed entities are absent.
    """
    grid = state.grid
    rows = [[MAP_WALL if (x, y) in grid.walls else MAP_FLOOR for x in range(grid.width)] for y in range(grid.height)]
    for i, (x, y) in enumerate(grid.apple_sites):
        if state.apple_timers[i] == 0:
            rows[y][x] = "a"
    for (x, y), glyph in state.beam_cells.items():
        rows[y][x] = glyph
    for e in state.entities:
        if not e.active:
            continue
        x, y = e.position
        rows[y][x] = "p" if e.kind == KIND_PREY else str(e.id + 1)
    return "\n".join("".join(r) for r in rows)

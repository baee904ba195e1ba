"""Synchronous stepped simulation of the tidying-up house.

Agents act once per step in agent-id order. Failures are reported as
``ActionOutcome`` values, never raised.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .world import (
    DOOR, FLOOR, WALL, AgentProfile, Cell, House, Location, ObjectInstance, PlacementRules,
    default_rules, neighbors4,
)

NAV_ACTIONS = (
    "MoveAhead", "MoveBack", "MoveRight", "MoveLeft",
    "RotateRight", "RotateLeft", "LookUp", "LookDown", "Stop",
)
MANIP_ACTIONS = ("PickUp", "PutDown", "Drop")

FAILURE_REASONS = (
    "no_manipulation_ability", "payload_exceeded", "not_adjacent", "target_not_visible",
    "blocked_by_obstacle", "battery_exhausted", "holding_conflict", "invalid_target",
)

# N, E, S, W as (drow, dcol)
DIRECTIONS = ((-1, 0), (0, 1), (1, 0), (0, -1))
MOVE_OFFSET = {"MoveAhead": 0, "MoveRight": 1, "MoveBack": 2, "MoveLeft": 3}
PITCHES = ("down", "level", "up")

VIEW_RADIUS = 8
NEAR_RADIUS = 2
DEFAULT_MAX_STEPS = 500


@dataclass(frozen=True)
class Action:
    name: str
    target: str | None = None

    def __post_init__(self) -> None:
        if self.name not in NAV_ACTIONS and self.name not in MANIP_ACTIONS:
            raise ValueError(f"unknown action {self.name!r}")
        if self.name in ("PickUp", "PutDown") and not self.target:
            raise ValueError(f"{self.name} needs a target")

    @property
    def is_manipulation(self) -> bool:
        return self.name in MANIP_ACTIONS

    def __str__(self) -> str:
        return f"{self.name}({self.target})" if self.target else self.name

    @staticmethod
    def parse(text: str) -> "Action":
        text = text.strip()
        if text.endswith(")") and "(" in text:
            name, arg = text[:-1].split("(", 1)
            return Action(name.strip(), arg.strip() or None)
        return Action(text)


@dataclass(frozen=True)
class ActionOutcome:
    success: bool
    failure_reason: str | None = None

    def __post_init__(self) -> None:
        if self.success == (self.failure_reason is not None):
            raise ValueError("exactly one of success / failure_reason must be set")
        if self.failure_reason is not None and self.failure_reason not in FAILURE_REASONS:
            raise ValueError(f"unknown failure reason {self.failure_reason!r}")

    def __str__(self) -> str:
        return "ok" if self.success else self.failure_reason


OK = ActionOutcome(True)


def fail(reason: str) -> ActionOutcome:
    return ActionOutcome(False, reason)


@dataclass
class AgentState:
    profile: AgentProfile
    position: Cell
    facing: int = 0
    pitch: str = "level"
    holding: str | None = None
    battery_remaining: int = 0
    active: bool = True
    steps_taken: int = 0
    stopped_at: int | None = None

    @property
    def agent_id(self) -> str:
        return self.profile.agent_id


@dataclass(frozen=True)
class VisibleObject:
    object_id: str
    object_type: str
    receptacle_id: str | None
    cell: Cell
    mass: float


@dataclass(frozen=True)
class VisibleReceptacle:
    receptacle_id: str
    receptacle_type: str
    cell: Cell
    elevation: str
    room_id: str


@dataclass(frozen=True)
class Observation:
    observer: str
    t: int
    position: Cell
    facing: int
    pitch: str
    holding: str | None
    room_id_of_self: str | None
    visible_cells: frozenset
    cell_info: tuple  # ((cell, kind, room_id | None), ...)
    elevation_cells: dict
    visible_objects: tuple
    visible_receptacles: tuple
    visible_agents: tuple  # ((agent_id, cell), ...)


def visible_elevations(height: int, pitch: str, near: bool) -> frozenset[str]:
    levels = {"floor", "low"} if height == 0 else {"low", "high"}
    if near and pitch == "down":
        levels.add("floor")
    if near and pitch == "up":
        levels.add("high")
    return frozenset(levels)


def chebyshev(a: Cell, b: Cell) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def _line(a: Cell, b: Cell) -> list[Cell]:
    """Bresenham cells strictly between a and b."""
    (r0, c0), (r1, c1) = a, b
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr, sc = (1 if r1 > r0 else -1), (1 if c1 > c0 else -1)
    err = dc - dr
    out = []
    r, c = r0, c0
    while (r, c) != (r1, c1):
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += sc
        if e2 < dc:
            err += dc
            r += sr
        if (r, c) != (r1, c1):
            out.append((r, c))
    return out


@dataclass(frozen=True)
class View:
    cells: frozenset
    near: frozenset
    cell_info: tuple


class HouseIndex:
    """Static lookups over a house grid, shared by every episode on that house."""

    def __init__(self, house: House, radius: int = VIEW_RADIUS):
        self.house = house
        self.radius = radius
        self.h, self.w = house.shape
        self.grid = house.grid
        self.room_map = house.room_map
        self.rec_cells = {r.position: r for r in house.receptacles}
        self.passable = frozenset(
            (r, c) for r in range(self.h) for c in range(self.w)
            if self.grid[r][c] != WALL and (r, c) not in self.rec_cells
        )
        self._views: dict[Cell, View] = {}

    def room_ids_at(self, cell: Cell) -> set[int]:
        r, c = cell
        if self.grid[r][c] == FLOOR:
            return {self.room_map[r][c]}
        if self.grid[r][c] == DOOR:
            return {self.room_map[nr][nc] for nr, nc in neighbors4(cell)
                    if self.grid[nr][nc] == FLOOR}
        return set()

    def view(self, pos: Cell) -> View:
        cached = self._views.get(pos)
        if cached is not None:
            return cached
        rooms = self.room_ids_at(pos)
        r0, c0 = pos
        R = self.radius
        floor_seen = {pos}
        for r in range(max(0, r0 - R), min(self.h, r0 + R + 1)):
            for c in range(max(0, c0 - R), min(self.w, c0 + R + 1)):
                if (r - r0) ** 2 + (c - c0) ** 2 > R * R:
                    continue
                if self.grid[r][c] != FLOOR or self.room_map[r][c] not in rooms:
                    continue
                if all(self.grid[a][b] != WALL for a, b in _line(pos, (r, c))):
                    floor_seen.add((r, c))
        cells = set(floor_seen)
        for r, c in floor_seen:
            for nr in (r - 1, r, r + 1):
                for nc in (c - 1, c, c + 1):
                    if 0 <= nr < self.h and 0 <= nc < self.w and self.grid[nr][nc] != FLOOR:
                        cells.add((nr, nc))
        near = frozenset(x for x in cells if (x[0] - r0) ** 2 + (x[1] - c0) ** 2 <= NEAR_RADIUS ** 2)
        info = []
        for cell in sorted(cells):
            kind = self.grid[cell[0]][cell[1]]
            idx = self.room_map[cell[0]][cell[1]]
            info.append((cell, kind, self.house.rooms[idx].room_id if idx >= 0 else None))
        view = View(frozenset(cells), near, tuple(info))
        self._views[pos] = view
        return view


_INDEX_CACHE: dict[int, tuple[list, HouseIndex]] = {}


def house_index(house: House) -> HouseIndex:
    """Index shared by every House built on the same grid (e.g. via ``with_objects``)."""
    key = id(house.grid)
    hit = _INDEX_CACHE.get(key)
    if hit is not None and hit[0] is house.grid:
        return hit[1]
    if len(_INDEX_CACHE) > 256:
        _INDEX_CACHE.clear()
    idx = HouseIndex(house)
    _INDEX_CACHE[key] = (house.grid, idx)
    return idx


@dataclass
class SimState:
    house: House
    index: HouseIndex
    objects: dict[str, ObjectInstance]
    agents: dict[str, AgentState]
    targets: tuple[str, ...]
    rules: PlacementRules
    t: int = 0
    max_steps: int = DEFAULT_MAX_STEPS
    seed: int = 0
    pending: list[AgentProfile] = field(default_factory=list)
    trace: list[tuple] = field(default_factory=list)

    def occupied(self) -> dict[Cell, str]:
        return {a.position: aid for aid, a in self.agents.items()}

    def object_cell(self, obj: ObjectInstance) -> Cell | None:
        if obj.location.kind == "on":
            return self.house.receptacle(obj.location.ref).position
        if obj.location.kind == "floor":
            return obj.location.ref
        return None

    def is_placed_reasonably(self, object_id: str) -> bool:
        obj = self.objects[object_id]
        if obj.location.kind != "on":
            return False
        rec = self.house.receptacle(obj.location.ref)
        room_type = self.house.room(rec.room_id).room_type
        return not self.rules.is_misplaced(obj.object_type, rec.receptacle_type, room_type)

    def n_placed(self) -> int:
        return sum(self.is_placed_reasonably(o) for o in self.targets)

    def active_ids(self) -> list[str]:
        return sorted(aid for aid, a in self.agents.items() if a.active)


def new_state(house: House, team: Iterable[AgentProfile], targets: Iterable[str],
              rules: PlacementRules | None = None, max_steps: int = DEFAULT_MAX_STEPS,
              seed: int = 0) -> SimState:
    state = SimState(
        house=house,
        index=house_index(house),
        objects={o.object_id: o for o in house.objects},
        agents={},
        targets=tuple(targets),
        rules=rules or default_rules(),
        max_steps=max_steps,
        seed=seed,
    )
    for profile in team:
        _place(state, profile)
    return state


def _place(state: SimState, profile: AgentProfile) -> AgentState:
    occupied = state.occupied()
    start = profile.start_position
    if start not in state.index.passable or start in occupied:
        start = nearest_free(state, start)
    agent = AgentState(profile, start, battery_remaining=profile.battery)
    state.agents[profile.agent_id] = agent
    return agent


def nearest_free(state: SimState, origin: Cell) -> Cell:
    """Deterministic breadth-first spiral to the closest unoccupied passable cell."""
    occupied = state.occupied()
    passable = state.index.passable
    seen = {origin}
    queue = deque([origin])
    while queue:
        cur = queue.popleft()
        if cur in passable and cur not in occupied:
            return cur
        for nb in neighbors4(cur):
            if nb not in seen and 0 <= nb[0] < state.index.h and 0 <= nb[1] < state.index.w:
                seen.add(nb)
                queue.append(nb)
    raise RuntimeError("no free cell in house")


def join_agent(state: SimState, profile: AgentProfile) -> SimState:
    """Add an agent at its start cell (or the nearest free one), facing N with a full battery."""
    if profile.agent_id in state.agents:
        raise ValueError(f"{profile.agent_id} already present")
    if profile.join_time is not None and profile.join_time != state.t:
        raise ValueError(f"{profile.agent_id} joins at {profile.join_time}, state is at {state.t}")
    _place(state, profile)
    return state


def object_visible(state: SimState, agent: AgentState, obj: ObjectInstance,
                   view: View | None = None) -> bool:
    cell = state.object_cell(obj)
    if cell is None:
        return False
    view = view or state.index.view(agent.position)
    if cell not in view.cells:
        return False
    if obj.location.kind == "on":
        elevation = state.house.receptacle(obj.location.ref).elevation
    else:
        elevation = "floor"
    near = cell in view.near
    return elevation in visible_elevations(agent.profile.height, agent.pitch, near)


def observe(state: SimState, agent_id: str) -> Observation:
    agent = state.agents[agent_id]
    view = state.index.view(agent.position)
    h, pitch = agent.profile.height, agent.pitch
    elev_cells = {}
    for e in ("floor", "low", "high"):
        if e in visible_elevations(h, pitch, False):
            elev_cells[e] = view.cells
        elif e in visible_elevations(h, pitch, True):
            elev_cells[e] = view.near
        else:
            elev_cells[e] = frozenset()
    objs = []
    for obj in state.objects.values():
        if obj.location.kind == "held":
            continue
        if object_visible(state, agent, obj, view):
            rec = obj.location.ref if obj.location.kind == "on" else None
            objs.append(VisibleObject(obj.object_id, obj.object_type, rec,
                                      state.object_cell(obj), obj.mass))
    recs = tuple(
        VisibleReceptacle(r.receptacle_id, r.receptacle_type, r.position, r.elevation, r.room_id)
        for r in state.house.receptacles if r.position in view.cells
    )
    others = tuple(
        (aid, a.position) for aid, a in sorted(state.agents.items())
        if aid != agent_id and a.position in view.cells
    )
    return Observation(
        observer=agent_id,
        t=state.t,
        position=agent.position,
        facing=agent.facing,
        pitch=pitch,
        holding=agent.holding,
        room_id_of_self=state.house.room_id_at(agent.position),
        visible_cells=view.cells,
        cell_info=view.cell_info,
        elevation_cells=elev_cells,
        visible_objects=tuple(objs),
        visible_receptacles=recs,
        visible_agents=others,
    )


def execute_pickup(state: SimState, agent: AgentState, object_id: str) -> ActionOutcome:
    if not agent.profile.alpha_manip:
        return fail("no_manipulation_ability")
    obj = state.objects.get(object_id)
    if obj is None or obj.location.kind == "held":
        return fail("invalid_target")
    if agent.holding is not None:
        return fail("holding_conflict")
    if chebyshev(agent.position, state.object_cell(obj)) > 1:
        return fail("not_adjacent")
    if not object_visible(state, agent, obj):
        return fail("target_not_visible")
    if obj.mass > agent.profile.payload:
        return fail("payload_exceeded")
    state.objects[object_id] = ObjectInstance(obj.object_id, obj.object_type, obj.mass,
                                              Location.held(agent.agent_id))
    agent.holding = object_id
    return OK


def execute_put(state: SimState, agent: AgentState, receptacle_id: str) -> ActionOutcome:
    if not agent.profile.alpha_manip:
        return fail("no_manipulation_ability")
    try:
        rec = state.house.receptacle(receptacle_id)
    except KeyError:
        return fail("invalid_target")
    if agent.holding is None:
        return fail("holding_conflict")
    if chebyshev(agent.position, rec.position) > 1:
        return fail("not_adjacent")
    obj = state.objects[agent.holding]
    state.objects[obj.object_id] = ObjectInstance(obj.object_id, obj.object_type, obj.mass,
                                                  Location.on(receptacle_id))
    agent.holding = None
    return OK


def execute_drop(state: SimState, agent: AgentState) -> ActionOutcome:
    if not agent.profile.alpha_manip:
        return fail("no_manipulation_ability")
    if agent.holding is None:
        return fail("holding_conflict")
    obj = state.objects[agent.holding]
    state.objects[obj.object_id] = ObjectInstance(obj.object_id, obj.object_type, obj.mass,
                                                  Location.floor(agent.position))
    agent.holding = None
    return OK


def _execute(state: SimState, agent: AgentState, action: Action) -> ActionOutcome:
    name = action.name
    if name in MOVE_OFFSET:
        dr, dc = DIRECTIONS[(agent.facing + MOVE_OFFSET[name]) % 4]
        target = (agent.position[0] + dr, agent.position[1] + dc)
        if target not in state.index.passable:
            return fail("blocked_by_obstacle")
        if any(a.position == target for a in state.agents.values()):
            return fail("blocked_by_obstacle")
        agent.position = target
        return OK
    if name == "RotateRight":
        agent.facing = (agent.facing + 1) % 4
        return OK
    if name == "RotateLeft":
        agent.facing = (agent.facing + 3) % 4
        return OK
    if name == "LookUp":
        agent.pitch = PITCHES[min(PITCHES.index(agent.pitch) + 1, 2)]
        return OK
    if name == "LookDown":
        agent.pitch = PITCHES[max(PITCHES.index(agent.pitch) - 1, 0)]
        return OK
    if name == "Stop":
        agent.active = False
        return OK
    if name == "PickUp":
        return execute_pickup(state, agent, action.target)
    if name == "PutDown":
        return execute_put(state, agent, action.target)
    return execute_drop(state, agent)


def step(state: SimState, joint_actions: dict[str, Action]):
    """Advance one synchronous step.

    Returns ``(state, outcomes, observations)``; ``state`` is mutated in place.
    """
    active = state.active_ids()
    extra = set(joint_actions) - set(active)
    missing = set(active) - set(joint_actions)
    if missing:
        raise ValueError(f"no action for active agents {sorted(missing)}")
    outcomes: dict[str, ActionOutcome] = {}
    for aid in sorted(extra):
        outcomes[aid] = fail("battery_exhausted")
    for aid in active:
        agent = state.agents[aid]
        action = joint_actions[aid]
        outcome = _execute(state, agent, action)
        outcomes[aid] = outcome
        agent.battery_remaining -= 1
        agent.steps_taken += 1
        if agent.battery_remaining <= 0:
            agent.active = False
        if not agent.active:
            agent.stopped_at = state.t + 1
        state.trace.append((state.t, aid, str(action), str(outcome), agent.position))
    state.t += 1
    observations = {aid: observe(state, aid) for aid in state.active_ids()}
    return state, outcomes, observations


def is_terminated(state: SimState) -> str | None:
    if all(state.is_placed_reasonably(o) for o in state.targets):
        return "success"
    if state.t >= state.max_steps:
        return "timeout"
    if not state.active_ids() and not state.pending:
        return "all_stopped"
    return None


def trace_lines(trace: Iterable[tuple]) -> list[str]:
    return [
        json.dumps({"t": t, "agent_id": aid, "action": act, "outcome": out, "position": list(pos)},
                   separators=(",", ":"))
        for t, aid, act, out, pos in trace
    ]

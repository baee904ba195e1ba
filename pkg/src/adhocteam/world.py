"""House model, placement rules and the benchmark scenario/team generators."""

from __future__ import annotations

import json
import math
import random
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

Cell = tuple[int, int]

WALL, DOOR, FLOOR = 0, 1, 2
_GRID_CHARS = {WALL: "#", DOOR: "+", FLOOR: "."}
_GRID_KINDS = {v: k for k, v in _GRID_CHARS.items()}

ROOM_TYPES = ("kitchen", "bedroom", "living_room", "bathroom", "office", "hallway")
ELEVATIONS = ("floor", "low", "high")

RECEPTACLE_ELEVATION = {
    "CounterTop": "low",
    "Fridge": "low",
    "Cabinet": "high",
    "Bed": "low",
    "Dresser": "low",
    "Sofa": "low",
    "TVStand": "low",
    "CoffeeTable": "floor",
    "Sink": "low",
    "BathtubBasin": "floor",
    "Toilet": "low",
    "Desk": "low",
    "Bookshelf": "high",
    "Shelf": "high",
    "SideTable": "low",
    "TrashCan": "floor",
    "ShoeRack": "floor",
    "CoatRack": "high",
    "Floor": "floor",
}
RECEPTACLE_TYPES = tuple(RECEPTACLE_ELEVATION)

# first two entries are always instantiated so every room carries a signature
ROOM_RECEPTACLES = {
    "kitchen": ("CounterTop", "Fridge", "Cabinet", "TrashCan", "Shelf"),
    "bedroom": ("Bed", "Dresser", "SideTable", "Shelf"),
    "living_room": ("Sofa", "TVStand", "CoffeeTable", "Shelf", "SideTable", "TrashCan"),
    "bathroom": ("Sink", "Toilet", "BathtubBasin", "Cabinet", "Shelf"),
    "office": ("Desk", "Bookshelf", "Shelf", "SideTable"),
    "hallway": ("ShoeRack", "CoatRack", "SideTable", "Shelf"),
}

DIFFICULTIES = ("Easy", "Medium", "Difficult")
MASS_RANGE = (0.1, 20.0)
BATTERY_RANGE = (50, 500)
MAX_MISPLACE_ATTEMPTS = 32
SCENARIO_VERSION = "v1"


class WorldError(ValueError):
    pass


# ---------------------------------------------------------------- rules


class PlacementRules:
    """Commonsense table: object type -> reasonable (receptacle type, room type) pairs."""

    def __init__(self, table: dict[str, Iterable[Iterable[str]]]):
        self.table: dict[str, frozenset[tuple[str, str]]] = {}
        for obj, pairs in table.items():
            pairs = frozenset((str(r), str(room)) for r, room in pairs)
            if not pairs:
                raise WorldError(f"object type {obj!r} has no reasonable placement")
            for rec, room in pairs:
                if rec not in RECEPTACLE_ELEVATION or rec == "Floor":
                    raise WorldError(f"unknown receptacle type {rec!r} for {obj!r}")
                if room not in ROOM_TYPES:
                    raise WorldError(f"unknown room type {room!r} for {obj!r}")
            self.table[obj] = pairs
        self.object_types = tuple(sorted(self.table))
        self._affinity = self._build_affinity()

    @classmethod
    def load(cls, path: str | Path | None = None) -> "PlacementRules":
        if path is None:
            text = resources.files("adhocteam.data").joinpath("placement_rules.json").read_text()
        else:
            text = Path(path).read_text()
        return cls(json.loads(text))

    def _check_object(self, object_type: str) -> None:
        if object_type not in self.table:
            raise WorldError(f"unknown object type {object_type!r}")

    def is_misplaced(self, object_type: str, receptacle_type: str, room_type: str) -> bool:
        self._check_object(object_type)
        if receptacle_type not in RECEPTACLE_ELEVATION:
            raise WorldError(f"unknown receptacle type {receptacle_type!r}")
        if room_type not in ROOM_TYPES:
            raise WorldError(f"unknown room type {room_type!r}")
        if receptacle_type == "Floor":
            return True
        return (receptacle_type, room_type) not in self.table[object_type]

    def reasonable_placements(self, object_type: str) -> frozenset[tuple[str, str]]:
        self._check_object(object_type)
        return self.table[object_type]

    def _build_affinity(self) -> dict[str, frozenset[str]]:
        aff: dict[str, set[str]] = {}
        for obj, pairs in self.table.items():
            for rec, room in pairs:
                aff.setdefault(obj, set()).add(room)
                aff.setdefault(rec, set()).add(room)
        return {k: frozenset(v) for k, v in aff.items()}

    def affinity(self, entity_type: str) -> frozenset[str]:
        """Room types an object or receptacle type votes for during room inference."""
        return self._affinity.get(entity_type, frozenset())

    def to_json(self) -> str:
        return json.dumps(
            {k: sorted([list(p) for p in v]) for k, v in sorted(self.table.items())}, indent=1
        )


_DEFAULT_RULES: PlacementRules | None = None


def default_rules() -> PlacementRules:
    global _DEFAULT_RULES
    if _DEFAULT_RULES is None:
        _DEFAULT_RULES = PlacementRules.load()
    return _DEFAULT_RULES


def is_misplaced(object_type: str, receptacle_type: str, room_type: str,
                 rules: PlacementRules | None = None) -> bool:
    return (rules or default_rules()).is_misplaced(object_type, receptacle_type, room_type)


def reasonable_placements(object_type: str, rules: PlacementRules | None = None):
    return (rules or default_rules()).reasonable_placements(object_type)


def classify_difficulty(n_rooms: int) -> str:
    if not 1 <= n_rooms <= 10:
        raise WorldError(f"room count {n_rooms} outside [1, 10]")
    if n_rooms <= 3:
        return "Easy"
    if n_rooms <= 6:
        return "Medium"
    return "Difficult"


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class Room:
    room_id: str
    room_type: str


@dataclass(frozen=True)
class ReceptacleInstance:
    receptacle_id: str
    receptacle_type: str
    position: Cell
    elevation: str
    room_id: str


@dataclass(frozen=True)
class Location:
    """Where an object is: ``on`` a receptacle, on the ``floor`` at a cell, or ``held``."""

    kind: str
    ref: object

    @staticmethod
    def on(receptacle_id: str) -> "Location":
        return Location("on", receptacle_id)

    @staticmethod
    def floor(cell: Cell) -> "Location":
        return Location("floor", (int(cell[0]), int(cell[1])))

    @staticmethod
    def held(agent_id: str) -> "Location":
        return Location("held", agent_id)

    def to_dict(self) -> dict:
        ref = list(self.ref) if self.kind == "floor" else self.ref
        return {self.kind: ref}

    @staticmethod
    def from_dict(d: dict) -> "Location":
        (kind, ref), = d.items()
        if kind == "floor":
            return Location.floor(tuple(ref))
        return Location(kind, ref)

    def __str__(self) -> str:
        if self.kind == "floor":
            return f"Floor@{self.ref[0]},{self.ref[1]}"
        return str(self.ref)


@dataclass(frozen=True)
class ObjectInstance:
    object_id: str
    object_type: str
    mass: float
    location: Location


@dataclass(frozen=True)
class AgentProfile:
    agent_id: str
    alpha_nav: bool
    alpha_manip: bool
    height: int
    payload: float
    battery: int
    start_position: Cell
    join_time: int | None = 0

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "alpha_nav": self.alpha_nav,
            "alpha_manip": self.alpha_manip,
            "height": self.height,
            "payload": self.payload,
            "battery": self.battery,
            "start_position": list(self.start_position),
            "join_time": self.join_time,
        }

    @staticmethod
    def from_dict(d: dict) -> "AgentProfile":
        return AgentProfile(
            agent_id=d["agent_id"],
            alpha_nav=bool(d["alpha_nav"]),
            alpha_manip=bool(d["alpha_manip"]),
            height=int(d["height"]),
            payload=float(d["payload"]),
            battery=int(d["battery"]),
            start_position=tuple(d["start_position"]),
            join_time=d.get("join_time"),
        )


@dataclass
class House:
    grid: list[list[int]]
    room_map: list[list[int]]
    rooms: list[Room]
    receptacles: list[ReceptacleInstance]
    objects: list[ObjectInstance]
    seed: int

    def __post_init__(self) -> None:
        self._rec_index = {r.receptacle_id: r for r in self.receptacles}
        self._room_index = {r.room_id: r for r in self.rooms}

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.grid), len(self.grid[0])

    @property
    def n_rooms(self) -> int:
        return len(self.rooms)

    def receptacle(self, receptacle_id: str) -> ReceptacleInstance:
        return self._rec_index[receptacle_id]

    def room(self, room_id: str) -> Room:
        return self._room_index[room_id]

    def room_id_at(self, cell: Cell) -> str | None:
        idx = self.room_map[cell[0]][cell[1]]
        return None if idx < 0 else self.rooms[idx].room_id

    def room_type_at(self, cell: Cell) -> str | None:
        rid = self.room_id_at(cell)
        return None if rid is None else self._room_index[rid].room_type

    def kind(self, cell: Cell) -> int:
        return self.grid[cell[0]][cell[1]]

    def receptacle_cells(self) -> set[Cell]:
        return {r.position for r in self.receptacles}

    def floor_cells(self) -> list[Cell]:
        h, w = self.shape
        return [(r, c) for r in range(h) for c in range(w) if self.grid[r][c] == FLOOR]

    def free_cells(self) -> list[Cell]:
        """Floor and door cells an agent may stand on (receptacles are obstacles)."""
        blocked = self.receptacle_cells()
        h, w = self.shape
        return [
            (r, c) for r in range(h) for c in range(w)
            if self.grid[r][c] != WALL and (r, c) not in blocked
        ]

    def object_cell(self, obj: ObjectInstance) -> Cell | None:
        if obj.location.kind == "on":
            return self.receptacle(obj.location.ref).position
        if obj.location.kind == "floor":
            return obj.location.ref
        return None

    def placement_of(self, obj: ObjectInstance) -> tuple[str, str] | None:
        """(receptacle type, room type) of the object's current resting place."""
        loc = obj.location
        if loc.kind == "on":
            rec = self.receptacle(loc.ref)
            return rec.receptacle_type, self.room(rec.room_id).room_type
        if loc.kind == "floor":
            return "Floor", self.room_type_at(loc.ref) or "hallway"
        return None

    def with_objects(self, objects: list[ObjectInstance]) -> "House":
        return House(self.grid, self.room_map, self.rooms, self.receptacles, objects, self.seed)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "grid": ["".join(_GRID_CHARS[k] for k in row) for row in self.grid],
            "room_map": self.room_map,
            "rooms": [{"room_id": r.room_id, "room_type": r.room_type} for r in self.rooms],
            "receptacles": [
                {
                    "receptacle_id": r.receptacle_id,
                    "receptacle_type": r.receptacle_type,
                    "position": list(r.position),
                    "elevation": r.elevation,
                    "room_id": r.room_id,
                }
                for r in self.receptacles
            ],
            "objects": [
                {
                    "object_id": o.object_id,
                    "object_type": o.object_type,
                    "mass": o.mass,
                    "location": o.location.to_dict(),
                }
                for o in self.objects
            ],
        }

    @staticmethod
    def from_dict(d: dict) -> "House":
        return House(
            grid=[[_GRID_KINDS[ch] for ch in row] for row in d["grid"]],
            room_map=[list(row) for row in d["room_map"]],
            rooms=[Room(**r) for r in d["rooms"]],
            receptacles=[
                ReceptacleInstance(
                    r["receptacle_id"], r["receptacle_type"], tuple(r["position"]),
                    r["elevation"], r["room_id"],
                )
                for r in d["receptacles"]
            ],
            objects=[
                ObjectInstance(o["object_id"], o["object_type"], o["mass"],
                               Location.from_dict(o["location"]))
                for o in d["objects"]
            ],
            seed=d["seed"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def render(self, agents: dict[str, Cell] | None = None) -> str:
        rows = [[_GRID_CHARS[k] for k in row] for row in self.grid]
        for rec in self.receptacles:
            rows[rec.position[0]][rec.position[1]] = "R"
        for aid, (r, c) in (agents or {}).items():
            rows[r][c] = aid[-1]
        return "\n".join("".join(row) for row in rows)


def neighbors4(cell: Cell) -> Iterator[Cell]:
    r, c = cell
    yield r - 1, c
    yield r, c + 1
    yield r + 1, c
    yield r, c - 1


def bfs_reachable(passable: set[Cell], start: Cell) -> set[Cell]:
    seen = {start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nb in neighbors4(cur):
            if nb in passable and nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return seen


# ---------------------------------------------------------------- houses


def _split_regions(rng: random.Random, rect, k, rooms, walls) -> None:
    r0, c0, r1, c1 = rect
    if k == 1:
        rooms.append(rect)
        return
    h, w = r1 - r0, c1 - c0
    k1 = k // 2
    vertical = w > h or (w == h and rng.random() < 0.5)
    span = w if vertical else h
    pos = round((span - 1) * k1 / k) + rng.randint(-1, 1)
    pos = min(max(pos, 1), span - 2)
    if vertical:
        walls.append(("v", c0 + pos, r0, r1))
        first, second = (r0, c0, r1, c0 + pos), (r0, c0 + pos + 1, r1, c1)
    else:
        walls.append(("h", r0 + pos, c0, c1))
        first, second = (r0, c0, r0 + pos, c1), (r0 + pos + 1, c0, r1, c1)
    _split_regions(rng, first, k1, rooms, walls)
    _split_regions(rng, second, k - k1, rooms, walls)


def _layout(rng: random.Random, n_rooms: int, room_size: int):
    a = max(1, int(math.floor(math.sqrt(n_rooms))))
    b = math.ceil(n_rooms / a)
    for _ in range(200):
        height = a * (room_size + 1) - 1 + rng.randint(0, 2)
        width = b * (room_size + 1) - 1 + rng.randint(0, 2)
        rooms: list = []
        walls: list = []
        _split_regions(rng, (1, 1, height + 1, width + 1), n_rooms, rooms, walls)
        min_side = max(3, room_size - 2)
        if all(r1 - r0 >= min_side and c1 - c0 >= min_side for r0, c0, r1, c1 in rooms):
            return height + 2, width + 2, rooms, walls
    raise WorldError("could not lay out rooms")  # pragma: no cover


def generate_house(seed: int, n_rooms: int, rules: PlacementRules | None = None,
                   room_size: int = 5, max_objects_per_room: int = 8) -> House:
    if not 1 <= n_rooms <= 10:
        raise WorldError(f"n_rooms={n_rooms} outside [1, 10]")
    rules = rules or default_rules()
    rng = random.Random(f"house:{seed}:{n_rooms}:{room_size}")
    H, W, rects, walls = _layout(rng, n_rooms, room_size)

    grid = [[WALL] * W for _ in range(H)]
    room_map = [[-1] * W for _ in range(H)]
    for idx, (r0, c0, r1, c1) in enumerate(rects):
        for r in range(r0, r1):
            for c in range(c0, c1):
                grid[r][c] = FLOOR
                room_map[r][c] = idx
    for orient, line, a0, a1 in walls:
        options = []
        for t in range(a0, a1):
            if orient == "v":
                cell, x, y = (t, line), (t, line - 1), (t, line + 1)
            else:
                cell, x, y = (line, t), (line - 1, t), (line + 1, t)
            if grid[x[0]][x[1]] == FLOOR and grid[y[0]][y[1]] == FLOOR:
                options.append(cell)
        door = rng.choice(options)
        grid[door[0]][door[1]] = DOOR

    types = list(ROOM_TYPES)
    rng.shuffle(types)
    room_types = types[:n_rooms] + [rng.choice(ROOM_TYPES) for _ in range(n_rooms - len(types))]
    rooms = [Room(f"room_{i}", room_types[i]) for i in range(n_rooms)]

    receptacles: list[ReceptacleInstance] = []
    blocked: set[Cell] = set()
    passable = {(r, c) for r in range(H) for c in range(W) if grid[r][c] != WALL}
    type_count: dict[str, int] = {}
    for idx, (r0, c0, r1, c1) in enumerate(rects):
        rtype = room_types[idx]
        pool = ROOM_RECEPTACLES[rtype]
        n = rng.randint(2, min(6, len(pool)))
        kinds = list(pool[:2]) + rng.sample(pool[2:], n - 2)
        ring = [
            (r, c) for r in range(r0, r1) for c in range(c0, c1)
            if (r in (r0, r1 - 1) or c in (c0, c1 - 1))
            and not any(grid[nr][nc] == DOOR for nr in (r - 1, r, r + 1) for nc in (c - 1, c, c + 1))
        ]
        rng.shuffle(ring)
        for kind in kinds:
            while ring:
                cell = ring.pop()
                trial = passable - blocked - {cell}
                if len(bfs_reachable(trial, next(iter(trial)))) == len(trial):
                    blocked.add(cell)
                    i = type_count.get(kind, 0)
                    type_count[kind] = i + 1
                    receptacles.append(ReceptacleInstance(
                        f"{kind}_{i}", kind, cell, RECEPTACLE_ELEVATION[kind], rooms[idx].room_id))
                    break

    objects: list[ObjectInstance] = []
    obj_count: dict[str, int] = {}
    for room in rooms:
        here = [rec for rec in receptacles if rec.room_id == room.room_id]
        choices = [
            (rec, obj) for rec in here for obj in rules.object_types
            if (rec.receptacle_type, room.room_type) in rules.table[obj]
        ]
        if not choices:
            continue
        for _ in range(rng.randint(1, max_objects_per_room)):
            rec, obj = rng.choice(choices)
            i = obj_count.get(obj, 0)
            obj_count[obj] = i + 1
            objects.append(ObjectInstance(f"{obj}_{i}", obj, _sample_mass(rng), Location.on(rec.receptacle_id)))
    return House(grid, room_map, rooms, receptacles, objects, seed)


def _sample_mass(rng: random.Random) -> float:
    lo, hi = MASS_RANGE
    return round(math.exp(rng.uniform(math.log(lo), math.log(hi))), 2)


def check_house(house: House) -> None:
    """Raise WorldError when a House invariant does not hold."""
    if not 1 <= house.n_rooms <= 10:
        raise WorldError("room count out of range")
    h, w = house.shape
    for r in range(h):
        for c in range(w):
            kind, idx = house.grid[r][c], house.room_map[r][c]
            if (kind == FLOOR) != (0 <= idx < house.n_rooms):
                raise WorldError(f"cell {(r, c)} room assignment inconsistent")
    for i, room in enumerate(house.rooms):
        cells = {(r, c) for r in range(h) for c in range(w) if house.room_map[r][c] == i}
        if not cells or len(bfs_reachable(cells, next(iter(cells)))) != len(cells):
            raise WorldError(f"{room.room_id} is not 4-connected")
    free = set(house.free_cells())
    if len(bfs_reachable(free, next(iter(free)))) != len(free):
        raise WorldError("house is not traversable")
    for rec in house.receptacles:
        if house.kind(rec.position) != FLOOR:
            raise WorldError(f"{rec.receptacle_id} not on a floor cell")


# ---------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class Misplacement:
    object_id: str
    original: str
    placed_at: Location

    def to_dict(self) -> dict:
        return {"object_id": self.object_id, "original": self.original,
                "placed_at": self.placed_at.to_dict()}


@dataclass
class Scenario:
    scenario_id: str
    house: House
    misplacements: list[Misplacement]
    team: list[AgentProfile] = field(default_factory=list)
    adhoc: AgentProfile | None = None
    seed: int = 0

    @property
    def k(self) -> int:
        return len(self.misplacements)

    @property
    def difficulty(self) -> str:
        return classify_difficulty(self.house.n_rooms)

    def to_dict(self) -> dict:
        return {
            "version": SCENARIO_VERSION,
            "scenario_id": self.scenario_id,
            "seed": self.seed,
            "k": self.k,
            "difficulty": self.difficulty,
            "house": self.house.to_dict(),
            "misplacements": [m.to_dict() for m in self.misplacements],
            "team": [p.to_dict() for p in self.team],
            "adhoc": self.adhoc.to_dict() if self.adhoc else None,
        }

    @staticmethod
    def from_dict(d: dict) -> "Scenario":
        if d.get("version") != SCENARIO_VERSION:
            raise WorldError(f"unsupported scenario version {d.get('version')!r}")
        return Scenario(
            scenario_id=d["scenario_id"],
            house=House.from_dict(d["house"]),
            misplacements=[
                Misplacement(m["object_id"], m["original"], Location.from_dict(m["placed_at"]))
                for m in d["misplacements"]
            ],
            team=[AgentProfile.from_dict(p) for p in d["team"]],
            adhoc=AgentProfile.from_dict(d["adhoc"]) if d.get("adhoc") else None,
            seed=d.get("seed", 0),
        )


def generate_scenario(house: House, k: int, seed: int, rules: PlacementRules | None = None,
                      floor_prob: float = 0.3, scenario_id: str | None = None) -> Scenario:
    """Misplace ``k`` distinct objects onto unreasonable receptacles or the floor."""
    if not 1 <= k <= 5:
        raise WorldError(f"k={k} outside [1, 5]")
    if len(house.objects) < k:
        raise WorldError(f"house has {len(house.objects)} objects, fewer than k={k}")
    rules = rules or default_rules()
    rng = random.Random(f"scenario:{house.seed}:{k}:{seed}")
    chosen = rng.sample(range(len(house.objects)), k)
    free_floor = sorted(set(house.floor_cells()) - house.receptacle_cells())
    objects = list(house.objects)
    placements = []
    for idx in sorted(chosen):
        obj = objects[idx]
        for _ in range(MAX_MISPLACE_ATTEMPTS):
            if rng.random() < floor_prob:
                target = Location.floor(rng.choice(free_floor))
                break
            rec = rng.choice(house.receptacles)
            if rec.receptacle_id == obj.location.ref:
                continue
            if rules.is_misplaced(obj.object_type, rec.receptacle_type,
                                  house.room(rec.room_id).room_type):
                target = Location.on(rec.receptacle_id)
                break
        else:
            raise WorldError(f"no unreasonable placement found for {obj.object_id}")
        placements.append(Misplacement(obj.object_id, obj.location.ref, target))
        objects[idx] = replace(obj, location=target)
    sid = scenario_id or f"h{house.seed}-r{house.n_rooms}-k{k}-s{seed}"
    return Scenario(sid, house.with_objects(objects), placements, seed=seed)


def _start_cells(rng: random.Random, house: House, n: int, taken: Iterable[Cell] = ()) -> list[Cell]:
    cells = sorted(set(house.free_cells()) - set(taken))
    return rng.sample(cells, n)


def _profile(rng: random.Random, agent_id: str, manip: bool, start: Cell) -> AgentProfile:
    return AgentProfile(
        agent_id=agent_id,
        alpha_nav=True,
        alpha_manip=manip,
        height=rng.randint(0, 1),
        payload=round(rng.uniform(*MASS_RANGE), 2),
        battery=rng.randint(*BATTERY_RANGE),
        start_position=start,
        join_time=0,
    )


def generate_team(seed: int, n_teammates: int, house: House) -> list[AgentProfile]:
    if n_teammates not in (3, 4, 5):
        raise WorldError(f"team size {n_teammates} not in {{3, 4, 5}}")
    return _sample_team(seed, n_teammates, house)


def _sample_team(seed: int, n: int, house: House) -> list[AgentProfile]:
    rng = random.Random(f"team:{seed}:{n}")
    manip = [rng.random() < 0.5 for _ in range(n)]
    if not any(manip):
        manip[rng.randrange(n)] = True
    starts = _start_cells(rng, house, n)
    return [_profile(rng, f"T{i + 1}", manip[i], starts[i]) for i in range(n)]


def generate_adhoc_agent(seed: int, house: House, taken: Iterable[Cell] = ()) -> AgentProfile:
    """The ad hoc agent T0; its join time is left for the episode runner to set."""
    rng = random.Random(f"adhoc:{seed}")
    manip = rng.random() < 0.5
    start = _start_cells(rng, house, 1, taken)[0]
    return replace(_profile(rng, "T0", manip, start), join_time=None)

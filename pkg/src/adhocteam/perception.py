"""Per-agent semantic map, scene graph, room-type inference and frontier extraction."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .comms import KeyDetection
from .engine import Observation
from .world import DOOR, FLOOR, ROOM_TYPES, WALL, Cell, PlacementRules, default_rules, neighbors4

UNKNOWN = -1
ROOM_ORDER = {rt: i for i, rt in enumerate(ROOM_TYPES)}


@dataclass
class SemanticMap:
    """Top-down occupancy and room labels as seen by one agent."""

    owner: str
    shape: tuple[int, int]
    kind: list[list[int]] = field(default_factory=list)
    room: list[list[str | None]] = field(default_factory=list)
    explored: set = field(default_factory=set)
    seen: dict = field(default_factory=lambda: {"floor": set(), "low": set(), "high": set()})
    blocked: set = field(default_factory=set)
    annotations: dict = field(default_factory=dict)
    position: Cell | None = None
    room_cells: dict = field(default_factory=dict)
    _integrated: set = field(default_factory=set)

    def __post_init__(self) -> None:
        h, w = self.shape
        if not self.kind:
            self.kind = [[UNKNOWN] * w for _ in range(h)]
            self.room = [[None] * w for _ in range(h)]

    def known(self, cell: Cell) -> bool:
        return self.kind[cell[0]][cell[1]] != UNKNOWN

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.shape[0] and 0 <= cell[1] < self.shape[1]

    def passable(self, cell: Cell) -> bool:
        """Known free (floor or door) and not a receptacle."""
        k = self.kind[cell[0]][cell[1]]
        return (k == FLOOR or k == DOOR) and cell not in self.blocked

    def rooms_of(self, cell: Cell) -> set[str]:
        """Room of a floor cell; both sides' known rooms for a door."""
        k = self.kind[cell[0]][cell[1]]
        if k == FLOOR:
            return {self.room[cell[0]][cell[1]]}
        if k == DOOR:
            out = set()
            for nb in neighbors4(cell):
                if self.in_bounds(nb) and self.kind[nb[0]][nb[1]] == FLOOR:
                    out.add(self.room[nb[0]][nb[1]])
            return out
        return set()

    def integrate(self, obs: Observation) -> None:
        self.position = obs.position
        key = (obs.position, obs.pitch)
        if key in self._integrated:
            return
        self._integrated.add(key)
        for cell, kind, room_id in obs.cell_info:
            if self.kind[cell[0]][cell[1]] == UNKNOWN:
                self.kind[cell[0]][cell[1]] = kind
                self.room[cell[0]][cell[1]] = room_id
                if kind == FLOOR:
                    self.room_cells.setdefault(room_id, set()).add(cell)
        self.explored |= obs.visible_cells
        for elev, cells in obs.elevation_cells.items():
            self.seen[elev] |= cells
        for rec in obs.visible_receptacles:
            self.blocked.add(rec.cell)

    def annotate(self, cell: Cell, entity_id: str) -> None:
        self.annotations.setdefault(cell, set()).add(entity_id)

    def render(self) -> str:
        chars = {UNKNOWN: "?", WALL: "#", DOOR: "+", FLOOR: "."}
        rows = [[chars[k] for k in row] for row in self.kind]
        for r, c in self.blocked:
            rows[r][c] = "R"
        if self.position:
            rows[self.position[0]][self.position[1]] = "@"
        return "\n".join("".join(row) for row in rows)


def frontiers(smap: SemanticMap, start: Cell | None = None, room_id: str | None = None) -> list[Cell]:
    """Known free cells next to unknown space, nearest (path distance) first, ties by (row, col).

    With ``room_id`` only frontiers in that room (or on its doors) are returned.
    Frontiers unreachable over known cells come last, ordered by Manhattan distance.
    """
    start = start or smap.position
    cands = set()
    h, w = smap.shape
    for cell in smap.explored:
        if not smap.passable(cell):
            continue
        if room_id is not None and room_id not in smap.rooms_of(cell):
            continue
        for nb in neighbors4(cell):
            if 0 <= nb[0] < h and 0 <= nb[1] < w and smap.kind[nb[0]][nb[1]] == UNKNOWN:
                cands.add(cell)
                break
    if not cands:
        return []
    dist = path_distances(smap, start) if start is not None else {}
    reach = sorted((dist[c], c) for c in cands if c in dist)
    far = sorted(
        (abs(c[0] - start[0]) + abs(c[1] - start[1]) if start else 0, c)
        for c in cands if c not in dist
    )
    return [c for _, c in reach] + [c for _, c in far]


def path_distances(smap: SemanticMap, start: Cell) -> dict[Cell, int]:
    """BFS step distances over known passable cells (the start counts as passable)."""
    dist = {start: 0}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        d = dist[cur] + 1
        for nb in neighbors4(cur):
            if nb not in dist and smap.in_bounds(nb) and smap.passable(nb):
                dist[nb] = d
                queue.append(nb)
    return dist


# ---------------------------------------------------------------- scene graph


@dataclass
class ObjectNode:
    object_id: str
    object_type: str
    mass: float | None
    receptacle_id: str | None  # None means on the floor
    cell: Cell | None
    room_id: str | None
    last_seen: int
    misplaced_belief: bool = False
    reported: bool = False  # known only from a teammate message

    @property
    def location(self) -> str:
        if self.receptacle_id:
            return self.receptacle_id
        if self.cell is not None:
            return f"Floor@{self.cell[0]},{self.cell[1]}"
        return "unknown"


@dataclass
class ReceptacleNode:
    receptacle_id: str
    receptacle_type: str
    cell: Cell
    elevation: str | None  # None until seen firsthand
    room_id: str
    candidate_for: set = field(default_factory=set)


@dataclass
class RoomNode:
    room_id: str
    room_type: str | None = None
    receptacles: set = field(default_factory=set)
    reported_type: str | None = None


@dataclass
class SceneGraph:
    """rooms -> receptacles -> objects; floor objects hang off their room."""

    rooms: dict = field(default_factory=dict)
    receptacles: dict = field(default_factory=dict)
    objects: dict = field(default_factory=dict)
    replaced: set = field(default_factory=set)

    def room_node(self, room_id: str) -> RoomNode:
        node = self.rooms.get(room_id)
        if node is None:
            node = self.rooms[room_id] = RoomNode(room_id)
        return node

    def room_type(self, room_id: str | None) -> str | None:
        node = self.rooms.get(room_id) if room_id else None
        if node is None:
            return None
        return node.room_type or node.reported_type

    def misplaced_objects(self) -> list[ObjectNode]:
        return [o for o in self.objects.values() if o.misplaced_belief and o.object_id not in self.replaced]

    def children(self, receptacle_id: str) -> list[ObjectNode]:
        return [o for o in self.objects.values() if o.receptacle_id == receptacle_id]

    def candidates_for(self, object_type: str) -> list[ReceptacleNode]:
        return [r for r in self.receptacles.values() if object_type in r.candidate_for]


def infer_room_type(entity_types, rules: PlacementRules | None = None) -> str | None:
    """Vote over affinity rooms; each type spreads one vote across its rooms."""
    rules = rules or default_rules()
    scores = dict.fromkeys(ROOM_TYPES, 0.0)
    voted = False
    for et in entity_types:
        aff = rules.affinity(et)
        for rt in aff:
            scores[rt] += 1.0 / len(aff)
            voted = True
    if not voted:
        return None
    return max(ROOM_TYPES, key=lambda rt: (scores[rt], -ROOM_ORDER[rt]))


def room_type_scores(entity_types, rules: PlacementRules | None = None) -> dict[str, float]:
    rules = rules or default_rules()
    scores = dict.fromkeys(ROOM_TYPES, 0.0)
    for et in entity_types:
        aff = rules.affinity(et)
        for rt in aff:
            scores[rt] += 1.0 / len(aff)
    return scores


class Perception:
    """One agent's map plus scene graph, updated from observations and teammate detections."""

    def __init__(self, owner: str, shape: tuple[int, int], rules: PlacementRules | None = None):
        self.rules = rules or default_rules()
        self.map = SemanticMap(owner, shape)
        self.graph = SceneGraph()
        self.t = 0

    # -- local observations

    def update(self, obs: Observation) -> list[KeyDetection]:
        if obs.observer != self.map.owner:
            raise ValueError("observation belongs to another agent")
        self.t = obs.t
        smap, graph = self.map, self.graph
        smap.integrate(obs)
        touched: set[str] = set()

        for rec in obs.visible_receptacles:
            if rec.receptacle_id not in graph.receptacles:
                graph.receptacles[rec.receptacle_id] = ReceptacleNode(
                    rec.receptacle_id, rec.receptacle_type, rec.cell, rec.elevation, rec.room_id)
                graph.room_node(rec.room_id).receptacles.add(rec.receptacle_id)
                smap.annotate(rec.cell, rec.receptacle_id)
                touched.add(rec.room_id)
            elif graph.receptacles[rec.receptacle_id].elevation is None:
                graph.receptacles[rec.receptacle_id].elevation = rec.elevation

        visible_ids = set()
        removed = False
        for vo in obs.visible_objects:
            visible_ids.add(vo.object_id)
            room_id = (graph.receptacles[vo.receptacle_id].room_id if vo.receptacle_id
                       else smap.room[vo.cell[0]][vo.cell[1]])
            node = graph.objects.get(vo.object_id)
            if node is None:
                node = ObjectNode(vo.object_id, vo.object_type, vo.mass, vo.receptacle_id, vo.cell,
                                  room_id, obs.t)
                graph.objects[vo.object_id] = node
                touched.add(room_id)
            elif node.receptacle_id != vo.receptacle_id or node.cell != vo.cell or node.reported:
                node.receptacle_id, node.cell, node.room_id = vo.receptacle_id, vo.cell, room_id
                node.mass = vo.mass
                node.reported = False
                touched.add(room_id)
            node.last_seen = obs.t
            smap.annotate(vo.cell, vo.object_id)

        # objects whose remembered spot is in view but which are not there any more
        for oid, node in list(graph.objects.items()):
            if oid in visible_ids or node.cell is None:
                continue
            if node.receptacle_id is None:
                elev = "floor"
            elif node.receptacle_id in graph.receptacles:
                elev = graph.receptacles[node.receptacle_id].elevation
                if elev is None:
                    continue
            else:
                continue
            if node.cell in obs.elevation_cells.get(elev, ()):
                del graph.objects[oid]
                removed = True
                if oid in smap.annotations.get(node.cell, ()):
                    smap.annotations[node.cell].discard(oid)

        if not touched and not removed:
            return []
        return self._refresh(touched)

    # -- teammate information

    def ingest(self, det: KeyDetection, t_sent: int) -> list[KeyDetection]:
        """Merge a teammate's detection; never overrides fresher own sightings."""
        graph = self.graph
        if det.room_id and det.room_type:
            graph.room_node(det.room_id).reported_type = det.room_type
        if det.entity == "receptacle":
            if det.object_id not in graph.receptacles and det.cell is not None and det.room_id:
                graph.receptacles[det.object_id] = ReceptacleNode(
                    det.object_id, det.object_type, tuple(det.cell), None, det.room_id,
                    set(det.candidate_for))
                graph.room_node(det.room_id).receptacles.add(det.object_id)
            elif det.object_id in graph.receptacles:
                graph.receptacles[det.object_id].candidate_for |= set(det.candidate_for)
            return self._refresh({det.room_id} if det.room_id else set())
        node = graph.objects.get(det.object_id)
        if node is not None and not node.reported and node.last_seen >= t_sent:
            return []
        loc = det.location
        rec_id = None if loc == "unknown" or loc.startswith("Floor@") else loc
        node = ObjectNode(det.object_id, det.object_type, det.mass, rec_id,
                          tuple(det.cell) if det.cell is not None else None,
                          det.room_id, t_sent, misplaced_belief=det.misplaced, reported=True)
        graph.objects[det.object_id] = node
        if det.misplaced:
            graph.replaced.discard(det.object_id)
        return self._refresh({det.room_id} if det.room_id else set())

    def mark_replaced(self, object_id: str) -> None:
        self.graph.replaced.add(object_id)
        node = self.graph.objects.get(object_id)
        if node is not None:
            node.misplaced_belief = False

    def forget(self, object_id: str) -> None:
        self.graph.objects.pop(object_id, None)

    # -- belief maintenance

    def _refresh(self, touched: set[str]) -> list[KeyDetection]:
        graph, rules = self.graph, self.rules
        touched.discard(None)
        for room_id in touched:
            node = graph.room_node(room_id)
            types = [graph.receptacles[r].receptacle_type for r in sorted(node.receptacles)]
            types += [o.object_type for o in graph.objects.values()
                      if o.room_id == room_id and o.receptacle_id and not o.reported]
            node.room_type = infer_room_type(types, rules)

        detections: list[KeyDetection] = []
        for oid in sorted(graph.objects):
            obj = graph.objects[oid]
            if obj.reported:
                continue
            was = obj.misplaced_belief
            if obj.receptacle_id is None:
                now = obj.cell is not None
            else:
                rec = graph.receptacles.get(obj.receptacle_id)
                rtype = graph.room_type(rec.room_id) if rec else None
                now = rtype is not None and rules.is_misplaced(obj.object_type, rec.receptacle_type, rtype)
            obj.misplaced_belief = now
            if now and oid in graph.replaced:
                graph.replaced.discard(oid)
            if now and not was:
                detections.append(self.object_detection(obj))
            if was and not now and obj.receptacle_id is not None:
                graph.replaced.add(oid)

        wanted = {o.object_type for o in graph.misplaced_objects()}
        for rid in sorted(graph.receptacles):
            rec = graph.receptacles[rid]
            rtype = graph.room_type(rec.room_id)
            if rtype is None:
                continue
            fits = {t for t in wanted if (rec.receptacle_type, rtype) in rules.table[t]}
            new = fits - rec.candidate_for
            if new:
                rec.candidate_for |= new
                detections.append(KeyDetection(
                    object_id=rid, object_type=rec.receptacle_type, location=rec.room_id,
                    misplaced=False, candidate_for=frozenset(new), entity="receptacle",
                    cell=rec.cell, room_id=rec.room_id, room_type=rtype))
        return detections

    def object_detection(self, obj: ObjectNode) -> KeyDetection:
        return KeyDetection(
            object_id=obj.object_id, object_type=obj.object_type, location=obj.location,
            misplaced=obj.misplaced_belief, mass=obj.mass, cell=obj.cell, room_id=obj.room_id,
            room_type=self.graph.room_type(obj.room_id))

    # -- queries

    def room_complete(self, room_id: str, height: int) -> bool:
        """No frontier left in the room and nothing left at this body's blind elevation."""
        return not frontiers(self.map, self.map.position, room_id) and not self.sweep_targets(room_id, height)

    def room_completeness(self, room_id: str, height: int) -> float:
        if self.room_complete(room_id, height):
            return 1.0
        cells = self.map.room_cells.get(room_id, set())
        if not cells:
            return 0.0
        return min(0.99, len(cells & self.map.explored) / len(cells))

    def sweep_targets(self, room_id: str, height: int) -> list[Cell]:
        """Cells of the room whose blind elevation for this body has not been inspected."""
        blind = "floor" if height == 1 else "high"
        seen = self.map.seen[blind]
        out = []
        if blind == "floor":
            for cell in self.map.room_cells.get(room_id, ()):
                if cell not in seen and cell not in self.map.blocked:
                    out.append(cell)
        for rec in self.graph.receptacles.values():
            if rec.room_id == room_id and rec.elevation == blind and rec.cell not in seen:
                out.append(rec.cell)
        return sorted(out)

    def known_rooms(self) -> list[str]:
        return sorted(set(self.map.room_cells) | set(self.graph.rooms))


def update(smap: SemanticMap, graph: SceneGraph, obs: Observation,
           rules: PlacementRules | None = None):
    """Functional form: returns (map, graph, new_key_detections)."""
    p = Perception.__new__(Perception)
    p.rules = rules or default_rules()
    p.map, p.graph, p.t = smap, graph, obs.t
    dets = p.update(obs)
    return smap, graph, dets

"""Read-only snapshot handed to a reasoner for one planning call."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from ..engine import chebyshev
from ..perception import Perception
from ..world import FLOOR, AgentProfile, Cell, neighbors4
from .subtasks import SubTask

FAR = 10_000


@dataclass
class TeammateInfo:
    agent_id: str
    profile: AgentProfile | None = None
    subtask: str | None = None
    status: str | None = None
    subskill: str | None = None


@dataclass
class PlannerContext:
    agent_id: str
    profile: AgentProfile
    t: int
    position: Cell
    holding: str | None
    perception: Perception
    holding_type: str | None = None
    messages: list = field(default_factory=list)
    memory: list = field(default_factory=list)
    teammates: dict = field(default_factory=dict)
    current_subtask: SubTask | None = None
    last_failure: str | None = None
    excluded: frozenset = frozenset()
    replaced: frozenset = frozenset()
    explored_by_others: dict = field(default_factory=dict)
    request_feedback: Callable[[SubTask], list] | None = None
    adaptive_note: bool = False
    objections: tuple = ()
    _dist: dict | None = None

    @property
    def rules(self):
        return self.perception.rules

    @property
    def graph(self):
        return self.perception.graph

    @property
    def smap(self):
        return self.perception.map

    def distances(self) -> dict[Cell, int]:
        """Optimistic BFS steps from the agent: unknown cells count as free."""
        if self._dist is None:
            smap = self.smap
            h, w = smap.shape
            dist = {self.position: 0}
            queue = deque([self.position])
            while queue:
                cur = queue.popleft()
                d = dist[cur] + 1
                for nb in neighbors4(cur):
                    if nb in dist or not (0 <= nb[0] < h and 0 <= nb[1] < w):
                        continue
                    if smap.passable(nb) or not smap.known(nb):
                        dist[nb] = d
                        queue.append(nb)
            self._dist = dist
        return self._dist

    def distance_to(self, cell: Cell | None) -> int:
        """Steps until the agent is within reach (Chebyshev 1) of ``cell``."""
        if cell is None:
            return FAR
        if chebyshev(self.position, cell) <= 1:
            return 0
        dist = self.distances()
        best = FAR + abs(cell[0] - self.position[0]) + abs(cell[1] - self.position[1])
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                d = dist.get((cell[0] + dr, cell[1] + dc))
                if d is not None and d < best:
                    best = d
        return best

    def room_distance(self, room_id: str) -> int:
        if room_id in self.smap.rooms_of(self.position):
            return 0
        cells = self.smap.room_cells.get(room_id)
        if not cells:
            return FAR
        dist = self.distances()
        return min((dist[c] for c in cells if c in dist), default=FAR)

    def current_rooms(self) -> set[str]:
        return self.smap.rooms_of(self.position)

    def in_room(self, room_id: str) -> bool:
        r, c = self.position
        return room_id in self.current_rooms() or (
            self.smap.kind[r][c] == FLOOR and self.smap.room[r][c] == room_id)

    def executing_others(self) -> dict[str, str]:
        """agent_id -> sub-task literal for teammates currently working on something."""
        return {
            aid: info.subtask for aid, info in self.teammates.items()
            if info.subtask and info.status == "started"
        }

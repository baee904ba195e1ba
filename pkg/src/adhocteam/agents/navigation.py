"""A* over an agent's own map, treating unknown cells as passable at extra cost."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from ..engine import DIRECTIONS, Action
from ..perception import SemanticMap
from ..world import Cell, neighbors4

UNKNOWN_COST = 2
DETOUR_SLACK = 4
JAM_LIMIT = 6
HOLD_STEPS = 3  # how long a sidestepper keeps off the cell it vacated
_MOVE_FOR_OFFSET = ("MoveAhead", "MoveRight", "MoveBack", "MoveLeft")


class Unreachable(RuntimeError):
    pass


def plan_path(smap: SemanticMap, start: Cell, goals, avoid=frozenset(),
              unknown_cost: int = UNKNOWN_COST) -> list[Cell] | None:
    """Cheapest path from ``start`` to any goal cell, excluding ``start``; None if none exists."""
    goals = set(goals)
    if not goals:
        return None
    if start in goals:
        return []
    few = len(goals) <= 16
    glist = list(goals)

    def h(cell: Cell) -> int:
        if not few:
            return 0
        return min(abs(cell[0] - g[0]) + abs(cell[1] - g[1]) for g in glist)

    h_rows, w_cols = smap.shape
    kind, blocked = smap.kind, smap.blocked
    best = {start: 0}
    parent: dict[Cell, Cell] = {}
    heap = [(h(start), 0, start)]
    while heap:
        _, g, cur = heapq.heappop(heap)
        if g > best.get(cur, 1 << 30):
            continue
        if cur in goals:
            path = [cur]
            while path[-1] in parent and parent[path[-1]] != start:
                path.append(parent[path[-1]])
            return path[::-1]
        for nb in neighbors4(cur):
            r, c = nb
            if not (0 <= r < h_rows and 0 <= c < w_cols) or nb in avoid:
                continue
            k = kind[r][c]
            if k == -1:
                step = unknown_cost
            elif (k == 1 or k == 2) and nb not in blocked:
                step = 1
            else:
                continue
            ng = g + step
            if ng < best.get(nb, 1 << 30):
                best[nb] = ng
                parent[nb] = cur
                heapq.heappush(heap, (ng + h(nb), ng, nb))
    return None


def move_toward(facing: int, cur: Cell, nxt: Cell) -> Action:
    """Facing-relative move that displaces the agent from ``cur`` to the adjacent ``nxt``."""
    d = DIRECTIONS.index((nxt[0] - cur[0], nxt[1] - cur[1]))
    return Action(_MOVE_FOR_OFFSET[(d - facing) % 4])


@dataclass
class Navigator:
    """Keeps the current path and re-plans when it becomes invalid or blocked."""

    path: list[Cell] = field(default_factory=list)
    goals: frozenset = frozenset()
    waited: int = 0
    blocks: dict = field(default_factory=dict)  # cell -> times an agent stood in the way
    hold: dict = field(default_factory=dict)  # cell just vacated by a sidestep -> calls left

    def reset(self) -> None:
        self.path, self.goals, self.waited = [], frozenset(), 0
        self.blocks, self.hold = {}, {}

    def _jammed(self) -> frozenset:
        return frozenset(c for c, n in self.blocks.items() if n >= JAM_LIMIT)

    def next_action(self, smap: SemanticMap, pos: Cell, facing: int, goals, agents: dict,
                    my_id: str, rng) -> Action | None:
        """Action toward the goal set; None when already on a goal cell.

        ``agents`` maps visible agent ids to their cells. Goal cells somebody stands
        on are dropped while others remain. When another agent blocks the next cell
        the lower id first waits a step while the higher id takes a short detour or
        sidesteps, and anyone kept waiting long detours anyway. A sidestepper does
        not walk straight back into the cell it gave up, which would hand the jam
        right back to whoever it made room for.
        """
        goals = frozenset(goals)
        if pos in goals:
            self.reset()
            return None
        self.hold = {c: n - 1 for c, n in self.hold.items() if n > 1}
        occupied = set(agents.values())
        goals = (goals - occupied) or goals
        if goals != self.goals:
            self.blocks = {}
        if goals != self.goals or not self.path or self.path[0] not in _adjacent(pos) \
                or not self._valid(smap):
            self.goals = goals
            self.path = plan_path(smap, pos, goals, avoid=self._jammed() | frozenset(self.hold)) or []
            if not self.path:
                if self.hold:
                    return Action("RotateRight")
                raise Unreachable(f"no path from {pos} to goals")
        nxt = self.path[0]
        blocker = next((aid for aid, cell in agents.items() if cell == nxt), None)
        if blocker is None:
            self.waited = 0
            self.path.pop(0)
            return move_toward(facing, pos, nxt)
        self.waited += 1
        self.blocks[nxt] = self.blocks.get(nxt, 0) + 1
        if self.blocks[nxt] >= JAM_LIMIT and plan_path(smap, pos, goals, avoid=self._jammed()) is None:
            # somebody has been parked in the only way through
            raise Unreachable(f"{nxt} stays occupied by {blocker}")
        if my_id < blocker and self.waited < 2:
            # give way first, so two agents swapping cells do not dodge in lockstep
            return Action("RotateRight")
        detour = plan_path(smap, pos, goals, avoid=occupied | self._jammed())
        if detour and (len(detour) <= len(self.path) + DETOUR_SLACK or self.waited >= 3):
            self.path = detour
            self.waited = 0
            return move_toward(facing, pos, self.path.pop(0))
        if my_id > blocker or self.waited >= 3:
            side = [c for c in _adjacent(pos) if smap.in_bounds(c) and smap.passable(c)
                    and c not in occupied and c != nxt]
            if side:
                self.path = []
                self.hold[pos] = HOLD_STEPS
                return move_toward(facing, pos, rng.choice(sorted(side)))
        return Action("RotateRight")

    def _valid(self, smap: SemanticMap) -> bool:
        for cell in self.path[:4]:
            k = smap.kind[cell[0]][cell[1]]
            if k == 0 or cell in smap.blocked:
                return False
        return True


def _adjacent(cell: Cell) -> list[Cell]:
    return list(neighbors4(cell))

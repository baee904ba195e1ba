"""Turns sub-skills into low-level actions and assesses their outcomes."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..comms import KeyDetection
from ..engine import Action, ActionOutcome, Observation, chebyshev
from ..perception import Perception, frontiers
from ..planner.subtasks import SubSkill, SubTask
from ..world import DOOR, FLOOR, AgentProfile, Cell, neighbors4
from .navigation import Navigator, Unreachable

SUBTASK_FAILURES = ("no_manipulation_ability", "payload_exceeded", "invalid_target", "holding_conflict")
SUBSKILL_FAILURES = ("not_adjacent", "blocked_by_obstacle", "target_not_visible")


class SkillFailed(RuntimeError):
    """The sub-skill cannot make progress; the caller re-plans the sub-task."""


@dataclass
class Assessment:
    outcome: ActionOutcome | None
    replan_level: str = "none"
    new_key_detections: list = field(default_factory=list)
    reason: str = ""


def assess(outcome: ActionOutcome | None, detections: list[KeyDetection], *,
           previous_failure: str | None = None, holding_type: str | None = None) -> Assessment:
    """Map an action outcome plus fresh detections onto a re-plan level.

    A second identical failure in a row escalates from sub-skill to sub-task.
    """
    level, reason = "none", ""
    if outcome is not None and not outcome.success:
        reason = outcome.failure_reason
        if reason == "battery_exhausted":
            level = "stop"
        elif reason in SUBTASK_FAILURES:
            level = "subtask"
        else:
            level = "subtask" if previous_failure == reason else "subskill"
    for det in detections:
        if det.entity == "object" and det.misplaced:
            level = _max_level(level, "subtask")
            reason = reason or f"new misplaced object {det.object_id}"
        elif det.entity == "receptacle":
            relevant = holding_type is not None and holding_type in det.candidate_for
            level = _max_level(level, "subtask" if relevant else "subskill")
            reason = reason or f"new candidate receptacle {det.object_id}"
    return Assessment(outcome, level, list(detections), reason)


_LEVELS = ("none", "subskill", "subtask", "stop")


def _max_level(a: str, b: str) -> str:
    return a if _LEVELS.index(a) >= _LEVELS.index(b) else b


class Executor:
    """Per-agent sub-skill driver: navigation, exploration sweeps and manipulation."""

    def __init__(self, profile: AgentProfile, perception: Perception, rng):
        self.profile = profile
        self.perception = perception
        self.rng = rng
        self.nav = Navigator()
        self.skill: SubSkill | None = None
        self.subtask: SubTask | None = None
        self.point_goal: Cell | None = None
        self.issued = False
        self.avoid_rooms: frozenset = frozenset()
        self.explore_target: tuple[str, Cell] | None = None

    def start(self, skill: SubSkill, subtask: SubTask | None) -> None:
        self.skill, self.subtask = skill, subtask
        self.nav.reset()
        self.point_goal = None
        self.issued = False
        self.explore_target = None

    def desired_pitch(self) -> str:
        return "down" if self.profile.height == 1 else "up"

    def act(self, obs: Observation) -> Action | None:
        """Next action for the current sub-skill; None once it is complete."""
        if obs.pitch != self.desired_pitch():
            return Action("LookDown" if self.desired_pitch() == "down" else "LookUp")
        skill = self.skill
        if skill is None:
            return None
        kind = skill.kind
        smap = self.perception.map
        graph = self.perception.graph
        pos = obs.position
        agents = dict(obs.visible_agents)
        if kind == "Stop":
            return self.park(obs) or Action("Stop")
        if kind in ("PickupObject", "PutObject"):
            if self.issued:
                return None
            self.issued = True
            if kind == "PickupObject":
                return Action("PickUp", skill.object_id)
            return Action("PutDown", skill.receptacle_id)
        if kind == "GoToObject":
            node = graph.objects.get(skill.object_id)
            if node is None or node.cell is None:
                raise SkillFailed(f"{skill.object_id} no longer where it was")
            if chebyshev(pos, node.cell) <= 1:
                return None
            return self._go(obs, _reach_cells(smap, node.cell), agents)
        if kind == "GoToRoom":
            if skill.room_id in smap.rooms_of(pos):
                return None
            cells = [c for c in smap.room_cells.get(skill.room_id, ()) if smap.passable(c)]
            if not cells:
                # known only from teammates: head for its receptacles through unknown space
                cells = set()
                for rec in graph.receptacles.values():
                    if rec.room_id == skill.room_id and rec.cell is not None:
                        cells |= _reach_cells(smap, rec.cell)
            if not cells:
                raise SkillFailed(f"no known way into {skill.room_id}")
            return self._go(obs, cells, agents)
        if kind == "GoToPoint":
            if self.point_goal is None:
                self.point_goal = (pos[0] + skill.dy, pos[1] + skill.dx)
            goal = self.point_goal
            if pos == goal:
                return None
            if smap.in_bounds(goal) and smap.passable(goal):
                goals = {goal}
            else:
                goals = _reach_cells(smap, goal)
                if pos in goals or not goals:
                    return None
            return self._go(obs, goals, agents)
        if kind == "Explore":
            return self._explore(obs, agents)
        raise SkillFailed(f"cannot execute {skill}")  # pragma: no cover

    def park(self, obs: Observation) -> Action | None:
        """A move toward a parking cell, or None when the agent may stay where it is.

        Idle agents keep off doors and away from misplaced objects, since one
        standing there can seal off a room or the only cell next to an object.
        Cells beside receptacles are avoided too when there is a choice.
        """
        smap, pos, graph = self.perception.map, obs.position, self.perception.graph
        keep_clear = set()
        for o in graph.misplaced_objects():
            if o.cell is not None:
                keep_clear |= _neighbourhood(o.cell)
        near_rec = set()
        for rec in graph.receptacles.values():
            if rec.cell is not None:
                near_rec |= _neighbourhood(rec.cell)
        if _parking_ok(smap, pos) and pos not in keep_clear | near_rec:
            return None
        candidates = _parking_cells(smap, pos) - keep_clear
        goals = (candidates - near_rec) or candidates
        if not goals or (pos in goals and not candidates - near_rec):
            return None
        try:
            return self._go(obs, goals, dict(obs.visible_agents))
        except SkillFailed:
            return None

    def _go(self, obs: Observation, goals, agents) -> Action | None:
        try:
            return self.nav.next_action(self.perception.map, obs.position, obs.facing, goals,
                                        agents, self.profile.agent_id, self.rng)
        except Unreachable as exc:
            raise SkillFailed(str(exc)) from exc

    def explore_goal(self, pos: Cell) -> list[Cell] | None:
        """Goal cells for the next exploration move, or None when there is nothing left.

        The chosen frontier or sweep target is kept until it is reached or resolved,
        so the agent does not flip between two targets at similar distance.
        """
        smap, p = self.perception.map, self.perception
        room = self.subtask.room_id if self.subtask is not None and self.subtask.kind == "Explore" else None
        sweep = self.subtask is None or self.subtask.kind == "Explore"
        sticky = self.explore_target
        if sticky is not None:
            kind, cell = sticky
            if kind == "frontier" and _is_frontier(smap, cell):
                return [cell]
            if kind == "sweep" and cell not in smap.seen[self._blind()]:
                return sorted(_reach_cells(smap, cell) or {cell})
            self.explore_target = None
        fr = frontiers(smap, pos, room)
        if room is None and fr and self.avoid_rooms:
            preferred = [c for c in fr if not (smap.rooms_of(c) & self.avoid_rooms)]
            fr = preferred or fr
        if fr:
            self.explore_target = ("frontier", fr[0])
            return [fr[0]]
        if not sweep:
            return None  # searching for a receptacle: receptacles show up without a sweep
        rooms = [room] if room else p.known_rooms()
        best = None
        for r in rooms:
            for cell in p.sweep_targets(r, self.profile.height):
                reach = _reach_cells(smap, cell) or {cell}
                d = min(abs(c[0] - pos[0]) + abs(c[1] - pos[1]) for c in reach)
                if best is None or (d, cell) < best[0]:
                    best = ((d, cell), reach)
        if best is None:
            return None
        self.explore_target = ("sweep", best[0][1])
        return sorted(best[1])

    def _explore(self, obs: Observation, agents) -> Action | None:
        for _ in range(3):
            goals = self.explore_goal(obs.position)
            if goals is None:
                return None
            if obs.position in goals:
                # the target is in reach but still unseen: count it as looked at
                self.perception.map.seen[self._blind()] |= _neighbourhood(obs.position)
                self.explore_target = None
                continue
            try:
                return self.nav.next_action(self.perception.map, obs.position, obs.facing, goals,
                                            agents, self.profile.agent_id, self.rng)
            except Unreachable:
                # mark unreachable targets as handled so exploration can move on
                for g in goals:
                    self.perception.map.seen[self._blind()].add(g)
                    self.perception.map.explored.add(g)
                if self.explore_target is not None:
                    self.perception.map.seen[self._blind()].add(self.explore_target[1])
                    self.perception.map.explored.add(self.explore_target[1])
                self.explore_target = None
                self.nav.reset()
        return Action("RotateRight")

    def _blind(self) -> str:
        return "floor" if self.profile.height == 1 else "high"


def _reach_cells(smap, target: Cell) -> set[Cell]:
    out = set()
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            c = (target[0] + dr, target[1] + dc)
            if (dr or dc) and smap.in_bounds(c) and (smap.passable(c) or not smap.known(c)):
                out.add(c)
    return out


def _is_frontier(smap, cell: Cell) -> bool:
    return smap.passable(cell) and any(smap.in_bounds(nb) and not smap.known(nb) for nb in neighbors4(cell))


def _parking_ok(smap, cell: Cell) -> bool:
    """A stopped agent must not sit on a door or in front of one."""
    if smap.kind[cell[0]][cell[1]] != FLOOR:
        return False
    return not any(smap.in_bounds(nb) and smap.kind[nb[0]][nb[1]] == DOOR for nb in neighbors4(cell))


def _parking_cells(smap, pos: Cell) -> set[Cell]:
    near = {(pos[0] + dr, pos[1] + dc) for dr in range(-3, 4) for dc in range(-3, 4)}
    return {c for c in near if smap.in_bounds(c) and c not in smap.blocked and _parking_ok(smap, c)}


def _neighbourhood(pos: Cell) -> set[Cell]:
    return {(pos[0] + dr, pos[1] + dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1)}

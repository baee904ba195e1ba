"""Reasoner interface and the deterministic rule-based implementation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

from ..comms import ExecutingSubTask, ExploredRoom, ObjectSeen
from ..engine import chebyshev
from .context import FAR, PlannerContext
from .subtasks import MAX_POINT_OFFSET, STOP, SubSkill, SubTask


class ReasonerError(RuntimeError):
    """A reasoner could not produce a usable answer; ``kind`` is transport, auth or parse."""

    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


class PlanningError(ValueError):
    """The sub-task refers to something the agent does not know about; re-plan the sub-task."""


@dataclass(frozen=True)
class Verdict:
    reasonable: bool
    reason: str = ""

    def __str__(self) -> str:
        return "reasonable" if self.reasonable else f"infeasible({self.reason})"


REASONABLE = Verdict(True)


class Reasoner(Protocol):
    def propose(self, ctx: PlannerContext, n: int, prompt_style: str = "full") -> list[tuple[SubTask, str]]: ...

    def rank(self, ctx: PlannerContext, candidates: list[SubTask]) -> list[tuple[SubTask, str]]: ...

    def judge(self, ctx: PlannerContext, candidate: SubTask, facts: list) -> Verdict: ...

    def plan_subskill(self, ctx: PlannerContext, subtask: SubTask) -> tuple[SubSkill, str]: ...


# ---------------------------------------------------------------- shared helpers


def can_lift(ctx: PlannerContext, mass: float | None) -> bool:
    return ctx.profile.alpha_manip and mass is not None and mass <= ctx.profile.payload


def placement_options(ctx: PlannerContext, object_type: str) -> list[tuple[str, str]]:
    """(receptacle type, room type) pairs to aim for, best first.

    Pairs with a known matching receptacle come first (nearest first), then pairs
    whose room type is known, then the rest in name order.
    """
    pairs = sorted(ctx.rules.reasonable_placements(object_type))
    seen_d: dict[tuple[str, str], int] = {}
    for rid in sorted(ctx.graph.receptacles):
        rec = ctx.graph.receptacles[rid]
        pair = (rec.receptacle_type, ctx.graph.room_type(rec.room_id))
        if pair in pairs:
            d = ctx.distance_to(rec.cell)
            if pair not in seen_d or d < seen_d[pair]:
                seen_d[pair] = d
    known_types = {ctx.graph.room_type(r) for r in ctx.graph.rooms}

    def key(pair):
        if pair in seen_d:
            return (0, seen_d[pair], pair)
        return (1 if pair[1] in known_types else 2, 0, pair)

    return sorted(pairs, key=key)


def choose_placement(ctx: PlannerContext, object_type: str) -> tuple[str, str]:
    """Pick the (receptacle type, room type) to aim for: a known matching receptacle first."""
    return placement_options(ctx, object_type)[0]


def held_replace(ctx: PlannerContext) -> SubTask | None:
    """Best RePlace for the object in hand that is not currently excluded."""
    if ctx.holding is None or ctx.holding_type is None:
        return None
    for rt, room_t in placement_options(ctx, ctx.holding_type):
        st = SubTask.replace(ctx.holding, rt, room_t)
        if str(st) not in ctx.excluded:
            return st
    return None


def target_receptacle(ctx: PlannerContext, subtask: SubTask):
    """Nearest known receptacle satisfying a RePlace sub-task, or None."""
    best, best_d = None, None
    for rid in sorted(ctx.graph.receptacles):
        rec = ctx.graph.receptacles[rid]
        if rec.receptacle_type != subtask.receptacle_type:
            continue
        if ctx.graph.room_type(rec.room_id) != subtask.room_type:
            continue
        d = ctx.distance_to(rec.cell)
        if best_d is None or d < best_d:
            best, best_d = rec, d
    return best


def open_misplaced(ctx: PlannerContext) -> list:
    """Known misplaced objects nobody is known to have re-placed, nearest first."""
    objs = [
        o for o in ctx.graph.misplaced_objects()
        if o.object_id not in ctx.replaced and o.object_id != ctx.holding
    ]
    return sorted(objs, key=lambda o: (ctx.distance_to(o.cell), o.object_id))


def incomplete_rooms(ctx: PlannerContext) -> list[str]:
    h = ctx.profile.height
    rooms = [
        r for r in ctx.perception.known_rooms()
        if ctx.explored_by_others.get(r, 0.0) < 1.0 and not ctx.perception.room_complete(r, h)
    ]
    return sorted(rooms, key=lambda r: (ctx.room_distance(r), r))


def subtask_cell(ctx: PlannerContext, st: SubTask):
    if st.kind == "RePlace":
        node = ctx.graph.objects.get(st.object_id)
        return node.cell if node else None
    return None


def subtask_distance(ctx: PlannerContext, st: SubTask) -> int:
    if st.kind == "RePlace":
        if st.object_id == ctx.holding:
            rec = target_receptacle(ctx, st)
            return ctx.distance_to(rec.cell) if rec else FAR // 2
        return ctx.distance_to(subtask_cell(ctx, st))
    if st.kind == "Explore":
        return ctx.room_distance(st.room_id)
    return FAR * 2


# ---------------------------------------------------------------- rule reasoner


class RuleReasoner:
    """Deterministic priority rules; stands in for an LLM in tests and benchmarks."""

    name = "rule"

    def propose(self, ctx: PlannerContext, n: int, prompt_style: str = "full") -> list[tuple[SubTask, str]]:
        out: list[tuple[SubTask, str]] = []
        seen = set(ctx.excluded)

        def add(st: SubTask, why: str) -> None:
            if str(st) not in seen:
                seen.add(str(st))
                out.append((st, why))

        held = held_replace(ctx)
        if held is not None:
            add(held, "finish re-placing the object in hand")
        if ctx.profile.alpha_manip and ctx.holding is None:
            for obj in open_misplaced(ctx):
                if can_lift(ctx, obj.mass):
                    rt, room_t = choose_placement(ctx, obj.object_type)
                    add(SubTask.replace(obj.object_id, rt, room_t),
                        f"{obj.object_id} is misplaced on {obj.location} and within my payload")
        for room in incomplete_rooms(ctx):
            add(SubTask.explore(room), f"{room} still has unexplored space")
        add(STOP, "nothing left that I can do")
        return out[:max(n, 0)]

    def rank(self, ctx: PlannerContext, candidates: list[SubTask]) -> list[tuple[SubTask, str]]:
        def fit(st: SubTask) -> int:
            if st.kind == "Stop":
                return 2
            if st.kind == "RePlace":
                return 0 if ctx.profile.alpha_manip else 1
            return 1 if ctx.profile.alpha_manip else 0

        order = sorted(
            range(len(candidates)),
            key=lambda i: (fit(candidates[i]), subtask_distance(ctx, candidates[i]), str(candidates[i])),
        )
        return [(candidates[i], f"capability fit {fit(candidates[i])}, "
                                f"distance {subtask_distance(ctx, candidates[i])}") for i in order]

    def judge(self, ctx: PlannerContext, candidate: SubTask, facts: list) -> Verdict:
        if candidate.kind == "RePlace":
            oid = candidate.object_id
            if not ctx.profile.alpha_manip:
                return Verdict(False, "no manipulation ability")
            if oid != ctx.holding:
                node = ctx.graph.objects.get(oid)
                if node is None or not can_lift(ctx, node.mass):
                    return Verdict(False, "object exceeds my payload or is unknown")
            if oid in ctx.replaced:
                return Verdict(False, f"{oid} already re-placed")
            for f in facts:
                if isinstance(f, ObjectSeen) and f.object_id == oid and not f.misplaced:
                    return Verdict(False, f"{oid} already re-placed")
                if (isinstance(f, ExecutingSubTask) and f.agent_id != ctx.agent_id
                        and oid != ctx.holding and f.subtask.startswith("RePlace(")
                        and f.subtask[8:].split(",")[0].strip() == oid):
                    return Verdict(False, f"{f.agent_id} is already re-placing {oid}")
            return REASONABLE
        if candidate.kind == "Explore":
            for f in facts:
                if isinstance(f, ExploredRoom) and f.room_id == candidate.room_id and f.complete:
                    return Verdict(False, f"{candidate.room_id} already fully explored")
            if ctx.explored_by_others.get(candidate.room_id, 0.0) >= 1.0:
                return Verdict(False, f"{candidate.room_id} already fully explored")
            return REASONABLE
        return REASONABLE

    def plan_subskill(self, ctx: PlannerContext, subtask: SubTask) -> tuple[SubSkill, str]:
        return rule_subskill(ctx, subtask)


def rule_subskill(ctx: PlannerContext, subtask: SubTask) -> tuple[SubSkill, str]:
    """Phase rules shared by every reasoner as the reference decomposition."""
    if subtask.kind == "Stop":
        return SubSkill("Stop"), "stop"
    if subtask.kind == "Explore":
        room = subtask.room_id
        if room not in ctx.perception.known_rooms():
            raise PlanningError(f"unknown room {room}")
        if ctx.in_room(room):
            return SubSkill("Explore"), f"inside {room}, explore it"
        return SubSkill("GoToRoom", room_id=room), f"head to {room} first"
    oid = subtask.object_id
    if ctx.holding == oid:
        rec = target_receptacle(ctx, subtask)
        if rec is None:
            return SubSkill("Explore"), f"no {subtask.receptacle_type} in a {subtask.room_type} known yet"
        if chebyshev(ctx.position, rec.cell) <= 1:
            return (SubSkill("PutObject", object_id=oid, receptacle_id=rec.receptacle_id, room_id=rec.room_id),
                    f"next to {rec.receptacle_id}")
        if not ctx.in_room(rec.room_id):
            return SubSkill("GoToRoom", room_id=rec.room_id), f"carry {oid} to {rec.room_id}"
        goal = approach_cell(ctx, rec.cell)
        dy = max(-MAX_POINT_OFFSET, min(MAX_POINT_OFFSET, goal[0] - ctx.position[0]))
        dx = max(-MAX_POINT_OFFSET, min(MAX_POINT_OFFSET, goal[1] - ctx.position[1]))
        return SubSkill("GoToPoint", dx=dx, dy=dy), f"approach {rec.receptacle_id}"
    if ctx.holding is not None:
        raise PlanningError(f"holding {ctx.holding}, cannot start on {oid}")
    node = ctx.graph.objects.get(oid)
    if node is None or node.cell is None:
        raise PlanningError(f"object {oid} location unknown")
    if chebyshev(ctx.position, node.cell) <= 1:
        return SubSkill("PickupObject", object_id=oid), f"{oid} within reach"
    return SubSkill("GoToObject", object_id=oid), f"walk to {oid}"


def approach_cell(ctx: PlannerContext, target):
    """Closest known-free cell within reach of ``target``."""
    dist = ctx.distances()
    best = None
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            cell = (target[0] + dr, target[1] + dc)
            if (dr or dc) and ctx.smap.in_bounds(cell) and ctx.smap.passable(cell):
                key = (dist.get(cell, FAR), cell)
                if best is None or key < best:
                    best = key
    return best[1] if best else target

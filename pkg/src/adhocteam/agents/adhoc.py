"""Ad hoc agent policies and the factories the episode runner builds controllers from."""

from __future__ import annotations

from ..engine import MANIP_ACTIONS, NAV_ACTIONS, Action, ActionOutcome, Observation
from ..planner.irot import ABLATIONS
from ..planner.reasoner import (
    Reasoner, can_lift, choose_placement, held_replace, incomplete_rooms, open_misplaced,
)
from ..planner.subtasks import STOP, SubTask
from .base import Controller, subtask_object, subtask_room
from .heuristic import HeuristicTeammate
from .llm_team import LLMTeammate, NegotiationBoard
from .planning import PlanningController

ADHOC_POLICIES = ("none", "random", "heuristic", "naive", "cot", "irot")
TEAM_POLICIES = ("heuristic", "llm")

# Stop is left out: a uniformly random Stop would end the agent within a few steps
RANDOM_NAV = tuple(a for a in NAV_ACTIONS if a != "Stop")


class RandomAdhoc(Controller):
    """Uniform over the legal action space; manipulation targets drawn from what is in view."""

    kind = "random"

    def choose(self, obs: Observation, outcome: ActionOutcome | None) -> Action:
        objs = sorted(o.object_id for o in obs.visible_objects)
        recs = sorted(r.receptacle_id for r in obs.visible_receptacles)
        names = list(RANDOM_NAV)
        if self.profile.alpha_manip:
            # actions that need a target are only legal with one in view
            names += [n for n in MANIP_ACTIONS if (n != "PickUp" or objs) and (n != "PutDown" or recs)]
        name = self.rng.choice(names)
        if name == "PickUp":
            return Action(name, self.rng.choice(objs))
        if name == "PutDown":
            return Action(name, self.rng.choice(recs))
        return Action(name)


class HeuristicAdhoc(PlanningController):
    """The heuristic team's rules applied to itself only, speaking the canonical protocol.

    Holding something: put it away. Otherwise take the nearest open misplaced
    object it can lift that no teammate announced, else sweep the nearest room
    nobody is exploring, else stop.
    """

    kind = "heuristic"

    def __init__(self, *args, **kw):
        kw.setdefault("mode", "heuristic")
        super().__init__(*args, **kw)

    def select_subtask(self, ctx) -> SubTask:
        held = held_replace(ctx)
        if held is not None:
            return held
        busy = ctx.executing_others().values()
        taken_objects = {subtask_object(lit) for lit in busy}
        taken_rooms = {subtask_room(lit) for lit in busy}
        if self.profile.alpha_manip:
            for o in open_misplaced(ctx):
                if o.object_id in taken_objects or not can_lift(ctx, o.mass):
                    continue
                rt, room_t = choose_placement(ctx, o.object_type)
                st = SubTask.replace(o.object_id, rt, room_t)
                if str(st) not in ctx.excluded:
                    return st
        rooms = [r for r in incomplete_rooms(ctx) if f"Explore({r})" not in ctx.excluded]
        free = [r for r in rooms if r not in taken_rooms]
        if free or rooms:
            return SubTask.explore((free or rooms)[0])
        return STOP


def make_adhoc(policy: str, profile, shape, channel, seed: int, *, rules=None,
               reasoner: Reasoner | None = None, ablation: str | None = None, n_irot: int | None = None):
    """Controller for the ad hoc agent; ``policy`` is one of ``ADHOC_POLICIES`` other than none."""
    common = dict(rules=rules)
    if policy == "random":
        return RandomAdhoc(profile, shape, channel, seed, **common)
    if policy == "heuristic":
        return HeuristicAdhoc(profile, shape, channel, seed, **common)
    if policy in ("naive", "cot", "irot"):
        flags = ABLATIONS[ablation] if (ablation and policy == "irot") else frozenset()
        kw = dict(reasoner=reasoner, mode=policy, flags=flags)
        if n_irot is not None:
            kw["n_irot"] = n_irot
        return PlanningController(profile, shape, channel, seed, **common, **kw)
    raise ValueError(f"unknown ad hoc policy {policy!r}")


def make_team(policy: str, profiles, shape, channel, seed: int, *, rules=None,
              reasoner: Reasoner | None = None, adaptive_note: bool = False):
    """Controllers for the teammates; the LLM team shares one negotiation board."""
    if policy == "heuristic":
        return [HeuristicTeammate(p, shape, channel, seed, rules=rules) for p in profiles]
    if policy == "llm":
        board = NegotiationBoard()
        return [LLMTeammate(p, shape, channel, seed, rules=rules, reasoner=reasoner, board=board,
                            adaptive_note=adaptive_note) for p in profiles]
    raise ValueError(f"unknown team policy {policy!r}")

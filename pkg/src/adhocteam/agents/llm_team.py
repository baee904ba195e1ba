"""Negotiation-based teammates: agents plan in id order and may object to earlier plans."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..engine import Observation
from ..planner.reasoner import ReasonerError, subtask_distance
from ..planner.subtasks import STOP, SubTask
from .planning import PlanningController

MAX_NEGOTIATION_ROUNDS = 2
PROPOSALS = 4


def _target(st: SubTask) -> str | None:
    if st.kind == "RePlace":
        return st.object_id
    if st.kind == "Explore":
        return st.room_id
    return None


@dataclass
class NegotiationBoard:
    """The team's negotiation dialog: announced plans and pending objections.

    ``plans`` maps an agent to (sub-task literal, target, distance at planning time).
    Objections are addressed to one agent and read at its next decision.
    """

    plans: dict = field(default_factory=dict)
    objections: dict = field(default_factory=dict)  # agent -> list of (literal, objector, reason)
    log: list = field(default_factory=list)

    def announce(self, agent_id: str, st: SubTask, dist: int, t: int) -> None:
        if st.kind == "Stop":
            self.plans.pop(agent_id, None)
        else:
            self.plans[agent_id] = (str(st), _target(st), dist)
        self.log.append((t, agent_id, "plan", str(st)))

    def withdraw(self, agent_id: str) -> None:
        self.plans.pop(agent_id, None)

    def conflicts(self, agent_id: str, st: SubTask) -> list[tuple[str, int]]:
        tgt = _target(st)
        if tgt is None:
            return []
        return sorted((aid, d) for aid, (lit, other, d) in self.plans.items()
                      if aid != agent_id and other == tgt and lit.split("(")[0] == st.kind)

    def object(self, to: str, literal: str, by: str, reason: str, t: int) -> None:
        self.objections.setdefault(to, []).append((literal, by, reason))
        self.log.append((t, by, "object", f"{to}:{literal}"))

    def take_objections(self, agent_id: str) -> list:
        return self.objections.pop(agent_id, [])


class LLMTeammate(PlanningController):
    """Proposes via its reasoner, then checks its pick against teammates' announced plans.

    A later agent whose pick clashes with an earlier plan objects when it is
    strictly closer (ties to the lower id); otherwise it agrees and takes its next
    proposal. An objected agent re-plans once without the contested sub-task. After
    ``MAX_NEGOTIATION_ROUNDS`` objections to the same decision the plan is accepted.
    """

    kind = "llm"

    def __init__(self, *args, board: NegotiationBoard | None = None, **kw):
        super().__init__(*args, **kw)
        self.board = board if board is not None else NegotiationBoard()
        self.rounds = 0
        self.contested: set[str] = set()
        self.objection_notes: list[str] = []

    def pre_plan(self, obs: Observation) -> str:
        objections = self.board.take_objections(self.agent_id)
        if not objections or self.subtask is None:
            return "none"
        mine = [o for o in objections if o[0] == str(self.subtask)]
        if not mine or self.rounds >= MAX_NEGOTIATION_ROUNDS or self.holding is not None:
            return "none"
        self.rounds += 1
        for literal, by, reason in mine:
            self.contested.add(literal)
            note = f"{by} objects to {literal}: {reason}"
            self.objection_notes.append(note)
            self.memory.append(f"[t={self.t}] {note}")
        return "subtask"

    def planning_context(self, obs: Observation, failure: str | None):
        ctx = super().planning_context(obs, failure)
        ctx.excluded = ctx.excluded | frozenset(self.contested)
        ctx.objections = tuple(self.objection_notes)
        return ctx

    def select_subtask(self, ctx) -> SubTask:
        try:
            proposed = [st for st, _ in self.reasoner.propose(ctx, PROPOSALS)]
            ranked = [st for st, _ in self.reasoner.rank(ctx, proposed)]
            if sorted(map(str, ranked)) != sorted(map(str, proposed)):
                raise ReasonerError("parse", "ranking is not a permutation of the proposals")
        except ReasonerError:
            self.fallbacks += 1
            proposed = [st for st, _ in self.fallback.propose(ctx, PROPOSALS)]
            ranked = [st for st, _ in self.fallback.rank(ctx, proposed)]
        choice = STOP
        for st in ranked:
            if str(st) in ctx.excluded:
                continue
            if st.kind == "Stop":
                choice = st
                break
            dist = subtask_distance(ctx, st)
            clashes = self.board.conflicts(self.agent_id, st)
            if not clashes:
                choice = st
                break
            if st.kind == "RePlace" and self.holding == st.object_id:
                choice = st  # it is already in hand, nobody else can take it
                break
            if all((dist, self.agent_id) < (d, aid) for aid, d in clashes):
                for aid, d in clashes:
                    self.board.object(aid, str(st), self.agent_id, f"I am closer ({dist} vs {d} steps)", self.t)
                choice = st
                break
            # agree with the earlier plan and move to the next proposal
        dist = subtask_distance(ctx, choice) if choice.kind != "Stop" else 0
        self.board.announce(self.agent_id, choice, dist, self.t)
        self.contested.clear()
        self.objection_notes.clear()
        return choice

    def _finish_subtask(self) -> None:
        self.board.withdraw(self.agent_id)
        self.rounds = 0
        super()._finish_subtask()

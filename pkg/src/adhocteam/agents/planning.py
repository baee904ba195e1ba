"""Controller that runs the sub-task planner, the sub-skill planner and the executor loop."""

from __future__ import annotations

from ..comms import SubSkillStatus, SubTaskStatus
from ..engine import Action, ActionOutcome, Observation
from ..planner.irot import DEFAULT_N_IROT, IRoTTrace, cot_plan, naive_plan, plan_subtask_irot
from ..planner.reasoner import (
    PlanningError, Reasoner, ReasonerError, RuleReasoner, choose_placement, target_receptacle,
)
from ..planner.subtasks import STOP, SubSkill, SubTask
from .base import Controller
from .executor import SkillFailed, assess

WAIT_STEPS = 5
BLOCK_STEPS = 20
MAX_PLANS_PER_STEP = 6


class PlanningController(Controller):
    """Sub-task planning (IRoT / CoT / naive), sub-skill planning, execution and assessment."""

    kind = "irot"

    def __init__(self, *args, reasoner: Reasoner | None = None, mode: str = "irot",
                 n_irot: int = DEFAULT_N_IROT, flags=frozenset(), adaptive_note: bool = False, **kw):
        super().__init__(*args, **kw)
        self.reasoner = reasoner or RuleReasoner()
        self.fallback = RuleReasoner()
        self.mode = mode
        self.n_irot = n_irot
        self.flags = frozenset(flags)
        self.adaptive_note = adaptive_note
        self.skill: SubSkill | None = None
        self._skill_open = False
        self.prev_failure: str | None = None
        self.last_action: Action | None = None
        self.wait_until = -1
        self.blocked: dict[str, int] = {}  # sub-task literal -> step until which it is not re-proposed
        self.traces: list[IRoTTrace] = []
        self.subtask_log: list[tuple[int, str, str]] = []  # (t, status, literal)
        self.subskill_log: list[tuple[int, str, str]] = []
        self.fallbacks = 0
        self.selected: list[tuple[int, str]] = []

    # -- hooks for subclasses

    def pre_plan(self, obs: Observation) -> str:
        """Extra re-plan pressure before the normal loop; returns a re-plan level."""
        return "none"

    # -- main loop

    def choose(self, obs: Observation, outcome: ActionOutcome | None) -> Action:
        dets = self.perception.update(obs)
        self.broadcast_detections(dets)
        a = assess(outcome, dets, previous_failure=self.prev_failure, holding_type=self.holding_type)
        self.prev_failure = outcome.failure_reason if outcome is not None and not outcome.success else None
        if a.replan_level == "stop":
            return Action("Stop")
        level = a.replan_level
        last = self.last_action
        if outcome is not None and last is not None and last.name == "PutDown":
            if outcome.success and self.subtask is not None and self.subtask.kind == "RePlace":
                self.replaced.add(self.subtask.object_id)
                self.perception.mark_replaced(self.subtask.object_id)
                self._finish_subtask()
                level = "subtask"
        if outcome is not None and last is not None and last.name == "Drop" and outcome.success:
            level = "subtask"
        level = _max(level, self.pre_plan(obs))
        if level != "subtask" and self._better_placement_known(obs):
            level = "subtask"
        if level != "none" and a.reason:
            self.memory.append(f"[t={self.t}] self: {a.reason}")
        action = self._advance(obs, level, a.reason or None)
        self.last_action = action
        return action

    def _advance(self, obs: Observation, level: str, failure: str | None) -> Action:
        if self.t < self.wait_until and level == "none":
            return self._idle(obs)
        for _ in range(MAX_PLANS_PER_STEP):
            if self.subtask is None or level == "subtask":
                self._plan_subtask(obs, failure)
                level = "subskill"
                if self.subtask.kind == "Stop":
                    if self._has_work(obs):
                        # the planner gave up although work remains: idle briefly, then re-plan
                        self.wait_until = self.t + WAIT_STEPS
                        self.subtask = None
                        return self._idle(obs)
            if self.skill is None or level == "subskill":
                try:
                    skill, _ = self._plan_subskill(obs)
                except PlanningError as exc:
                    self._block(self.subtask)
                    failure = str(exc)
                    level = "subtask"
                    continue
                self._start_skill(skill)
                level = "none"
            try:
                action = self.executor.act(obs)
            except SkillFailed as exc:
                self._block(self.subtask)
                failure = str(exc)
                level = "subtask"
                continue
            if action is not None:
                return action
            self._skill_done()
            if self.skill.kind == "Explore":
                if self.subtask.kind == "Explore":
                    self._finish_subtask()
                elif target_receptacle(self.context(obs), self.subtask) is not None:
                    # the search turned up the receptacle after all: go there
                    level = "subskill"
                    continue
                else:
                    # searched everything reachable without finding a target receptacle
                    self._block(self.subtask)
                level = "subtask"
            else:
                level = "subskill"
        return Action("RotateRight")

    def _idle(self, obs: Observation) -> Action:
        return self.executor.park(obs) or Action("RotateRight")

    def _better_placement_known(self, obs: Observation) -> bool:
        """Carrying toward a receptacle not yet seen while a suitable one is already known."""
        st = self.subtask
        if self.holding is None or self.holding_type is None or st is None or st.kind != "RePlace":
            return False
        if self.skill is None or self.skill.kind != "Explore":
            return False
        ctx = self.context(obs)
        if target_receptacle(ctx, st) is not None:
            return False
        rt, room_t = choose_placement(ctx, self.holding_type)
        return target_receptacle(ctx, SubTask.replace(self.holding, rt, room_t)) is not None

    def _has_work(self, obs: Observation) -> bool:
        ctx = self.context(obs)
        return any(st.kind != "Stop" for st, _ in RuleReasoner().propose(ctx, 64))

    def _block(self, subtask: SubTask | None) -> None:
        if subtask is not None and subtask.kind != "Stop":
            self.blocked[str(subtask)] = self.t + BLOCK_STEPS

    def excluded(self) -> frozenset:
        return frozenset(k for k, until in self.blocked.items() if until > self.t)

    def _feedback(self, subtask: SubTask) -> list:
        facts = []
        for msg in self.channel.request_intention_feedback(self.agent_id, str(subtask), self.t):
            facts.extend(msg.payload.facts)
        return facts

    def planning_context(self, obs: Observation, failure: str | None):
        return self.context(obs, last_failure=failure, excluded=self.excluded(),
                            request_feedback=self._feedback, adaptive_note=self.adaptive_note)

    def select_subtask(self, ctx) -> SubTask:
        if self.mode == "naive":
            st, trace = naive_plan(ctx, self.reasoner, self.fallback)
        elif self.mode == "cot":
            st, trace = cot_plan(ctx, self.reasoner, self.fallback)
        else:
            st, trace = plan_subtask_irot(ctx, self.reasoner, self.n_irot, self.flags, fallback=self.fallback)
        self.traces.append(trace)
        self.fallbacks += len(trace.fallbacks)
        return st

    def _plan_subtask(self, obs: Observation, failure: str | None) -> None:
        ctx = self.planning_context(obs, failure)
        st = self.select_subtask(ctx)
        if st.kind == "RePlace" and not self.profile.alpha_manip:
            self.guard_hits += 1
            st = STOP  # capability guard: never pursue a manipulation sub-task without the ability
        old = self.subtask
        self.selected.append((self.t, str(st)))
        if old is not None and str(old) != str(st):
            self._status(old, "switched")
        if old is None or str(old) != str(st):
            self._status(st, "started")
        self._close_skill("switched")
        self.subtask = st
        self.skill = None

    def _finish_subtask(self) -> None:
        self._close_skill("finished")
        if self.subtask is not None:
            self._status(self.subtask, "finished")
        self.subtask = None
        self.skill = None

    def _status(self, st: SubTask, status: str) -> None:
        self.subtask_log.append((self.t, status, str(st)))
        if st.kind != "Stop":
            self.send(SubTaskStatus(str(st), status))

    def _plan_subskill(self, obs: Observation):
        ctx = self.context(obs)
        try:
            skill, why = self.reasoner.plan_subskill(ctx, self.subtask)
        except ReasonerError:
            self.fallbacks += 1
            skill, why = self.fallback.plan_subskill(ctx, self.subtask)
        if skill.kind in ("PickupObject", "PutObject") and not self.profile.alpha_manip:
            raise PlanningError("manipulation sub-skill without the ability")
        return skill, why

    def _close_skill(self, status: str) -> None:
        if self.skill is not None and self._skill_open:
            self.subskill_log.append((self.t, status, str(self.skill)))
            self.send(SubSkillStatus(str(self.skill), status))
        self._skill_open = False

    def _start_skill(self, skill: SubSkill) -> None:
        self._close_skill("switched")
        self.skill = skill
        self._skill_open = True
        self.executor.start(skill, self.subtask)
        self.subskill_log.append((self.t, "started", str(skill)))
        self.send(SubSkillStatus(str(skill), "started"))

    def _skill_done(self) -> None:
        self._close_skill("finished")


_ORDER = ("none", "subskill", "subtask", "stop")


def _max(a: str, b: str) -> str:
    return a if _ORDER.index(a) >= _ORDER.index(b) else b

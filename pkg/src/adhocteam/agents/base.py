"""Shared controller plumbing: inbox handling, teammate registry, status broadcasts."""

from __future__ import annotations

import random

from ..comms import (
    CapabilityAnnounce, CapabilityReflect, Channel, CommsError, DialectError, ExecutingSubTask,
    ExploredRoom, Intention, KeyDetection, Message, ObjectSeen, Raw, SubSkillStatus, SubTaskStatus,
    adapt, encode_ht1,
)
from ..engine import DIRECTIONS, MOVE_OFFSET, Action, ActionOutcome, Observation
from ..perception import Perception
from ..planner.context import PlannerContext, TeammateInfo
from ..planner.subtasks import PlanSyntaxError, SubTask
from ..world import DOOR, AgentProfile, PlacementRules, default_rules
from .executor import Executor


def agent_rng(seed: int, agent_id: str) -> random.Random:
    """Independent stream per agent so adding an agent never shifts anyone else's draws."""
    return random.Random(f"agent:{seed}:{agent_id}")


LOW_BATTERY = 3  # actions left at which an agent stops wandering through doors


def subtask_object(literal: str | None) -> str | None:
    if literal and literal.startswith("RePlace("):
        return literal[8:].split(",")[0].strip()
    return None


def subtask_room(literal: str | None) -> str | None:
    if literal and literal.startswith("Explore("):
        return literal[8:].rstrip(")").strip()
    return None


class Controller:
    """Base policy; subclasses implement ``choose``.

    A controller sees only its own observations and its inbox. ``dialect`` picks
    the wire format of what it broadcasts: "canonical" or the heuristic team's "HT1".
    """

    dialect = "canonical"
    kind = "base"

    def __init__(self, profile: AgentProfile, shape: tuple[int, int], channel: Channel, seed: int,
                 rules: PlacementRules | None = None):
        self.profile = profile
        self.agent_id = profile.agent_id
        self.rules = rules or default_rules()
        self.channel = channel
        self.rng = agent_rng(seed, self.agent_id)
        self.perception = Perception(self.agent_id, shape, self.rules)
        self.executor = Executor(profile, self.perception, self.rng)
        self.teammates: dict[str, TeammateInfo] = {}
        self.replaced: set[str] = set()
        self.explored_by_others: dict[str, float] = {}
        self.memory: list[str] = []
        self.active = True
        self.t = 0
        self.obs: Observation | None = None
        self.holding: str | None = None
        self.holding_type: str | None = None
        self.subtask: SubTask | None = None
        self.emitted: list[tuple[int, str]] = []  # (t, action) for audits
        self.guard_hits = 0  # times a capability guard had to overrule the policy

    # -- lifecycle

    def register(self) -> None:
        self.channel.register(self.agent_id, responder=self.respond, reflector=self.reflect)

    def on_join(self, t: int) -> None:
        """Called once when the agent enters the episode."""

    def decide(self, obs: Observation, outcome: ActionOutcome | None, t: int) -> Action:
        self.t = t
        self.obs = obs
        self._track_holding(obs)
        inbox = self.channel.collect(self.agent_id, t)
        self.receive(inbox)
        action = self.choose(obs, outcome)
        if action.is_manipulation and not self.profile.alpha_manip:
            self.guard_hits += 1
            action = Action("RotateRight")  # never emit manipulation without the ability
        if self.profile.battery - len(self.emitted) <= LOW_BATTERY:
            action = self._mind_the_doors(obs, action)
        self.emitted.append((t, str(action)))
        return action

    def choose(self, obs: Observation, outcome: ActionOutcome | None) -> Action:
        raise NotImplementedError

    def _mind_the_doors(self, obs: Observation, action: Action) -> Action:
        """Keep a nearly drained agent from dying in a doorway, where it would seal a room."""
        kind = self.perception.map.kind
        r, c = obs.position
        if kind[r][c] == DOOR:
            return self.executor.park(obs) or action
        if action.name in MOVE_OFFSET:
            dr, dc = DIRECTIONS[(obs.facing + MOVE_OFFSET[action.name]) % 4]
            if kind[r + dr][c + dc] == DOOR:
                return Action("RotateRight")
        return action

    def _track_holding(self, obs: Observation) -> None:
        if obs.holding != self.holding:
            if obs.holding is not None:
                node = self.perception.graph.objects.get(obs.holding)
                self.holding_type = node.object_type if node else self.holding_type
            else:
                self.holding_type = None
            self.holding = obs.holding

    # -- messaging

    def send(self, payload) -> bool:
        """Broadcast in this agent's dialect; False when the dialect has no form for it."""
        msg = Message(self.agent_id, self.t, payload)
        if self.dialect == "HT1":
            try:
                msg = Message(self.agent_id, self.t, Raw(encode_ht1(msg)))
            except CommsError:
                return False
        self.channel.broadcast(msg)
        return True

    def receive(self, inbox: list[Message]) -> None:
        for msg in inbox:
            try:
                canon = adapt(msg)
            except DialectError as exc:
                self.channel.diagnostics.append(f"t={self.t} {self.agent_id}: {exc}")
                continue
            if canon is not None:
                self.handle(canon)

    def handle(self, msg: Message) -> None:
        p = msg.payload
        info = self.teammates.setdefault(msg.sender, TeammateInfo(msg.sender))
        self.memory.append(f"[t={msg.t_sent}] {msg.sender}: {describe(p)}")
        if isinstance(p, (CapabilityAnnounce, CapabilityReflect)):
            info.profile = p.profile
            if isinstance(p, CapabilityReflect) and p.subtask:
                info.subtask, info.status = p.subtask, p.status
        elif isinstance(p, KeyDetection):
            self.perception.ingest(p, msg.t_sent)
        elif isinstance(p, SubTaskStatus):
            info.subtask, info.status = p.subtask, p.status
            if p.status == "finished":
                oid = subtask_object(p.subtask)
                if oid:
                    self.replaced.add(oid)
                    self.perception.mark_replaced(oid)
                room = subtask_room(p.subtask)
                if room:
                    self.explored_by_others[room] = 1.0
        elif isinstance(p, SubSkillStatus):
            info.subskill = p.subskill

    def broadcast_detections(self, detections: list[KeyDetection]) -> None:
        for det in detections:
            self.send(det)

    # -- handshake and intention feedback

    def reflect(self):
        if not self.active:
            return None
        if self.subtask is None:
            return self.profile, None, None
        return self.profile, str(self.subtask), "started"

    def respond(self, literal: str):
        """Facts this agent knows about a teammate's intended sub-task."""
        if not self.active:
            return None
        try:
            st = SubTask.parse(literal)
        except PlanSyntaxError:
            return []
        facts = []
        p = self.perception
        if st.kind == "Explore":
            if st.room_id in p.map.room_cells:
                facts.append(ExploredRoom(st.room_id, round(p.room_completeness(st.room_id, self.profile.height), 3)))
            for oid in sorted(p.graph.objects):
                o = p.graph.objects[oid]
                if o.room_id == st.room_id and not o.reported:
                    facts.append(ObjectSeen(oid, o.location, o.misplaced_belief))
        elif st.kind == "RePlace":
            oid = st.object_id
            if oid in self.replaced or oid in p.graph.replaced:
                facts.append(ObjectSeen(oid, "re-placed", False))
            elif oid in p.graph.objects:
                o = p.graph.objects[oid]
                facts.append(ObjectSeen(oid, o.location, o.misplaced_belief))
            mine = self.current_target()
            if mine == oid:
                facts.append(ExecutingSubTask(self.agent_id, self.current_literal()))
        return facts

    def current_target(self) -> str | None:
        return self.subtask.object_id if self.subtask is not None and self.subtask.kind == "RePlace" else None

    def current_literal(self) -> str:
        return str(self.subtask) if self.subtask is not None else "none"

    # -- planning context

    def context(self, obs: Observation, **kw) -> PlannerContext:
        return PlannerContext(
            agent_id=self.agent_id, profile=self.profile, t=self.t, position=obs.position,
            holding=obs.holding, holding_type=self.holding_type, perception=self.perception,
            memory=list(self.memory), teammates=dict(self.teammates),
            current_subtask=self.subtask, replaced=frozenset(self.replaced),
            explored_by_others=dict(self.explored_by_others), **kw)


def describe(payload) -> str:
    if isinstance(payload, (CapabilityAnnounce, CapabilityReflect)):
        p = payload.profile
        head = "joined with" if isinstance(payload, CapabilityAnnounce) else "reports"
        extra = f", doing {payload.subtask}" if isinstance(payload, CapabilityReflect) and payload.subtask else ""
        return (f"{head} manipulation={'yes' if p.alpha_manip else 'no'}, camera={'tall' if p.height else 'short'}, "
                f"payload={p.payload:g} kg{extra}")
    if isinstance(payload, KeyDetection):
        if payload.entity == "receptacle":
            return f"found {payload.object_id} in {payload.room_id} suiting {', '.join(sorted(payload.candidate_for))}"
        state = "misplaced" if payload.misplaced else "fine"
        return f"saw {payload.object_id} on {payload.location} ({state})"
    if isinstance(payload, SubTaskStatus):
        return f"{payload.status} {payload.subtask}"
    if isinstance(payload, SubSkillStatus):
        return f"{payload.status} {payload.subskill}"
    if isinstance(payload, Intention):
        return f"intends {payload.subtask}"
    return type(payload).__name__

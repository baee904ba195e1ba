"""Heuristic teammates: frontier exploration plus a closest-manipulator auction per detection.

Every free manipulator bids its known-map path distance for each open misplaced
object it can lift. Bids sent at step t are read by everyone at t + 1 and all
agents resolve them the same way: objects by (first detection step, id), the
lowest (distance, agent id) bidder wins, one object per agent per round.
Objects nobody bid on stay open until a manipulator frees up.
"""

from __future__ import annotations

from ..comms import Message, Raw, SubTaskStatus
from ..engine import Action, ActionOutcome, Observation
from ..planner.context import FAR
from ..planner.reasoner import choose_placement, held_replace, incomplete_rooms
from ..planner.subtasks import STOP, SubTask
from .base import subtask_object
from .planning import PlanningController

SILENCE_STEPS = 30


def encode_bid(sender: str, t: int, object_id: str, distance: int, detected: int) -> str:
    return f"HT1 BID {sender} {t} {object_id} {distance} {detected}"


def decode_bid(text: str):
    parts = text.split()
    if len(parts) != 7 or parts[:2] != ["HT1", "BID"]:
        return None
    try:
        return parts[2], int(parts[3]), parts[4], int(parts[5]), int(parts[6])
    except ValueError:
        return None


class HeuristicTeammate(PlanningController):
    kind = "heuristic"
    dialect = "HT1"

    def __init__(self, *args, **kw):
        kw.setdefault("mode", "heuristic")
        super().__init__(*args, **kw)
        self.assigned: dict[str, str] = {}  # object_id -> agent_id
        self.detected_at: dict[str, int] = {}
        self.assignment: str | None = None
        self._bids: list[tuple] = []
        self._own_bids: list[tuple] = []
        self.last_heard: dict[str, int] = {}
        self.last_sent = 0

    # -- messages

    def send(self, payload) -> bool:
        sent = super().send(payload)
        if sent:
            self.last_sent = self.t
        return sent

    def receive(self, inbox: list[Message]) -> None:
        rest = []
        for msg in inbox:
            if isinstance(msg.payload, Raw):
                bid = decode_bid(msg.payload.text)
                if bid is not None:
                    if bid[0] == msg.sender:
                        self._bids.append(bid)
                        self.last_heard[msg.sender] = msg.t_sent
                    continue
            rest.append(msg)
        super().receive(rest)

    def handle(self, msg: Message) -> None:
        super().handle(msg)
        self.last_heard[msg.sender] = msg.t_sent
        p = msg.payload
        if type(p).__name__ == "KeyDetection" and p.entity == "object" and p.misplaced:
            self.detected_at[p.object_id] = min(self.detected_at.get(p.object_id, msg.t_sent), msg.t_sent)
        if isinstance(p, SubTaskStatus):
            oid = subtask_object(p.subtask)
            if oid is None:
                return
            if p.status == "started":
                self.assigned[oid] = msg.sender
                if oid == self.assignment and msg.sender < self.agent_id and self.holding != oid:
                    self.assignment = None  # someone with priority is already on it
            elif self.assigned.get(oid) == msg.sender:
                del self.assigned[oid]

    # -- auction

    def _open_objects(self) -> list:
        out = []
        for o in self.perception.graph.misplaced_objects():
            if o.object_id in self.replaced or o.object_id in self.assigned:
                continue
            if o.object_id == self.holding:
                continue
            out.append(o)
        return out

    def _resolve(self) -> None:
        bids = sorted(self._bids + [b for b in self._own_bids if b[1] < self.t])
        self._own_bids = [b for b in self._own_bids if b[1] >= self.t]
        self._bids = []
        if not bids:
            return
        first = {}
        for sender, _, oid, dist, det in bids:
            first[oid] = min(first.get(oid, det), det)
        winners: set[str] = set()
        for oid in sorted(first, key=lambda o: (first[o], o)):
            if oid in self.assigned or oid in self.replaced:
                continue
            cands = sorted((dist, sender) for sender, _, o, dist, _ in bids if o == oid and sender not in winners)
            if not cands:
                continue
            winner = cands[0][1]
            winners.add(winner)
            self.assigned[oid] = winner
            if winner == self.agent_id:
                self.assignment = oid

    def _bid(self, obs: Observation) -> None:
        if not self.profile.alpha_manip or self.assignment is not None or self.holding is not None:
            return
        ctx = None
        for o in self._open_objects():
            if o.mass is None or o.mass > self.profile.payload:
                continue
            ctx = ctx or self.context(obs)
            dist = ctx.distance_to(o.cell)
            if dist >= FAR:
                dist = FAR + abs(o.cell[0] - obs.position[0]) + abs(o.cell[1] - obs.position[1]) \
                    if o.cell else FAR * 2
            det = self.detected_at.setdefault(o.object_id, self.t)
            self.channel.broadcast(Message(self.agent_id, self.t, Raw(encode_bid(
                self.agent_id, self.t, o.object_id, dist, det))))
            self._own_bids.append((self.agent_id, self.t, o.object_id, dist, det))
            self.last_sent = self.t

    def _keep_alive(self) -> None:
        """Repeat a held claim now and then, so a long carry is not mistaken for a dead teammate."""
        st = self.subtask
        if st is not None and st.kind == "RePlace" and self.t - self.last_sent >= SILENCE_STEPS // 2:
            self.send(SubTaskStatus(str(st), "started"))

    # -- planning

    def broadcast_detections(self, detections) -> None:
        for det in detections:
            if det.entity == "object" and det.misplaced:
                self.detected_at.setdefault(det.object_id, self.t)
        super().broadcast_detections(detections)

    def pre_plan(self, obs: Observation) -> str:
        before = self.assignment
        for oid, aid in list(self.assigned.items()):
            if aid != self.agent_id and self.t - self.last_heard.get(aid, self.t) > SILENCE_STEPS:
                del self.assigned[oid]  # nothing from the assignee for a long time: it has stopped
        self._resolve()
        if self.assignment in self.replaced:
            self._release()
        return "subtask" if self.assignment != before else "none"

    def choose(self, obs: Observation, outcome: ActionOutcome | None) -> Action:
        action = super().choose(obs, outcome)
        self._bid(obs)
        if action.name != "Stop":
            self._keep_alive()
        return action

    def select_subtask(self, ctx) -> SubTask:
        if self.holding is not None:
            self.assignment = self.holding
            held = held_replace(ctx)
            if held is not None:
                return held
        if self.assignment is not None:
            st = self._replace_for(ctx, self.assignment)
            if st is not None and str(st) not in ctx.excluded:
                return st
            self._release()
        rooms = [r for r in incomplete_rooms(ctx) if f"Explore({r})" not in ctx.excluded]
        claimed = {r for aid, info in ctx.teammates.items()
                   if info.subtask and info.subtask.startswith("Explore(") and info.status == "started"
                   for r in [info.subtask[8:-1]]}
        free = [r for r in rooms if r not in claimed]
        if free or rooms:
            return SubTask.explore((free or rooms)[0])
        return STOP

    def _replace_for(self, ctx, oid: str) -> SubTask | None:
        node = ctx.graph.objects.get(oid)
        if node is None:
            return None
        rt, room_t = choose_placement(ctx, node.object_type)
        return SubTask.replace(oid, rt, room_t)

    def _release(self) -> None:
        """Give the current assignment back to the pool."""
        oid = self.assignment
        if oid is not None and self.assigned.get(oid) == self.agent_id:
            del self.assigned[oid]
        self.assignment = None

    def _finish_subtask(self) -> None:
        if self.subtask is not None and self.subtask.kind == "RePlace":
            if self.assignment == self.subtask.object_id:
                self._release()
        super()._finish_subtask()

    def _block(self, subtask) -> None:
        if subtask is not None and subtask.kind == "RePlace" and subtask.object_id == self.assignment \
                and self.holding is None:
            self._release()
        super()._block(subtask)

    def _has_work(self, obs: Observation) -> bool:
        # a manipulator waits while anything it could carry is still out, even if assigned:
        # the assignee may run out of battery
        if self.profile.alpha_manip and any(
                o.mass is not None and o.mass <= self.profile.payload and o.object_id not in self.replaced
                for o in self.perception.graph.misplaced_objects()):
            return True
        ctx = self.context(obs)
        return bool(incomplete_rooms(ctx))

"""Broadcast channel, canonical message kinds and the team-dialect adapter.

Messages broadcast at step ``t`` become readable by every other agent from
step ``t + 1``. Intention feedback is the one synchronous exchange: it is
answered inside a planning call through responder callbacks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Union

from .world import AgentProfile

SUBTASK_STATUSES = ("started", "finished", "switched")


class CommsError(ValueError):
    pass


class DialectError(CommsError):
    pass


# ---------------------------------------------------------------- payloads


@dataclass(frozen=True)
class CapabilityAnnounce:
    profile: AgentProfile


@dataclass(frozen=True)
class CapabilityReflect:
    profile: AgentProfile
    subtask: str | None = None
    status: str | None = None


@dataclass(frozen=True)
class KeyDetection:
    """A newly flagged misplaced object, or a receptacle newly found to suit some object types."""

    object_id: str
    object_type: str
    location: str
    misplaced: bool
    candidate_for: frozenset = frozenset()
    entity: str = "object"
    mass: float | None = None
    cell: tuple | None = None
    room_id: str | None = None
    room_type: str | None = None


@dataclass(frozen=True)
class SubTaskStatus:
    subtask: str
    status: str

    def __post_init__(self) -> None:
        if self.status not in SUBTASK_STATUSES:
            raise CommsError(f"bad subtask status {self.status!r}")


@dataclass(frozen=True)
class SubSkillStatus:
    subskill: str
    status: str


@dataclass(frozen=True)
class Intention:
    subtask: str


@dataclass(frozen=True)
class ExploredRoom:
    room_id: str
    completeness: float

    @property
    def complete(self) -> bool:
        return self.completeness >= 1.0


@dataclass(frozen=True)
class ObjectSeen:
    object_id: str
    location: str
    misplaced: bool


@dataclass(frozen=True)
class ExecutingSubTask:
    agent_id: str
    subtask: str


Fact = Union[ExploredRoom, ObjectSeen, ExecutingSubTask]


@dataclass(frozen=True)
class IntentionFeedback:
    facts: tuple = ()


@dataclass(frozen=True)
class Raw:
    """A message still in some team's wire dialect."""

    text: str


PAYLOAD_TYPES = {
    cls.__name__: cls
    for cls in (CapabilityAnnounce, CapabilityReflect, KeyDetection, SubTaskStatus,
                SubSkillStatus, Intention, IntentionFeedback, Raw)
}
FACT_TYPES = {cls.__name__: cls for cls in (ExploredRoom, ObjectSeen, ExecutingSubTask)}


@dataclass(frozen=True)
class Message:
    sender: str
    t_sent: int
    payload: object

    @property
    def kind(self) -> str:
        return type(self.payload).__name__

    @property
    def canonical(self) -> bool:
        return not isinstance(self.payload, Raw)

    def to_dict(self) -> dict:
        return {"sender": self.sender, "t": self.t_sent, "kind": self.kind,
                "payload": _payload_dict(self.payload)}

    @staticmethod
    def from_dict(d: dict) -> "Message":
        cls = PAYLOAD_TYPES.get(d.get("kind"))
        if cls is None:
            raise CommsError(f"unknown message kind {d.get('kind')!r}")
        return Message(d["sender"], int(d["t"]), _payload_from(cls, d["payload"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _payload_dict(p) -> dict:
    out = {}
    for name in p.__dataclass_fields__:
        v = getattr(p, name)
        if isinstance(v, AgentProfile):
            v = v.to_dict()
        elif isinstance(v, frozenset):
            v = sorted(v)
        elif isinstance(v, tuple) and name == "facts":
            v = [{"kind": type(f).__name__, **_payload_dict(f)} for f in v]
        elif isinstance(v, tuple):
            v = list(v)
        out[name] = v
    return out


def _payload_from(cls, d: dict):
    kw = dict(d)
    if "profile" in kw:
        kw["profile"] = AgentProfile.from_dict(kw["profile"])
    if cls is KeyDetection:
        kw["candidate_for"] = frozenset(kw.get("candidate_for", ()))
        if kw.get("cell") is not None:
            kw["cell"] = tuple(kw["cell"])
    if cls is IntentionFeedback:
        facts = []
        for f in kw.get("facts", ()):
            f = dict(f)
            fcls = FACT_TYPES[f.pop("kind")]
            facts.append(fcls(**f))
        kw["facts"] = tuple(facts)
    return cls(**kw)


# ---------------------------------------------------------------- dialects

HT1 = "HT1"


def _fmt_mass(m: float | None) -> str:
    return "-" if m is None else f"{m:g}"


def encode_ht1(msg: Message) -> str:
    """Render a canonical message in the heuristic team's line format."""
    p = msg.payload
    if isinstance(p, SubTaskStatus):
        return f"HT1 STATUS {msg.sender} {msg.t_sent} {p.status} {p.subtask.replace(' ', '')}"
    if isinstance(p, KeyDetection):
        cell = "-" if p.cell is None else f"{p.cell[0]},{p.cell[1]}"
        cand = ",".join(sorted(p.candidate_for)) or "-"
        return (f"HT1 DETECT {msg.sender} {msg.t_sent} {p.entity} {p.object_id} {p.object_type} "
                f"{p.location} {int(p.misplaced)} mass={_fmt_mass(p.mass)} cell={cell} "
                f"room={p.room_id or '-'} rtype={p.room_type or '-'} cand={cand}")
    if isinstance(p, (CapabilityAnnounce, CapabilityReflect)):
        pr = p.profile
        reply = int(isinstance(p, CapabilityReflect))
        extra = ""
        if reply and p.subtask:
            extra = f" task={p.subtask.replace(' ', '')} status={p.status}"
        return (f"HT1 HELLO {msg.sender} {msg.t_sent} nav={int(pr.alpha_nav)} manip={int(pr.alpha_manip)} "
                f"h={pr.height} m={pr.payload:g} step={pr.battery} "
                f"pos={pr.start_position[0]},{pr.start_position[1]} reply={reply}{extra}")
    raise CommsError(f"{msg.kind} has no HT1 encoding")


def _kv(tokens: list[str]) -> dict[str, str]:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise DialectError(f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def _opt(v: str) -> str | None:
    return None if v == "-" else v


def _decode_ht1(text: str) -> Message | None:
    parts = text.split()
    if len(parts) < 4:
        raise DialectError(f"truncated HT1 line {text!r}")
    _, verb, sender, t = parts[:4]
    try:
        t = int(t)
    except ValueError as exc:
        raise DialectError(f"bad step in {text!r}") from exc
    rest = parts[4:]
    try:
        if verb == "STATUS":
            status, subtask = rest
            return Message(sender, t, SubTaskStatus(subtask, status))
        if verb == "DETECT":
            entity, oid, otype, loc, mis = rest[:5]
            kv = _kv(rest[5:])
            cell = _opt(kv.get("cell", "-"))
            cand = _opt(kv.get("cand", "-"))
            mass = _opt(kv.get("mass", "-"))
            return Message(sender, t, KeyDetection(
                object_id=oid, object_type=otype, location=loc, misplaced=mis == "1",
                candidate_for=frozenset(cand.split(",")) if cand else frozenset(),
                entity=entity,
                mass=float(mass) if mass else None,
                cell=tuple(int(x) for x in cell.split(",")) if cell else None,
                room_id=_opt(kv.get("room", "-")),
                room_type=_opt(kv.get("rtype", "-")),
            ))
        if verb == "HELLO":
            kv = _kv(rest)
            r, c = kv["pos"].split(",")
            profile = AgentProfile(
                agent_id=sender, alpha_nav=kv["nav"] == "1", alpha_manip=kv["manip"] == "1",
                height=int(kv["h"]), payload=float(kv["m"]), battery=int(kv["step"]),
                start_position=(int(r), int(c)), join_time=None,
            )
            if kv.get("reply") == "1":
                return Message(sender, t, CapabilityReflect(profile, kv.get("task"), kv.get("status")))
            return Message(sender, t, CapabilityAnnounce(profile))
        if verb == "BID":
            return None  # team-internal auction traffic, nothing canonical to extract
    except (ValueError, KeyError, CommsError) as exc:
        raise DialectError(f"corrupt HT1 {verb} line {text!r}: {exc}") from exc
    return None  # unknown verbs carry no canonical content


DIALECTS: dict[str, Callable[[str], Message | None]] = {HT1: _decode_ht1}


def adapt(message: Message) -> Message | None:
    """Map a dialect message to its canonical form; canonical input is returned unchanged.

    Returns None for dialect kinds with no canonical meaning. Raises
    DialectError for unregistered dialects or corrupt payloads.
    """
    if message.canonical:
        return message
    text = message.payload.text.strip()
    tag = text.split(" ", 1)[0] if text else ""
    decoder = DIALECTS.get(tag)
    if decoder is None:
        raise DialectError(f"unregistered dialect {tag!r}")
    out = decoder(text)
    if out is not None and out.sender != message.sender:
        raise DialectError(f"sender mismatch in {text!r}")
    return out


# ---------------------------------------------------------------- channel

Responder = Callable[[str], "list | None"]
Reflector = Callable[[], "tuple[AgentProfile, str | None, str | None] | None"]


@dataclass
class Channel:
    """Shared broadcast mailbox holding only in-flight messages."""

    registered: dict[str, int] = field(default_factory=dict)
    log: list[Message] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    _inbox: dict[str, list] = field(default_factory=dict)
    _responders: dict[str, Responder] = field(default_factory=dict)
    _reflectors: dict[str, Reflector] = field(default_factory=dict)
    _seq: int = 0

    def register(self, agent_id: str, responder: Responder | None = None,
                 reflector: Reflector | None = None) -> None:
        self.registered.setdefault(agent_id, len(self.registered))
        self._inbox.setdefault(agent_id, [])
        if responder is not None:
            self._responders[agent_id] = responder
        if reflector is not None:
            self._reflectors[agent_id] = reflector

    def broadcast(self, message: Message) -> None:
        if message.sender not in self.registered:
            raise CommsError(f"unregistered sender {message.sender!r}")
        self._seq += 1
        key = (message.t_sent + 1, message.sender, self._seq)
        for aid, box in self._inbox.items():
            if aid != message.sender:
                box.append((key, message))
        self.log.append(message)

    def collect(self, agent_id: str, t: int) -> list[Message]:
        if agent_id not in self._inbox:
            raise CommsError(f"unregistered agent {agent_id!r}")
        box = self._inbox[agent_id]
        ready = [item for item in box if item[0][0] <= t]
        if not ready:
            return []
        self._inbox[agent_id] = [item for item in box if item[0][0] > t]
        ready.sort(key=lambda item: item[0])
        return [m for _, m in ready]

    def collect_canonical(self, agent_id: str, t: int) -> list[Message]:
        """Collect and adapt; undecodable messages are skipped and noted in diagnostics."""
        out = []
        for msg in self.collect(agent_id, t):
            try:
                m = adapt(msg)
            except DialectError as exc:
                self.diagnostics.append(f"t={t} {agent_id}: {exc}")
                continue
            if m is not None:
                out.append(m)
        return out

    def pending(self) -> int:
        return sum(len(b) for b in self._inbox.values())

    def handshake_on_join(self, adhoc: AgentProfile, t: int,
                          teammates: list[str] | None = None) -> list[Message]:
        """Queue the joiner's CapabilityAnnounce and every active teammate's reflection."""
        self.register(adhoc.agent_id)
        self.broadcast(Message(adhoc.agent_id, t, CapabilityAnnounce(adhoc)))
        ids = sorted(teammates) if teammates is not None else sorted(self._reflectors)
        reflections = []
        for aid in ids:
            hook = self._reflectors.get(aid)
            if aid == adhoc.agent_id or hook is None:
                continue
            reply = hook()
            if reply is None:
                continue
            profile, subtask, status = reply
            msg = Message(aid, t, CapabilityReflect(profile, subtask, status))
            self.broadcast(msg)
            reflections.append(msg)
        return reflections

    def request_intention_feedback(self, sender: str, subtask: str, t: int) -> list[Message]:
        """Synchronous stage-3 query: announce the intention and gather teammates' facts."""
        self.broadcast(Message(sender, t, Intention(subtask)))
        replies = []
        for aid in sorted(self._responders):
            if aid == sender:
                continue
            facts = self._responders[aid](subtask)
            if facts is None:
                continue
            msg = Message(aid, t, IntentionFeedback(tuple(facts)))
            self.log.append(msg)
            replies.append(msg)
        return replies

    def log_lines(self) -> list[str]:
        return [m.to_json() for m in self.log]

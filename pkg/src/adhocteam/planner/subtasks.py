"""Sub-task and sub-skill vocabularies with their text literals."""

from __future__ import annotations

import re
from dataclasses import dataclass

SUBTASK_KINDS = ("Explore", "RePlace", "Stop")
SUBSKILL_KINDS = ("GoToObject", "GoToPoint", "GoToRoom", "PickupObject", "PutObject", "Explore", "Stop")
MAX_POINT_OFFSET = 5

_CALL = re.compile(r"^\s*([A-Za-z]+)\s*(?:\((.*)\))?\s*$")


class PlanSyntaxError(ValueError):
    pass


def _split_call(text: str) -> tuple[str, list[str]]:
    m = _CALL.match(text.strip().rstrip(".").strip("`*\"' "))
    if not m:
        raise PlanSyntaxError(f"not a call literal: {text!r}")
    name, args = m.group(1), m.group(2)
    parts = [a.strip().strip("'\"") for a in args.split(",")] if args and args.strip() else []
    return name, parts


@dataclass(frozen=True)
class SubTask:
    kind: str
    room_id: str | None = None
    object_id: str | None = None
    receptacle_type: str | None = None
    room_type: str | None = None

    @staticmethod
    def explore(room_id: str) -> "SubTask":
        return SubTask("Explore", room_id=room_id)

    @staticmethod
    def replace(object_id: str, receptacle_type: str, room_type: str) -> "SubTask":
        return SubTask("RePlace", object_id=object_id, receptacle_type=receptacle_type,
                       room_type=room_type)

    @staticmethod
    def stop() -> "SubTask":
        return SubTask("Stop")

    def __str__(self) -> str:
        if self.kind == "Explore":
            return f"Explore({self.room_id})"
        if self.kind == "RePlace":
            return f"RePlace({self.object_id}, {self.receptacle_type}, {self.room_type})"
        return "Stop"

    @staticmethod
    def parse(text: str) -> "SubTask":
        name, args = _split_call(text)
        if name == "Explore" and len(args) == 1 and args[0]:
            return SubTask.explore(args[0])
        if name == "RePlace" and len(args) == 3 and all(args):
            return SubTask.replace(*args)
        if name == "Stop" and not args:
            return SubTask.stop()
        raise PlanSyntaxError(f"invalid sub-task {text!r}")


STOP = SubTask.stop()


@dataclass(frozen=True)
class SubSkill:
    kind: str
    object_id: str | None = None
    receptacle_id: str | None = None
    room_id: str | None = None
    dx: int = 0
    dy: int = 0

    def __post_init__(self) -> None:
        if self.kind not in SUBSKILL_KINDS:
            raise PlanSyntaxError(f"unknown sub-skill {self.kind!r}")
        if self.kind == "GoToPoint" and max(abs(self.dx), abs(self.dy)) > MAX_POINT_OFFSET:
            raise PlanSyntaxError(f"GoToPoint offset ({self.dx}, {self.dy}) exceeds {MAX_POINT_OFFSET}")

    def __str__(self) -> str:
        k = self.kind
        if k in ("GoToObject", "PickupObject"):
            return f"{k}({self.object_id})"
        if k == "GoToRoom":
            return f"GoToRoom({self.room_id})"
        if k == "GoToPoint":
            return f"GoToPoint({self.dx}, {self.dy})"
        if k == "PutObject":
            return f"PutObject({self.object_id}, {self.receptacle_id}, {self.room_id})"
        return k

    @staticmethod
    def parse(text: str) -> "SubSkill":
        name, args = _split_call(text)
        try:
            if name in ("GoToObject", "PickupObject") and len(args) == 1 and args[0]:
                return SubSkill(name, object_id=args[0])
            if name == "GoToRoom" and len(args) == 1 and args[0]:
                return SubSkill(name, room_id=args[0])
            if name == "GoToPoint" and len(args) == 2:
                return SubSkill(name, dx=int(args[0]), dy=int(args[1]))
            if name == "PutObject" and len(args) == 3 and all(args):
                return SubSkill(name, object_id=args[0], receptacle_id=args[1], room_id=args[2])
            if name in ("Explore", "Stop") and not args:
                return SubSkill(name)
        except ValueError as exc:
            raise PlanSyntaxError(f"invalid sub-skill {text!r}") from exc
        raise PlanSyntaxError(f"invalid sub-skill {text!r}")


def same_target(a: SubTask, b: SubTask) -> bool:
    """Two sub-tasks compete for the same thing (same object, or same room to explore)."""
    if a.kind != b.kind:
        return False
    if a.kind == "RePlace":
        return a.object_id == b.object_id
    if a.kind == "Explore":
        return a.room_id == b.room_id
    return False

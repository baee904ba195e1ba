"""Prompt bundles for the four planning stages."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .context import PlannerContext
from .subtasks import MAX_POINT_OFFSET

STAGES = ("generation", "evaluation", "rejudging", "subskill")
SECTION_ORDER = (
    "task_description",
    "subtask_or_subskill_descriptions",
    "output_format",
    "in_context_examples",
    "self_state",
    "detection_info",
    "teammate_abilities_and_states",
    "communication_messages",
)
STAGE_TAIL = {
    "generation": "generation_request",
    "evaluation": "candidates",
    "rejudging": "chosen_subtask_and_feedback",
    "subskill": "current_subtask",
}
DEFAULT_TOKEN_BUDGET = 128_000

_TOKEN = re.compile(r"\w+|[^\w\s]")


def count_tokens(text: str) -> int:
    """Approximate token count: words and individual punctuation marks."""
    return len(_TOKEN.findall(text))


TASK_TEXT = (
    "You are agent {aid} in a household team. Some objects sit in places that make no sense "
    "(for example a knife on a sofa, or a book on the floor). The team must find every misplaced "
    "object and put it on a sensible receptacle in a sensible room. Teammates differ in what they "
    "can do: some cannot pick objects up, some can only lift light objects, and camera height "
    "changes what they can see. There is no central coordinator; you only know what you observed "
    "and what teammates told you."
)
ADAPTIVE_NOTE = (
    "Note: a teammate may be broken, or a new ad hoc agent may have joined the team at any time. "
    "Take every teammate that reports its state into account."
)

SUBTASK_TEXT = (
    "Sub-tasks:\n"
    "- Explore(<room_id>): explore the room to search for misplaced objects and receptacles.\n"
    "- RePlace(<object_id>, <receptacle_type>, <room_type>): put the detected misplaced object on a "
    "reasonable type of receptacle in a reasonable type of room.\n"
    "- Stop: stop working because nothing useful is left for you."
)
SUBSKILL_TEXT = (
    "Sub-skills:\n"
    "- GoToObject(<object_id>): navigate to the vicinity of a detected object.\n"
    f"- GoToPoint(<dx>, <dy>): move by a column/row offset of at most {MAX_POINT_OFFSET} cells.\n"
    "- GoToRoom(<room_id>): navigate into a known room.\n"
    "- PickupObject(<object_id>): pick up an object within reach.\n"
    "- PutObject(<object_id>, <receptacle_id>, <room_id>): put the held object on a receptacle within reach.\n"
    "- Explore: explore the current room.\n"
    "- Stop: stop."
)

FORMAT_FULL = {
    "generation": "Think step by step, then finish with one line:\nPlan: <sub-task>; <sub-task>; ... "
                  "(at most {n}, best first)",
    "evaluation": "Compare the candidates against your abilities and the situation, then finish with "
                  "one line:\nPlan: <candidate numbers from best to worst, comma separated>",
    "rejudging": "Check the chosen sub-task against the teammates' feedback, then finish with one "
                 "line:\nPlan: reasonable\nor\nPlan: infeasible(<short reason>)",
    "subskill": "Think step by step, then finish with one line:\nPlan: <sub-skill>",
}
FORMAT_NAIVE = {
    "generation": "Answer with one line:\nPlan: <sub-task>",
    "evaluation": FORMAT_FULL["evaluation"],
    "rejudging": FORMAT_FULL["rejudging"],
    "subskill": "Answer with one line:\nPlan: <sub-skill>",
}

EXAMPLES = {
    "generation": (
        "Input: you can manipulate objects (payload 8.0 kg); Knife_0 (0.3 kg) is misplaced on Sofa_0 in "
        "room_1; CounterTop_0 is in room_0 (kitchen); room_2 is unexplored.\n"
        "Output: Knife_0 belongs on a counter top in the kitchen and I can lift it. room_2 may hide "
        "more objects.\nPlan: RePlace(Knife_0, CounterTop, kitchen); Explore(room_2); Stop"
    ),
    "evaluation": (
        "Input: candidates 1. Explore(room_2) 2. RePlace(Knife_0, CounterTop, kitchen); you can "
        "manipulate objects and Knife_0 is 3 steps away.\n"
        "Output: re-placing the nearby knife uses my manipulation ability.\nPlan: 2, 1"
    ),
    "rejudging": (
        "Input: chosen RePlace(Book_0, Bookshelf, office); feedback: T1 is executing "
        "RePlace(Book_0, Bookshelf, office).\n"
        "Output: this conflicts with the current sub-task of T1.\nPlan: infeasible(T1 is already "
        "re-placing Book_0)"
    ),
    "subskill": (
        "Input: sub-task RePlace(Knife_0, CounterTop, kitchen); you are 6 steps from Knife_0 and hold "
        "nothing.\nOutput: I must reach the knife before picking it up.\nPlan: GoToObject(Knife_0)"
    ),
}


@dataclass
class PromptBundle:
    stage: str
    sections: list[tuple[str, str]] = field(default_factory=list)
    evicted: int = 0

    def names(self) -> list[str]:
        return [name for name, _ in self.sections]

    def section(self, name: str) -> str:
        for n, text in self.sections:
            if n == name:
                return text
        raise KeyError(name)

    def render(self) -> str:
        return "\n\n".join(f"## {name}\n{text}" for name, text in self.sections) + "\n"

    def tokens(self) -> int:
        return count_tokens(self.render())


def _fmt_profile(p) -> str:
    return (f"navigation={'yes' if p.alpha_nav else 'no'}, manipulation={'yes' if p.alpha_manip else 'no'}, "
            f"camera={'tall' if p.height else 'short'}, payload={p.payload:g} kg, battery={p.battery} steps")


def self_state(ctx: PlannerContext) -> str:
    rooms = ", ".join(sorted(ctx.current_rooms())) or "unknown"
    lines = [
        f"id: {ctx.agent_id}",
        f"abilities: {_fmt_profile(ctx.profile)}",
        f"step: {ctx.t}",
        f"position: ({ctx.position[0]}, {ctx.position[1]}) in {rooms}",
        f"holding: {ctx.holding or 'nothing'}",
        f"current sub-task: {ctx.current_subtask or 'none'}",
    ]
    if ctx.last_failure:
        lines.append(f"last failure: {ctx.last_failure}")
    if ctx.objections:
        lines.append("objections from teammates: " + "; ".join(ctx.objections))
    return "\n".join(lines)


def detection_info(ctx: PlannerContext) -> str:
    g, p = ctx.graph, ctx.perception
    lines = ["rooms:"]
    for room in p.known_rooms():
        rtype = g.room_type(room) or "unknown"
        done = p.room_completeness(room, ctx.profile.height)
        other = ctx.explored_by_others.get(room)
        extra = f", teammates report {other:.0%}" if other is not None else ""
        lines.append(f"- {room} ({rtype}): explored {done:.0%}{extra}")
    lines.append("receptacles:")
    for rid in sorted(g.receptacles):
        rec = g.receptacles[rid]
        cand = f", suits {', '.join(sorted(rec.candidate_for))}" if rec.candidate_for else ""
        lines.append(f"- {rid} in {rec.room_id} at ({rec.cell[0]}, {rec.cell[1]}){cand}")
    lines.append("misplaced objects:")
    mis = sorted(g.misplaced_objects(), key=lambda o: o.object_id)
    for o in mis:
        mass = f"{o.mass:g} kg" if o.mass is not None else "unknown mass"
        lines.append(f"- {o.object_id} ({o.object_type}, {mass}) on {o.location} in {o.room_id or 'unknown'}, "
                     f"{ctx.distance_to(o.cell)} steps away")
    if not mis:
        lines.append("- none known")
    if ctx.replaced:
        lines.append("already re-placed: " + ", ".join(sorted(ctx.replaced)))
    return "\n".join(lines)


def teammate_info(ctx: PlannerContext) -> str:
    if not ctx.teammates:
        return "no teammates known"
    lines = []
    for aid in sorted(ctx.teammates):
        info = ctx.teammates[aid]
        ab = _fmt_profile(info.profile) if info.profile else "abilities unknown"
        st = f"{info.subtask} ({info.status})" if info.subtask else "no sub-task reported"
        lines.append(f"- {aid}: {ab}; {st}")
    return "\n".join(lines)


def _tail(stage: str, ctx: PlannerContext, extras: dict) -> str:
    if stage == "generation":
        n = extras.get("n", 1)
        return f"Generate up to {n} candidate sub-task(s) for yourself."
    if stage == "evaluation":
        cands = extras.get("candidates", [])
        return "Candidates:\n" + "\n".join(f"{i}. {c}" for i, c in enumerate(cands, 1))
    if stage == "rejudging":
        facts = extras.get("facts", [])
        lines = [f"Chosen sub-task: {extras.get('subtask')}", "Teammate feedback:"]
        lines += [f"- {render_fact(f)}" for f in facts] or ["- none"]
        return "\n".join(lines)
    return f"Current sub-task: {extras.get('subtask')}"


def render_fact(f) -> str:
    name = type(f).__name__
    if name == "ExploredRoom":
        return f"{f.room_id} explored {f.completeness:.0%}"
    if name == "ObjectSeen":
        state = "misplaced" if f.misplaced else "in a reasonable place"
        return f"{f.object_id} seen on {f.location}, {state}"
    if name == "ExecutingSubTask":
        return f"{f.agent_id} is executing {f.subtask}"
    return str(f)


def build_prompt(stage: str, ctx: PlannerContext, extras: dict | None = None,
                 style: str = "full", token_budget: int = DEFAULT_TOKEN_BUDGET) -> PromptBundle:
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    extras = extras or {}
    naive = style == "naive"
    task = TASK_TEXT.format(aid=ctx.agent_id)
    if ctx.adaptive_note:
        task += "\n" + ADAPTIVE_NOTE
    fmt = (FORMAT_NAIVE if naive else FORMAT_FULL)[stage].format(n=extras.get("n", 1))
    sections = [
        ("task_description", task),
        ("subtask_or_subskill_descriptions", SUBSKILL_TEXT if stage == "subskill" else SUBTASK_TEXT),
        ("output_format", fmt),
    ]
    if not naive:
        sections.append(("in_context_examples", EXAMPLES[stage]))
    sections += [
        ("self_state", self_state(ctx)),
        ("detection_info", detection_info(ctx)),
        ("teammate_abilities_and_states", teammate_info(ctx)),
    ]
    history = list(ctx.memory)
    tail = (STAGE_TAIL[stage], _tail(stage, ctx, extras))
    bundle = PromptBundle(stage, sections + [("communication_messages", "\n".join(history)), tail])
    # drop the oldest history entries until the prompt fits
    fixed = count_tokens(PromptBundle(stage, sections + [("communication_messages", ""), tail]).render())
    sizes = [count_tokens(line) for line in history]
    total = fixed + sum(sizes)
    drop = 0
    while total > token_budget and drop < len(history):
        total -= sizes[drop]
        drop += 1
    if drop:
        bundle = PromptBundle(stage, sections + [("communication_messages", "\n".join(history[drop:])), tail],
                              evicted=drop)
    return bundle

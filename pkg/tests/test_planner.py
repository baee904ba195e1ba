from __future__ import annotations

import pytest

from adhocteam.comms import ExecutingSubTask, ExploredRoom, ObjectSeen
from adhocteam.planner.context import TeammateInfo
from adhocteam.planner.irot import ABLATIONS, MAX_REPLAN_ROUNDS, cot_plan, naive_plan, plan_subtask_irot
from adhocteam.planner.prompts import SECTION_ORDER, STAGE_TAIL, STAGES, build_prompt, count_tokens
from adhocteam.planner.reasoner import PlanningError, ReasonerError, RuleReasoner, Verdict, rule_subskill
from adhocteam.planner.subtasks import MAX_POINT_OFFSET, STOP, PlanSyntaxError, SubSkill, SubTask, same_target

from helpers import context_after_looking, knife_scenario, profile

KNIFE_HOME = SubTask.replace("Knife_0", "CounterTop", "kitchen")


def both_rooms(**kw):
    """T1 has seen both rooms and ends up standing in the living room."""
    return context_after_looking(knife_scenario(), "T1", [(2, 2), (2, 7)], **kw)


# ---------------------------------------------------------------- literals


@pytest.mark.parametrize("text", ["Explore(room_3)", "RePlace(Knife_0, CounterTop, kitchen)", "Stop"])
def test_subtask_round_trip(text):
    assert str(SubTask.parse(text)) == text


def test_subtask_parse_is_lenient_about_decoration():
    assert SubTask.parse(" `RePlace(Knife_0,CounterTop,kitchen)`.") == KNIFE_HOME
    assert SubTask.parse("Explore('room_1')") == SubTask.explore("room_1")


@pytest.mark.parametrize("text", ["Explore()", "RePlace(Knife_0, CounterTop)", "Stop(now)", "Dance", "Go to"])
def test_subtask_parse_rejects_malformed(text):
    with pytest.raises(PlanSyntaxError):
        SubTask.parse(text)


@pytest.mark.parametrize("text", ["GoToObject(Knife_0)", "GoToPoint(-3, 5)", "GoToRoom(room_0)",
                                  "PickupObject(Knife_0)", "PutObject(Knife_0, CounterTop_0, room_0)",
                                  "Explore", "Stop"])
def test_subskill_round_trip(text):
    assert str(SubSkill.parse(text)) == text


def test_gotopoint_offset_is_bounded():
    with pytest.raises(PlanSyntaxError):
        SubSkill("GoToPoint", dx=MAX_POINT_OFFSET + 1)
    with pytest.raises(PlanSyntaxError):
        SubSkill.parse("GoToPoint(a, 1)")


def test_same_target():
    assert same_target(KNIFE_HOME, SubTask.replace("Knife_0", "Drawer", "kitchen"))
    assert not same_target(KNIFE_HOME, SubTask.explore("room_0"))
    assert not same_target(STOP, STOP)


# ---------------------------------------------------------------- rule reasoner


def test_rule_reasoner_puts_reachable_replace_first():
    ctx = both_rooms()
    props = RuleReasoner().propose(ctx, 3)
    assert props[0][0] == KNIFE_HOME
    assert props[-1][0] == STOP or len(props) == 3


def test_non_manipulator_never_proposes_replace():
    sc = knife_scenario()
    ctx = context_after_looking(sc, "T2", [(2, 3), (2, 7)])
    props = [st for st, _ in RuleReasoner().propose(ctx, 5)]
    assert props and all(st.kind != "RePlace" for st in props)
    assert not RuleReasoner().judge(ctx, KNIFE_HOME, []).reasonable


def test_weak_agent_never_proposes_heavy_object():
    sc = knife_scenario(team=[profile("T1", payload=0.1, start=(2, 2))])
    ctx = context_after_looking(sc, "T1", [(2, 2), (2, 7)])
    assert all(st.kind != "RePlace" for st, _ in RuleReasoner().propose(ctx, 5))
    assert not RuleReasoner().judge(ctx, KNIFE_HOME, []).reasonable


def test_excluded_candidates_are_skipped():
    ctx = both_rooms(excluded=frozenset({str(KNIFE_HOME)}))
    assert all(st != KNIFE_HOME for st, _ in RuleReasoner().propose(ctx, 5))


def test_rank_prefers_capability_fit_then_distance():
    ctx = both_rooms()
    cands = [STOP, SubTask.explore("room_0"), KNIFE_HOME]
    assert [st for st, _ in RuleReasoner().rank(ctx, cands)] == [KNIFE_HOME, SubTask.explore("room_0"), STOP]


def test_judge_uses_teammate_facts():
    ctx = both_rooms()
    r = RuleReasoner()
    assert r.judge(ctx, KNIFE_HOME, []).reasonable
    busy = r.judge(ctx, KNIFE_HOME, [ExecutingSubTask("T2", "RePlace(Knife_0, CounterTop, kitchen)")])
    assert not busy.reasonable and "T2" in busy.reason
    done = r.judge(ctx, KNIFE_HOME, [ObjectSeen("Knife_0", "CounterTop_0", False)])
    assert not done.reasonable
    explored = r.judge(ctx, SubTask.explore("room_0"), [ExploredRoom("room_0", 1.0)])
    assert not explored.reasonable
    assert r.judge(ctx, SubTask.explore("room_0"), [ExploredRoom("room_0", 0.4)]).reasonable
    assert str(Verdict(False, "x")) == "infeasible(x)"


# ---------------------------------------------------------------- sub-skill phases


def test_subskill_phases_for_replace():
    sc = knife_scenario()
    far = context_after_looking(sc, "T1", [(2, 7), (2, 2)])
    assert rule_subskill(far, KNIFE_HOME)[0] == SubSkill("GoToObject", object_id="Knife_0")
    reach = context_after_looking(sc, "T1", [(2, 2), (2, 8)])
    assert rule_subskill(reach, KNIFE_HOME)[0] == SubSkill("PickupObject", object_id="Knife_0")


def test_subskill_phases_while_holding():
    sc = knife_scenario()
    held = dict(holding="Knife_0", holding_type="Knife")
    away = context_after_looking(sc, "T1", [(2, 2), (2, 7)], **held)
    assert rule_subskill(away, KNIFE_HOME)[0] == SubSkill("GoToRoom", room_id="room_0")
    inside = context_after_looking(sc, "T1", [(2, 7), (3, 4)], **held)
    skill = rule_subskill(inside, KNIFE_HOME)[0]
    assert skill.kind == "GoToPoint" and (skill.dy, skill.dx) == (-1, -2)
    at = context_after_looking(sc, "T1", [(2, 7), (2, 2)], **held)
    assert rule_subskill(at, KNIFE_HOME)[0] == SubSkill("PutObject", "Knife_0", "CounterTop_0", "room_0")


def test_subskill_explore_and_stop():
    ctx = both_rooms()
    assert rule_subskill(ctx, SubTask.explore("room_1"))[0] == SubSkill("Explore")
    assert rule_subskill(ctx, SubTask.explore("room_0"))[0] == SubSkill("GoToRoom", room_id="room_0")
    assert rule_subskill(ctx, STOP)[0] == SubSkill("Stop")
    with pytest.raises(PlanningError):
        rule_subskill(ctx, SubTask.explore("room_9"))
    with pytest.raises(PlanningError):
        rule_subskill(ctx, SubTask.replace("Ghost_0", "Sofa", "living_room"))


# ---------------------------------------------------------------- IRoT


class Scripted:
    """Rule reasoner with scripted proposals and verdicts."""

    def __init__(self, proposals, verdicts=None, error_on=()):
        self.proposals = proposals
        self.verdicts = dict(verdicts or {})
        self.error_on = set(error_on)
        self.calls = []
        self.rule = RuleReasoner()

    def propose(self, ctx, n, prompt_style="full"):
        self.calls.append(("propose", prompt_style))
        if "propose" in self.error_on:
            raise ReasonerError("transport", "down")
        return [(st, "") for st in self.proposals if str(st) not in ctx.excluded][:n]

    def rank(self, ctx, candidates):
        self.calls.append(("rank",))
        return [(c, "") for c in reversed(candidates)]

    def judge(self, ctx, candidate, facts):
        self.calls.append(("judge", str(candidate)))
        ok = self.verdicts.get(str(candidate), True)
        return Verdict(ok, "" if ok else "no")

    def plan_subskill(self, ctx, subtask):
        return self.rule.plan_subskill(ctx, subtask)


CANDS = [SubTask.explore("room_0"), SubTask.explore("room_1"), KNIFE_HOME]


def test_irot_returns_best_ranked_reasonable_candidate():
    ctx = both_rooms()
    choice, trace = plan_subtask_irot(ctx, Scripted(CANDS), 3)
    assert choice == KNIFE_HOME  # the stub ranks in reverse
    assert trace.rounds[0].ranked == list(reversed(CANDS))


def test_irot_moves_down_the_ranking_on_rejection():
    ctx = both_rooms()
    stub = Scripted(CANDS, {str(KNIFE_HOME): False})
    choice, trace = plan_subtask_irot(ctx, stub, 3)
    assert choice == SubTask.explore("room_1")
    assert [str(v) for _, v in trace.rounds[0].verdicts] == ["infeasible(no)", "reasonable"]


def test_irot_exhaustion_returns_stop_after_bounded_rounds():
    ctx = both_rooms()
    many = [SubTask.explore(f"room_{i}") for i in range(20)]
    stub = Scripted(many, {str(st): False for st in many})
    choice, trace = plan_subtask_irot(ctx, stub, 2)
    assert choice == STOP and trace.exhausted
    assert len(trace.rounds) == MAX_REPLAN_ROUNDS
    judged = [c[1] for c in stub.calls if c[0] == "judge"]
    assert len(judged) == len(set(judged)) == 2 * MAX_REPLAN_ROUNDS


def test_irot_feedback_reaches_the_judge():
    seen = []
    ctx = both_rooms(request_feedback=lambda st: seen.append(str(st)) or [ExploredRoom("room_0", 1.0)])
    choice, trace = plan_subtask_irot(ctx, RuleReasoner(), 3)
    assert choice == KNIFE_HOME and seen == [str(KNIFE_HOME)]
    assert trace.rounds[0].feedback[str(KNIFE_HOME)] == [ExploredRoom("room_0", 1.0)]


def test_ablation_flags_skip_stages():
    ctx = both_rooms()
    stub = Scripted(CANDS, {str(st): False for st in CANDS})
    choice, _ = plan_subtask_irot(ctx, stub, 3, ABLATIONS["rf"])
    assert choice == KNIFE_HOME and not [c for c in stub.calls if c[0] == "judge"]
    stub = Scripted(CANDS)
    choice, trace = plan_subtask_irot(ctx, stub, 3, ABLATIONS["ev"])
    assert choice == CANDS[0] and not [c for c in stub.calls if c[0] == "rank"]
    with pytest.raises(ValueError):
        plan_subtask_irot(ctx, stub, 3, {"no_thinking"})
    with pytest.raises(ValueError):
        plan_subtask_irot(ctx, stub, 0)


def test_cot_is_irot_with_one_candidate_and_both_flags():
    ctx = both_rooms()
    a, ta = cot_plan(ctx, Scripted(CANDS))
    b, tb = plan_subtask_irot(ctx, Scripted(CANDS), 1, ABLATIONS["evrf"])
    assert a == b == CANDS[0] and ta.to_dict() == tb.to_dict()
    stub = Scripted(CANDS)
    naive_plan(ctx, stub)
    assert stub.calls == [("propose", "naive")]


def test_reasoner_failure_falls_back_to_rules():
    ctx = both_rooms()
    choice, trace = plan_subtask_irot(ctx, Scripted(CANDS, error_on={"propose"}), 3)
    assert choice == KNIFE_HOME
    assert trace.fallbacks and trace.fallbacks[0].startswith("propose")


# ---------------------------------------------------------------- prompts


def prompt_ctx(**kw):
    ctx = both_rooms(**kw)
    ctx.teammates = {"T2": TeammateInfo("T2", profile("T2", manip=False), "Explore(room_0)", "started")}
    return ctx


@pytest.mark.parametrize("stage", STAGES)
def test_prompt_sections_follow_the_fixed_order(stage):
    bundle = build_prompt(stage, prompt_ctx(), {"n": 3, "candidates": ["Stop"], "subtask": "Stop"})
    assert bundle.names() == list(SECTION_ORDER) + [STAGE_TAIL[stage]]


def test_naive_prompt_has_no_examples():
    bundle = build_prompt("generation", prompt_ctx(), {"n": 1}, style="naive")
    assert "in_context_examples" not in bundle.names()
    assert "step by step" not in bundle.section("output_format")


def test_adaptive_note_is_optional():
    plain = build_prompt("generation", prompt_ctx(), {"n": 1})
    noted = build_prompt("generation", prompt_ctx(adaptive_note=True), {"n": 1})
    assert "ad hoc agent" not in plain.section("task_description")
    assert "ad hoc agent" in noted.section("task_description")


def test_prompt_evicts_earliest_history_first():
    memory = [f"t={i} T2: SubTaskStatus Explore(room_{i}) started" for i in range(200)]
    ctx = prompt_ctx(memory=memory)
    full = build_prompt("generation", ctx, {"n": 3})
    assert full.evicted == 0
    budget = full.tokens() - 10 * count_tokens(memory[0]) + 1
    cut = build_prompt("generation", ctx, {"n": 3}, token_budget=budget)
    assert cut.tokens() <= budget
    kept = cut.section("communication_messages").split("\n")
    assert cut.evicted == 10 and kept == memory[10:]

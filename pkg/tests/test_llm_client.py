from __future__ import annotations

import time

import pytest

from adhocteam.planner.irot import plan_subtask_irot
from adhocteam.planner.llm import LLMClient, LLMReasoner, extract_plan, parse_ranking, parse_verdict
from adhocteam.planner.mock_server import MockChatServer
from adhocteam.planner.prompts import count_tokens
from adhocteam.planner.reasoner import ReasonerError
from adhocteam.planner.subtasks import PlanSyntaxError, SubSkill, SubTask

from helpers import golden_context

KNIFE_HOME = "RePlace(Knife_0, CounterTop, kitchen)"


def test_plan_line_parsing():
    assert extract_plan("thinking...\nPlan: a\nmore\nPlan: b") == "b"
    with pytest.raises(PlanSyntaxError):
        extract_plan("no plan here")
    assert parse_ranking("2, 1, 3", 3) == [1, 0, 2]
    with pytest.raises(PlanSyntaxError):
        parse_ranking("1, 1", 2)
    assert parse_verdict("reasonable").reasonable
    assert parse_verdict("infeasible(T2 has it)").reason == "T2 has it"
    with pytest.raises(PlanSyntaxError):
        parse_verdict("maybe")


def test_requests_carry_temperature_and_model():
    with MockChatServer([f"Plan: {KNIFE_HOME}; Stop"]) as srv:
        reasoner = LLMReasoner(LLMClient(srv.url, model="mock-model", api_key="k"))
        got = reasoner.propose(golden_context(), 3)
        assert [str(st) for st, _ in got] == [KNIFE_HOME, "Stop"]
        body = srv.requests[0]
        assert body["temperature"] == 0.3 and body["model"] == "mock-model"
        assert body["messages"][0]["role"] == "system"
        assert "## in_context_examples" in body["messages"][1]["content"]


def test_every_stage_parses():
    replies = {
        "generation_request": f"Plan: {KNIFE_HOME}",
        "candidates": "Plan: 2, 1",
        "chosen_subtask_and_feedback": "Plan: infeasible(busy)",
        "current_subtask": "Plan: GoToObject(Knife_0)",
    }

    def answer(body):
        prompt = body["messages"][1]["content"]
        return next(v for k, v in replies.items() if f"## {k}" in prompt)

    ctx = golden_context()
    with MockChatServer(answer) as srv:
        r = LLMReasoner(LLMClient(srv.url))
        cands = [SubTask.explore("room_0"), SubTask.parse(KNIFE_HOME)]
        assert [str(c) for c, _ in r.rank(ctx, cands)] == [KNIFE_HOME, "Explore(room_0)"]
        assert not r.judge(ctx, cands[1], []).reasonable
        assert r.plan_subskill(ctx, cands[1])[0] == SubSkill("GoToObject", object_id="Knife_0")


def test_prompts_respect_the_token_budget():
    ctx = golden_context()
    ctx.memory = [f"t={i} T2: SubTaskStatus Explore(room_{i % 7}) started" for i in range(20_000)]
    with MockChatServer(["Plan: Stop"]) as srv:
        LLMReasoner(LLMClient(srv.url)).propose(ctx, 1)
        prompt = srv.requests[0]["messages"][1]["content"]
        assert count_tokens(prompt) <= 128_000
        assert ctx.memory[-1] in prompt and ctx.memory[0] + "\n" not in prompt


def test_malformed_reply_is_retried_once_then_falls_back():
    ctx = golden_context()
    with MockChatServer(["I would rather not say.", "Still no plan."]) as srv:
        reasoner = LLMReasoner(LLMClient(srv.url), retry_max=1)
        choice, trace = plan_subtask_irot(ctx, reasoner, 3)
        assert len(srv.requests) == 2
        assert srv.requests[1]["messages"][-1]["content"].startswith("Your previous answer")
        assert str(choice) == KNIFE_HOME  # the rule reasoner took over
        assert trace.fallbacks and trace.fallbacks[0].startswith("propose: parse")


def test_retry_can_recover():
    with MockChatServer(["oops", "Plan: Stop"]) as srv:
        got = LLMReasoner(LLMClient(srv.url)).propose(golden_context(), 1)
        assert str(got[0][0]) == "Stop"


@pytest.mark.parametrize("status,kind", [(401, "auth"), (500, "transport")])
def test_http_errors_map_to_reasoner_errors(status, kind):
    with MockChatServer([(status, "nope")]) as srv:
        with pytest.raises(ReasonerError) as exc:
            LLMClient(srv.url).chat([{"role": "user", "content": "hi"}])
        assert exc.value.kind == kind


def test_unreachable_server_is_a_transport_error():
    srv = MockChatServer(["Plan: Stop"]).start()
    url = srv.url
    srv.stop()
    with pytest.raises(ReasonerError) as exc:
        LLMClient(url, timeout=1).chat([{"role": "user", "content": "hi"}])
    assert exc.value.kind == "transport"


def test_slow_server_times_out():
    with MockChatServer(["Plan: Stop"], delay=1.0) as srv:
        with pytest.raises(ReasonerError):
            LLMClient(srv.url, timeout=0.2).chat([{"role": "user", "content": "hi"}])


def test_fifty_exchanges_without_hanging(tmp_path):
    script = [f"Plan: {KNIFE_HOME}", "junk", "Plan: Stop", (500, "down"), "Plan: reasonable"] * 10
    ctx = golden_context()
    start = time.monotonic()
    with MockChatServer(script) as srv:
        client = LLMClient(srv.url, timeout=2, log_dir=str(tmp_path))
        reasoner = LLMReasoner(client, retry_max=0)
        outcomes = []
        for _ in range(50):
            try:
                outcomes.append(str(reasoner.propose(ctx, 1)[0][0]))
            except ReasonerError as exc:
                outcomes.append(exc.kind)
        client.close()
    assert len(srv.requests) == 50
    assert outcomes[:5] == [KNIFE_HOME, "parse", "Stop", "transport", "parse"]
    assert time.monotonic() - start < 30
    # every answered call is logged, parseable or not
    assert len(list(tmp_path.glob("call_*.json"))) == 40

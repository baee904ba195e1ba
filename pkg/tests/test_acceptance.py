"""Acceptance suite: one test per primary criterion, each printing a PASS/FAIL line."""

from __future__ import annotations

import random
import time
from dataclasses import replace

import pytest

from adhocteam.agents.adhoc import ADHOC_POLICIES, TEAM_POLICIES
from adhocteam.bench.metrics import (
    EpisodeRecord, episode_costs, improvement, metric_as, metric_ps, metric_se, metric_suc, metric_ts, pair_records,
)
from adhocteam.bench.oracle import tiny_instances
from adhocteam.bench.runner import RunOptions, run_suite, simulate
from adhocteam.bench.suite import build_benchmark
from adhocteam.engine import MANIP_ACTIONS, trace_lines
from adhocteam.planner.irot import ABLATIONS, MAX_REPLAN_ROUNDS, cot_plan, plan_subtask_irot
from adhocteam.planner.llm import LLMClient, LLMReasoner
from adhocteam.planner.mock_server import MockChatServer
from adhocteam.planner.prompts import SECTION_ORDER, STAGE_TAIL, STAGES, count_tokens
from adhocteam.planner.reasoner import RuleReasoner, Verdict
from adhocteam.planner.subtasks import STOP, SubTask

from helpers import golden_context
from test_prompt_snapshots import GOLDEN, bundle_for, split_sections


@pytest.fixture
def verdict(capsys):
    def check(number: int, title: str, ok: bool, detail: str = "") -> None:
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else ""))
        assert ok, f"criterion {number} failed: {detail}"
    return check


@pytest.fixture(scope="module")
def desk():
    return build_benchmark()


# 1 -------------------------------------------------------------------------

def hand_records() -> list[EpisodeRecord]:
    """Ten episodes whose metrics are worked out by hand below."""
    rows = [  # (R, K, K_suc, n_agents, success step, per-agent steps)
        (1, 3, 3, 2, 120, (120, 180)),
        (0, 4, 1, 4, None, None),
        (1, 1, 1, 2, 45, (45, 45)),
        (1, 2, 2, 3, 210, (210, 200, 230)),
        (0, 5, 0, 3, None, None),
        (1, 3, 3, 3, 333, (333, 333, 333)),
        (0, 2, 1, 4, None, None),
        (1, 4, 4, 3, 98, (98, 80, 72)),
        (1, 1, 1, 2, 61, (61, 69)),
        (0, 3, 2, 3, None, None),
    ]
    out = []
    for i, (r, k, ks, n, end, steps) in enumerate(rows):
        per_agent = dict(zip([f"T{j}" for j in range(n)], steps or [77] * n))
        ts, as_ = episode_costs(bool(r), end or 0, per_agent, 500)
        out.append(EpisodeRecord(f"hand{i}", "heuristic", "none", 0, 0, k, ks,
                                 "success" if r else "timeout", r, ts, as_, steps=per_agent))
    return out


def test_criterion_01_metric_oracle(verdict):
    start = time.perf_counter()
    rs = hand_records()
    # hand computation:
    #   Suc = 6 successes / 10
    #   PS  = (1 + 1/4 + 1 + 1 + 0 + 1 + 1/2 + 1 + 1 + 2/3) / 10
    #   TS  = (120 + 500 + 45 + 210 + 500 + 333 + 500 + 98 + 61 + 500) / 10 = 2867 / 10
    #   AS  = (300 + 2000 + 90 + 640 + 1500 + 999 + 2000 + 250 + 130 + 1500) / 10 = 9409 / 10
    want = {"Suc": 0.6, "PS": (6 + 0.25 + 0.5 + 2 / 3) / 10, "TS": 286.7, "AS": 940.9}
    got = {"Suc": metric_suc(rs), "PS": metric_ps(rs), "TS": metric_ts(rs), "AS": metric_as(rs)}
    exact = all(abs(got[m] - want[m]) < 1e-12 for m in want)
    team = EpisodeRecord("fig", "heuristic", "none", 0, 0, 3, 3, "success", 1, 207, 600)
    adhoc = EpisodeRecord("fig", "heuristic", "irot", 50, 0, 3, 3, "success", 1, 136, 450)
    se = metric_se(pair_records([team], [adhoc], check_prefix=False))
    elapsed = time.perf_counter() - start
    ok = len(rs) >= 10 and exact and abs(se - 71 / 207) < 1e-9 and elapsed < 1.0
    verdict(1, "metric oracle suite", ok, f"{len(rs)} records, SE={se:.12f}, {elapsed * 1000:.1f} ms")


# 2 -------------------------------------------------------------------------

def test_criterion_02_improvement_spot_checks(verdict):
    start = time.perf_counter()
    checks = [
        (21.1, 26.3, True, 24.6),
        (453.2, 399.3, False, 11.9),
        (1813.3, 1918.1, False, -5.8),
    ]
    got = [improvement(b, t, hib) for b, t, hib, _ in checks]
    ok = all(abs(g - want) <= 0.1 for g, (_, _, _, want) in zip(got, checks))
    ok = ok and time.perf_counter() - start < 1.0
    verdict(2, "improvement formula spot checks", ok, ", ".join(f"{g:+.2f}%" for g in got))


# 3 -------------------------------------------------------------------------

def test_criterion_03_determinism(verdict, desk, tmp_path):
    start = time.perf_counter()
    opts = RunOptions("heuristic", "irot", t0=0, seed=0)
    run_suite(desk.scenarios, opts, out_dir=tmp_path / "a")
    run_suite(desk.scenarios, opts, out_dir=tmp_path / "b")
    files = sorted(p.name for p in (tmp_path / "a").glob("*.json"))
    same = [((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()) for f in files]
    elapsed = time.perf_counter() - start
    ok = len(files) == 45 and all(same) and elapsed < 600
    verdict(3, "byte-identical records over two desk runs", ok,
            f"{sum(same)}/{len(files)} identical, {elapsed:.1f} s")


# 4 -------------------------------------------------------------------------

def test_criterion_04_prejoin_non_interference(verdict, desk):
    t0 = 50
    matched = 0
    for sc in desk.scenarios:
        team = simulate(sc, RunOptions())
        joined = simulate(sc, RunOptions(adhoc_policy="irot", t0=t0))
        before = [line for line, row in zip(trace_lines(team.state.trace), team.state.trace) if row[0] < t0]
        after = [line for line, row in zip(trace_lines(joined.state.trace), joined.state.trace) if row[0] < t0]
        if before == after and team.record.prefix_digests[str(t0)] == joined.record.prefix_digests[str(t0)]:
            matched += 1
    verdict(4, "trace before t0=50 equals the team-only trace", matched == len(desk.scenarios),
            f"{matched}/{len(desk.scenarios)} pairs")


# 5 -------------------------------------------------------------------------

class RandomStub:
    """Proposes, ranks and judges at random, sometimes with duplicates or a broken ranking."""

    def __init__(self, pool, rng: random.Random):
        self.pool = pool
        self.rng = rng

    def propose(self, ctx, n, prompt_style="full"):
        k = self.rng.randint(0, n + 1)
        return [(self.rng.choice(self.pool), "") for _ in range(k)]

    def rank(self, ctx, candidates):
        out = list(candidates)
        self.rng.shuffle(out)
        if out and self.rng.random() < 0.1:
            out = out[:-1]  # a malformed ranking the planner must not trust
        return [(c, "") for c in out]

    def judge(self, ctx, candidate, facts):
        return Verdict(self.rng.random() < 0.3, "random")

    def plan_subskill(self, ctx, subtask):
        return RuleReasoner().plan_subskill(ctx, subtask)


def irot_violations(ctx, pool, seed: int) -> list[str]:
    rng = random.Random(seed)
    n = rng.randint(1, 4)
    flags = rng.choice([frozenset(), *ABLATIONS.values()])
    stub = RandomStub(pool, rng)
    choice, trace = plan_subtask_irot(ctx, stub, n, flags)
    bad = []
    generated = {str(c) for r in trace.rounds for c in r.candidates}
    if str(choice) not in generated and not (choice == STOP and trace.exhausted):
        bad.append("selection: result outside every candidate set")
    if len(trace.rounds) > MAX_REPLAN_ROUNDS:
        bad.append("restarts: too many rounds")
    if trace.exhausted and choice != STOP:
        bad.append("restarts: exhaustion must end in Stop")
    for r in trace.rounds:
        if sorted(map(str, r.ranked)) != sorted(map(str, r.candidates)):
            bad.append("rank: stage two is not a permutation of stage one")
        if len(r.candidates) > n or len({str(c) for c in r.candidates}) != len(r.candidates):
            bad.append("generation: duplicates or more than n candidates")
    if "no_reflection" not in flags and not trace.exhausted:
        last = trace.rounds[-1]
        judged = [str(c) for c, _ in last.verdicts]
        ok = [v.reasonable for _, v in last.verdicts]
        if judged != [str(c) for c in last.ranked[:len(judged)]] or ok != [False] * (len(ok) - 1) + [True] \
                or judged[-1] != str(choice):
            bad.append("reflection: result not the first reasonable candidate in rank order")
    for r in trace.rounds[:-1] if not trace.exhausted else trace.rounds:
        if "no_reflection" not in flags and any(v.reasonable for _, v in r.verdicts):
            bad.append("reflection: a reasonable candidate was passed over")
    # CoT is IRoT with one candidate and neither evaluation nor reflection
    a = cot_plan(ctx, RandomStub(pool, random.Random(seed + 1)))
    b = plan_subtask_irot(ctx, RandomStub(pool, random.Random(seed + 1)), 1, ABLATIONS["evrf"])
    if str(a[0]) != str(b[0]) or a[1].to_dict() != b[1].to_dict():
        bad.append("cot: differs from IRoT(n=1, ev+rf off)")
    return bad


def test_criterion_05_irot_invariants(verdict):
    ctx = golden_context()
    pool = [SubTask.explore("room_0"), SubTask.explore("room_1"),
            SubTask.parse("RePlace(Knife_0, CounterTop, kitchen)"), SubTask.parse("RePlace(Apple_0, Fridge, kitchen)"),
            STOP]
    violations = []
    for trial in range(1000):
        violations += [f"trial {trial}: {v}" for v in irot_violations(ctx, pool, trial)]
    verdict(5, "IRoT invariants under a random stub", not violations,
            f"1000 trials, {len(violations)} violations" + (f"; first: {violations[0]}" if violations else ""))


# 6 -------------------------------------------------------------------------

def capability_violations(ep, scenario) -> list[str]:
    masses = {o.object_id: o.mass for o in scenario.house.objects}
    bad = []
    for aid, ctrl in ep.controllers.items():
        prof = ctrl.profile
        if not prof.alpha_manip:
            emitted = [a for _, a in ctrl.emitted if a.split("(")[0] in MANIP_ACTIONS]
            if emitted:
                bad.append(f"{aid} emitted {emitted[0]}")
        if ctrl.guard_hits:
            bad.append(f"{aid} needed the capability guard {ctrl.guard_hits} times")
        if aid == "T0" and ctrl.kind == "irot":
            for trace in ctrl.traces:
                st = trace.result
                if st is not None and st.kind == "RePlace" and (
                        not prof.alpha_manip or masses[st.object_id] > prof.payload):
                    bad.append(f"T0 selected {st} (manip={prof.alpha_manip}, payload={prof.payload})")
    return bad


def test_criterion_06_capability_soundness(verdict, desk):
    runs = [RunOptions(team, adhoc) for team in TEAM_POLICIES for adhoc in ADHOC_POLICIES]
    runs += [RunOptions("heuristic", adhoc, adhoc_manip=False) for adhoc in ADHOC_POLICIES if adhoc != "none"]
    bad = []
    episodes = 0
    for opts in runs:
        for sc in desk.scenarios:
            ep = simulate(sc, opts)
            episodes += 1
            bad += [f"{sc.scenario_id} {opts.team_policy}/{opts.adhoc_policy}: {v}"
                    for v in capability_violations(ep, sc)]
    verdict(6, "capability soundness over all policies", not bad,
            f"{episodes} episodes, {len(bad)} violations" + (f"; first: {bad[0]}" if bad else ""))


# 7 -------------------------------------------------------------------------

def test_criterion_07_directional_replication(verdict, desk):
    team = [simulate(sc, RunOptions()).record for sc in desk.scenarios]
    suc_team, ts_team = metric_suc(team), metric_ts(team)
    rows = {}
    for t0 in (0, 50, 100):
        recs = [simulate(sc, RunOptions(adhoc_policy="irot", t0=t0, adhoc_manip=True)).record
                for sc in desk.scenarios]
        rows[t0] = (metric_suc(recs), metric_ts(recs), improvement(ts_team, metric_ts(recs), False))
    directional = all(s >= suc_team and ts <= ts_team for s, ts, _ in rows.values())
    monotone = rows[0][2] >= rows[100][2]
    detail = f"team Suc={suc_team:.3f} TS={ts_team:.1f}; " + "; ".join(
        f"t0={t0}: Suc={s:.3f} TS={ts:.1f} ({imp:+.1f}%)" for t0, (s, ts, imp) in rows.items())
    verdict(7, "directional replication on the desk suite", directional and monotone, detail)


# 8 -------------------------------------------------------------------------

def test_criterion_08_optimality_bound(verdict):
    start = time.perf_counter()
    instances = tiny_instances(12)
    bad = []
    worst = 0.0
    for inst in instances:
        sc = inst.scenario
        team = simulate(sc, RunOptions()).record
        if team.TS < inst.optimum_team:
            bad.append(f"{sc.scenario_id}: team beat the optimum")
        if not team.R or team.TS > 3 * inst.optimum_team:
            bad.append(f"{sc.scenario_id}: heuristic team TS={team.TS} vs optimum {inst.optimum_team}")
        worst = max(worst, team.TS / inst.optimum_team)
        llm_team = simulate(sc, RunOptions("llm")).record
        if llm_team.TS < inst.optimum_team:
            bad.append(f"{sc.scenario_id}: llm team beat the optimum")
        for pol in ADHOC_POLICIES[1:]:
            rec = simulate(sc, RunOptions(adhoc_policy=pol)).record
            if rec.TS < inst.optimum_all:
                bad.append(f"{sc.scenario_id}: {pol} beat the optimum")
    elapsed = time.perf_counter() - start
    ok = len(instances) == 12 and not bad and elapsed < 120
    verdict(8, "brute-force optimality bound", ok,
            f"worst heuristic ratio {worst:.2f}, {elapsed:.1f} s" + (f"; {bad[0]}" if bad else ""))


# 9 -------------------------------------------------------------------------

def test_criterion_09_llm_client_conformance(verdict, tmp_path):
    problems = []
    ctx = golden_context()
    with MockChatServer(["Plan: Stop"]) as srv:
        LLMReasoner(LLMClient(srv.url)).propose(ctx, 1)
        if srv.requests[0]["temperature"] != 0.3:
            problems.append("temperature")
    big = replace(ctx, memory=[f"t={i} T2: SubTaskStatus Explore(room_{i % 7}) started" for i in range(20_000)])
    with MockChatServer(["Plan: Stop"]) as srv:
        LLMReasoner(LLMClient(srv.url)).propose(big, 1)
        msgs = srv.requests[0]["messages"]
        total = sum(count_tokens(m["content"]) for m in msgs)
        prompt = msgs[1]["content"]
        if total > 128_000:
            problems.append(f"budget: {total} tokens")
        if big.memory[-1] not in prompt or big.memory[0] + "\n" in prompt:
            problems.append("eviction: earliest history should go first")
    with MockChatServer(["no plan", "still none"]) as srv:
        choice, trace = plan_subtask_irot(ctx, LLMReasoner(LLMClient(srv.url), retry_max=1), 3)
        if len(srv.requests) != 2 or not trace.fallbacks:
            problems.append("retry then fallback")
    start = time.monotonic()
    script = ["Plan: Stop", "junk", (500, "down"), "Plan: RePlace(Knife_0, CounterTop, kitchen)", "Plan: 1"] * 10
    with MockChatServer(script, delay=0.01) as srv:
        client = LLMClient(srv.url, timeout=2, log_dir=str(tmp_path))
        reasoner = LLMReasoner(client, retry_max=0)
        for _ in range(50):
            try:
                reasoner.propose(ctx, 1)
            except Exception:  # noqa: BLE001 - any typed failure is fine, a hang is not
                pass
        client.close()
        served = len(srv.requests)
    elapsed = time.monotonic() - start
    if served != 50 or elapsed > 60:
        problems.append(f"50 exchanges: {served} served in {elapsed:.1f} s")
    verdict(9, "LLM client conformance against the mock server", not problems,
            "; ".join(problems) or f"50 exchanges in {elapsed:.1f} s, {total} tokens at 20k memory lines")


# 10 ------------------------------------------------------------------------

def test_criterion_10_prompt_snapshots(verdict):
    mismatched = []
    for stage in STAGES:
        golden = split_sections((GOLDEN / f"{stage}.txt").read_text())
        bundle = bundle_for(stage)
        names = [n for n, _ in golden]
        if names != list(SECTION_ORDER) + [STAGE_TAIL[stage]] or names != bundle.names():
            mismatched.append(f"{stage}: section order")
            continue
        mismatched += [f"{stage}: {name}" for (name, want), (_, got) in zip(golden, bundle.sections) if want != got]
    verdict(10, "prompt snapshots match the golden files", not mismatched,
            f"{len(STAGES)} stages" + (f"; {mismatched}" if mismatched else ""))

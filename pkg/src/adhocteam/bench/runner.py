"""Episode driver: team before t0, the ad hoc agent from t0, records and logs."""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..agents.adhoc import make_adhoc, make_team
from ..agents.llm_team import LLMTeammate
from ..comms import Channel
from ..engine import DEFAULT_MAX_STEPS, SimState, is_terminated, join_agent, new_state, observe, step, trace_lines
from ..planner.reasoner import PlanningError, ReasonerError
from ..world import Scenario, default_rules
from .metrics import EpisodeRecord, episode_costs

DIGEST_POINTS = (50, 100)
ADHOC_ID = "T0"


@dataclass
class RunOptions:
    """Everything besides the scenario that determines an episode."""

    team_policy: str = "heuristic"
    adhoc_policy: str = "none"
    t0: int = 0
    seed: int = 0
    max_steps: int = DEFAULT_MAX_STEPS
    ablation: str | None = None
    adhoc_manip: bool | None = None  # force the ad hoc agent's manipulation ability
    adaptive_note: bool = False
    n_irot: int | None = None
    reasoner_factory: object = None  # callable(agent_id) -> Reasoner, for LLM-backed runs


@dataclass
class LLMReasonerFactory:
    """Builds one chat-backed reasoner per agent; plain data so worker processes can receive it."""

    url: str
    model: str | None = None
    token_budget: int | None = None
    log_dir: str | None = None

    def __call__(self, agent_id: str):
        from ..planner.llm import LLMClient, LLMReasoner

        kw = {}
        if self.model:
            kw["model"] = self.model
        if self.token_budget:
            kw["token_budget"] = self.token_budget
        if self.log_dir:
            kw["log_dir"] = str(Path(self.log_dir) / agent_id)
        return LLMReasoner(LLMClient(self.url, **kw))


@dataclass
class Episode:
    """A finished episode with everything needed for audits."""

    record: EpisodeRecord
    state: SimState
    channel: Channel
    controllers: dict = field(default_factory=dict)

    def trace_lines(self) -> list[str]:
        return trace_lines(self.state.trace)


def _digest(lines) -> str:
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode())
        h.update(b"\n")
    return h.hexdigest()[:16]


def prefix_digests(trace, points=DIGEST_POINTS) -> dict:
    lines = trace_lines(trace)
    out = {}
    for p in points:
        out[str(p)] = _digest(line for line, row in zip(lines, trace) if row[0] < p)
    return out


def simulate(scenario: Scenario, opts: RunOptions) -> Episode:
    rules = default_rules()
    house = scenario.house
    targets = [m.object_id for m in scenario.misplacements]
    state = new_state(house, scenario.team, targets, rules, max_steps=opts.max_steps, seed=opts.seed)
    channel = Channel()
    reasoner = opts.reasoner_factory
    team = make_team(opts.team_policy, scenario.team, house.shape, channel, opts.seed, rules=rules,
                     reasoner=reasoner("team") if reasoner else None, adaptive_note=opts.adaptive_note)
    controllers = {c.agent_id: c for c in team}
    for c in team:
        c.register()

    adhoc_profile = None
    if opts.adhoc_policy != "none":
        if scenario.adhoc is None:
            raise ValueError(f"{scenario.scenario_id} has no ad hoc agent")
        adhoc_profile = replace(scenario.adhoc, join_time=opts.t0)
        if opts.adhoc_manip is not None:
            adhoc_profile = replace(adhoc_profile, alpha_manip=opts.adhoc_manip)
        if opts.t0 < opts.max_steps:
            state.pending.append(adhoc_profile)

    obs = {aid: observe(state, aid) for aid in state.active_ids()}
    outcomes: dict = {}
    diagnostics: list[str] = []
    invalid = False
    joined: list[str] = list(controllers)
    termination = None
    while True:
        if state.pending and state.pending[0].join_time == state.t:
            prof = state.pending.pop(0)
            join_agent(state, prof)
            ctrl = make_adhoc(opts.adhoc_policy, prof, house.shape, channel, opts.seed, rules=rules,
                              reasoner=reasoner(prof.agent_id) if reasoner else None,
                              ablation=opts.ablation, n_irot=opts.n_irot)
            controllers[prof.agent_id] = ctrl
            ctrl.register()
            channel.handshake_on_join(prof, state.t)
            ctrl.on_join(state.t)
            obs[prof.agent_id] = observe(state, prof.agent_id)
            joined.append(prof.agent_id)
        termination = is_terminated(state)
        if termination:
            break
        actions = {}
        try:
            for aid in state.active_ids():
                actions[aid] = controllers[aid].decide(obs[aid], outcomes.get(aid), state.t)
        except (ReasonerError, PlanningError) as exc:
            invalid = True
            diagnostics.append(f"t={state.t}: unrecoverable planner failure: {exc}")
            termination = "invalid"
            break
        state, outcomes, obs = step(state, actions)
        for aid, ctrl in controllers.items():
            ctrl.active = state.agents[aid].active
            if not ctrl.active and isinstance(ctrl, LLMTeammate):
                ctrl.board.withdraw(aid)

    k_suc = sum(1 for o in targets if state.is_placed_reasonably(o))
    success = termination == "success"
    steps = {aid: state.agents[aid].steps_taken for aid in sorted(joined)}
    ts, as_ = episode_costs(success, state.t, steps, opts.max_steps)
    fallbacks = sum(getattr(c, "fallbacks", 0) for c in controllers.values())
    diagnostics.extend(channel.diagnostics)
    record = EpisodeRecord(
        scenario_id=scenario.scenario_id, team_policy=opts.team_policy, adhoc_policy=opts.adhoc_policy,
        t0=opts.t0, seed=opts.seed, K=len(targets), K_suc=k_suc, termination=termination, R=int(success),
        TS=ts, AS=as_, max_steps=opts.max_steps, steps=steps,
        stop_steps={aid: state.agents[aid].stopped_at for aid in sorted(joined)},
        difficulty=scenario.difficulty, n_rooms=house.n_rooms, n_agents=len(joined),
        ablation=opts.ablation, fallbacks=fallbacks, invalid=invalid, diagnostics=diagnostics,
        prefix_digests=prefix_digests(state.trace),
    )
    return Episode(record, state, channel, controllers)


def run_episode(scenario: Scenario, team_policy: str = "heuristic", adhoc_policy: str = "none",
                t0: int = 0, seed: int = 0, **kw) -> EpisodeRecord:
    return simulate(scenario, RunOptions(team_policy, adhoc_policy, t0, seed, **kw)).record


def _run_one(args) -> tuple[EpisodeRecord, list[str], list[str]]:
    scenario, opts, keep_logs = args
    ep = simulate(scenario, opts)
    if not keep_logs:
        return ep.record, [], []
    return ep.record, ep.trace_lines(), ep.channel.log_lines()


def run_suite(scenarios, opts: RunOptions, out_dir=None, jobs: int = 1, logs: bool = True) -> list[EpisodeRecord]:
    """Run every scenario; results are ordered by scenario id whatever the worker count."""
    work = [(s, opts, logs and out_dir is not None) for s in sorted(scenarios, key=lambda s: s.scenario_id)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, work))
    else:
        results = [_run_one(w) for w in work]
    records = []
    for record, trace, msgs in results:
        if out_dir is not None:
            write_episode(out_dir, record, trace, msgs)
        records.append(record)
    return records


def write_episode(out_dir, record: EpisodeRecord, trace: list[str], messages: list[str]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = record.scenario_id
    if trace:
        (out / f"{stem}.trace.jsonl").write_text("".join(line + "\n" for line in trace))
        record.trace_path = f"{stem}.trace.jsonl"
    if messages:
        (out / f"{stem}.messages.jsonl").write_text("".join(line + "\n" for line in messages))
        record.messages_path = f"{stem}.messages.jsonl"
    path = out / f"{stem}.json"
    path.write_text(record.to_json() + "\n")
    return path


def load_records(path) -> list[EpisodeRecord]:
    files = sorted(p for p in Path(path).glob("*.json"))
    return [EpisodeRecord.from_dict(json.loads(p.read_text())) for p in files]

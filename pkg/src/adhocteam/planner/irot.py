"""Interactive reflection of thoughts: generate, rank, then judge against teammate feedback."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .context import PlannerContext
from .reasoner import Reasoner, ReasonerError, RuleReasoner, Verdict
from .subtasks import STOP, SubTask

FLAGS = frozenset({"no_evaluation", "no_reflection"})
ABLATIONS = {
    "ev": frozenset({"no_evaluation"}),
    "rf": frozenset({"no_reflection"}),
    "evrf": frozenset({"no_evaluation", "no_reflection"}),
}
DEFAULT_N_IROT = 3
MAX_REPLAN_ROUNDS = 3


@dataclass
class IRoTRound:
    candidates: list[SubTask] = field(default_factory=list)
    ranked: list[SubTask] = field(default_factory=list)
    verdicts: list[tuple[SubTask, Verdict]] = field(default_factory=list)
    feedback: dict = field(default_factory=dict)


@dataclass
class IRoTTrace:
    rounds: list[IRoTRound] = field(default_factory=list)
    fallbacks: list[str] = field(default_factory=list)
    result: SubTask | None = None
    exhausted: bool = False

    def to_dict(self) -> dict:
        return {
            "rounds": [
                {
                    "candidates": [str(c) for c in r.candidates],
                    "ranked": [str(c) for c in r.ranked],
                    "verdicts": [[str(c), str(v)] for c, v in r.verdicts],
                }
                for r in self.rounds
            ],
            "fallbacks": list(self.fallbacks),
            "result": str(self.result) if self.result else None,
            "exhausted": self.exhausted,
        }


class _Guarded:
    """Calls the primary reasoner and drops to the rule reasoner on failure, noting it."""

    def __init__(self, primary: Reasoner, trace: IRoTTrace, fallback: Reasoner | None = None):
        self.primary = primary
        self.fallback = fallback or RuleReasoner()
        self.trace = trace
        self.failed = False

    def call(self, method: str, *args, **kw):
        if not self.failed:
            try:
                return getattr(self.primary, method)(*args, **kw)
            except ReasonerError as exc:
                self.failed = True
                self.trace.fallbacks.append(f"{method}: {exc}")
        return getattr(self.fallback, method)(*args, **kw)


def _dedupe(items: list[SubTask]) -> list[SubTask]:
    seen, out = set(), []
    for st in items:
        if str(st) not in seen:
            seen.add(str(st))
            out.append(st)
    return out


def plan_subtask_irot(ctx: PlannerContext, reasoner: Reasoner, n_irot: int = DEFAULT_N_IROT,
                      flags=frozenset(), max_replan_rounds: int = MAX_REPLAN_ROUNDS,
                      fallback: Reasoner | None = None,
                      prompt_style: str = "full") -> tuple[SubTask, IRoTTrace]:
    if n_irot < 1:
        raise ValueError("n_irot must be >= 1")
    flags = frozenset(flags)
    if not flags <= FLAGS:
        raise ValueError(f"unknown flags {sorted(flags - FLAGS)}")
    trace = IRoTTrace()
    guard = _Guarded(reasoner, trace, fallback)
    rejected: set[str] = set(ctx.excluded)

    for _ in range(max(1, max_replan_rounds)):
        round_ctx = replace(ctx, excluded=frozenset(rejected), _dist=ctx._dist)
        rnd = IRoTRound()
        trace.rounds.append(rnd)
        proposed = guard.call("propose", round_ctx, n_irot, prompt_style=prompt_style)
        rnd.candidates = _dedupe([st for st, _ in proposed])[:n_irot]
        if not rnd.candidates:
            break
        if "no_evaluation" in flags:
            rnd.ranked = list(rnd.candidates)
        else:
            ranked = [st for st, _ in guard.call("rank", round_ctx, list(rnd.candidates))]
            if sorted(map(str, ranked)) != sorted(map(str, rnd.candidates)):
                trace.fallbacks.append("rank: result was not a permutation of the candidates")
                ranked = [st for st, _ in RuleReasoner().rank(round_ctx, list(rnd.candidates))]
            rnd.ranked = ranked
        if "no_reflection" in flags:
            trace.result = rnd.ranked[0]
            return trace.result, trace
        for cand in rnd.ranked:
            facts = list(ctx.request_feedback(cand)) if ctx.request_feedback else []
            rnd.feedback[str(cand)] = facts
            verdict = guard.call("judge", round_ctx, cand, facts)
            rnd.verdicts.append((cand, verdict))
            if verdict.reasonable:
                trace.result = cand
                return cand, trace
            rejected.add(str(cand))
    trace.exhausted = True
    trace.result = STOP
    return STOP, trace


def cot_plan(ctx: PlannerContext, reasoner: Reasoner,
             fallback: Reasoner | None = None) -> tuple[SubTask, IRoTTrace]:
    """One full-prompt proposal, no ranking and no reflection."""
    return plan_subtask_irot(ctx, reasoner, 1, ABLATIONS["evrf"], fallback=fallback, prompt_style="full")


def naive_plan(ctx: PlannerContext, reasoner: Reasoner,
               fallback: Reasoner | None = None) -> tuple[SubTask, IRoTTrace]:
    """One minimal-prompt proposal, no ranking and no reflection."""
    return plan_subtask_irot(ctx, reasoner, 1, ABLATIONS["evrf"], fallback=fallback, prompt_style="naive")

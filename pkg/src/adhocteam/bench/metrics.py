"""Episode records and the five evaluation metrics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

RECORD_VERSION = 1


class MetricError(ValueError):
    pass


@dataclass
class EpisodeRecord:
    scenario_id: str
    team_policy: str
    adhoc_policy: str
    t0: int
    seed: int
    K: int
    K_suc: int
    termination: str
    R: int
    TS: int
    AS: int
    max_steps: int = 500
    steps: dict = field(default_factory=dict)  # agent id -> steps taken
    stop_steps: dict = field(default_factory=dict)  # agent id -> step it stopped at, or None
    difficulty: str = ""
    n_rooms: int = 0
    n_agents: int = 0
    ablation: str | None = None
    fallbacks: int = 0
    invalid: bool = False
    diagnostics: list = field(default_factory=list)
    prefix_digests: dict = field(default_factory=dict)  # "t" -> digest of the trace before step t
    trace_path: str | None = None
    messages_path: str | None = None

    def __post_init__(self):
        if not 0 <= self.K_suc <= self.K:
            raise MetricError(f"K_suc={self.K_suc} outside [0, K={self.K}]")
        if self.TS > self.max_steps:
            raise MetricError(f"TS={self.TS} exceeds T_max={self.max_steps}")

    @property
    def key(self) -> tuple[str, int]:
        return self.scenario_id, self.seed

    def to_dict(self) -> dict:
        d = asdict(self)
        d["version"] = RECORD_VERSION
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @staticmethod
    def from_dict(d: dict) -> "EpisodeRecord":
        d = dict(d)
        version = d.pop("version", None)
        if version != RECORD_VERSION:
            raise MetricError(f"unsupported record version {version!r}")
        return EpisodeRecord(**d)


def episode_costs(success: bool, end_t: int, steps: dict, max_steps: int) -> tuple[int, int]:
    """(TS, AS) for one episode.

    Successful runs use the actual step count and the per-agent step sum; failed
    runs charge the maximum number of steps to the episode and to every agent.
    """
    if success:
        return end_t, sum(steps.values())
    return max_steps, max_steps * len(steps)


def _valid(records) -> list[EpisodeRecord]:
    out = [r for r in records if not r.invalid]
    if not out:
        raise MetricError("no valid records")
    return out


def metric_suc(records) -> float:
    rs = _valid(records)
    return sum(r.R for r in rs) / len(rs)


def metric_ps(records) -> float:
    rs = _valid(records)
    return sum(r.K_suc / r.K for r in rs) / len(rs)


def metric_ts(records) -> float:
    rs = _valid(records)
    return sum(r.TS for r in rs) / len(rs)


def metric_as(records) -> float:
    rs = _valid(records)
    return sum(r.AS for r in rs) / len(rs)


def se_term(ts_team: float, ts_adhoc: float, r_adhoc: int) -> float:
    return max(0.0, ts_team - ts_adhoc) / ts_team * r_adhoc


def pair_records(baseline, treatment, *, check_prefix: bool = True) -> list[tuple[EpisodeRecord, EpisodeRecord]]:
    """Match team-only and ad hoc runs on (scenario, seed).

    With ``check_prefix`` the trace before the ad hoc agent's join step must be
    identical in both runs, otherwise the pair is not a like-for-like comparison.
    """
    base = {r.key: r for r in baseline}
    pairs = []
    for t in treatment:
        b = base.get(t.key)
        if b is None:
            raise MetricError(f"no baseline run for {t.scenario_id} seed {t.seed}")
        if check_prefix and t.t0 > 0:
            k = str(t.t0)
            if k not in b.prefix_digests or b.prefix_digests[k] != t.prefix_digests.get(k):
                raise MetricError(f"trace before t0={t.t0} differs for {t.scenario_id}")
        pairs.append((b, t))
    if len(pairs) != len(base):
        missing = sorted(set(base) - {t.key for t in treatment})
        raise MetricError(f"baseline runs without a treatment: {missing[:3]}")
    return pairs


def metric_se(pairs) -> float:
    """Mean of max(0, TS_team - TS_adhoc) / TS_team * R_adhoc over paired runs."""
    pairs = [(b, t) for b, t in pairs if not (b.invalid or t.invalid)]
    if not pairs:
        raise MetricError("no valid pairs")
    return sum(se_term(b.TS, t.TS, t.R) for b, t in pairs) / len(pairs)


def improvement(baseline: float, treatment: float, higher_is_better: bool) -> float:
    """Signed improvement in percent; positive always means the treatment is better."""
    if baseline == 0:
        raise MetricError("baseline value is zero")
    if higher_is_better:
        return (treatment - baseline) / baseline * 100.0
    return (baseline - treatment) / baseline * 100.0


METRICS = ("Suc", "PS", "TS", "AS", "SE")
HIGHER_IS_BETTER = {"Suc": True, "PS": True, "TS": False, "AS": False, "SE": True}


@dataclass
class MetricsSummary:
    team_policy: str
    adhoc_policy: str
    t0: int
    n: int
    n_invalid: int
    Suc: float
    PS: float
    TS: float
    AS: float
    SE: float | None = None
    improvements: dict = field(default_factory=dict)  # metric -> percent vs baseline
    group: str = "all"

    def value(self, metric: str):
        return getattr(self, metric)


def summarize(records, baseline=None, group: str = "all") -> MetricsSummary:
    """Aggregate one run; with ``baseline`` records also SE and improvements."""
    records = list(records)
    if not records:
        raise MetricError("no records")
    head = records[0]
    s = MetricsSummary(
        team_policy=head.team_policy, adhoc_policy=head.adhoc_policy, t0=head.t0,
        n=sum(1 for r in records if not r.invalid), n_invalid=sum(1 for r in records if r.invalid),
        Suc=metric_suc(records), PS=metric_ps(records), TS=metric_ts(records), AS=metric_as(records),
        group=group,
    )
    if baseline is not None:
        baseline = list(baseline)
        keys = {r.key for r in records}
        baseline = [b for b in baseline if b.key in keys]
        s.SE = metric_se(pair_records(baseline, records))
        b = summarize(baseline, group=group)
        for m in ("Suc", "PS", "TS", "AS"):
            try:
                s.improvements[m] = improvement(b.value(m), s.value(m), HIGHER_IS_BETTER[m])
            except MetricError:
                s.improvements[m] = None
    return s

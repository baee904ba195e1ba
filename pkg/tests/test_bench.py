from __future__ import annotations

import json

import pytest

from adhocteam.bench.cli import main
from adhocteam.bench.metrics import (
    EpisodeRecord, MetricError, episode_costs, improvement, metric_as, metric_ps, metric_se, metric_suc, metric_ts,
    pair_records, se_term, summarize,
)
from adhocteam.bench.oracle import OracleError, optimal_makespan, tiny_instances
from adhocteam.bench.report import build_summaries, from_csv, to_csv, to_text
from adhocteam.bench.runner import RunOptions, load_records, run_suite, simulate
from adhocteam.bench.suite import BenchmarkSuite, SuiteConfig, build_benchmark

from helpers import knife_scenario, profile


def rec(sid="s1", R=1, K=2, K_suc=2, TS=100, AS=250, policy="none", t0=0, **kw):
    return EpisodeRecord(sid, "heuristic", policy, t0, 0, K, K_suc, "success" if R else "timeout", R, TS, AS, **kw)


@pytest.fixture(scope="module")
def desk():
    return build_benchmark()


# -- records and metrics

def test_episode_costs_charge_failures_the_maximum():
    assert episode_costs(True, 42, {"T1": 40, "T2": 12}, 500) == (42, 52)
    assert episode_costs(False, 130, {"T1": 40, "T2": 12}, 500) == (500, 1000)


def test_record_invariants_are_enforced():
    with pytest.raises(MetricError):
        rec(K=2, K_suc=3)
    with pytest.raises(MetricError):
        rec(TS=501)


def test_record_json_round_trip_and_version():
    r = rec(steps={"T1": 100}, stop_steps={"T1": None}, prefix_digests={"50": "abc"})
    d = json.loads(r.to_json())
    assert EpisodeRecord.from_dict(d) == r
    d["version"] = 99
    with pytest.raises(MetricError):
        EpisodeRecord.from_dict(d)


def test_metrics_on_hand_records():
    rs = [rec("a", 1, 2, 2, 100, 250), rec("b", 0, 4, 1, 500, 1500), rec("c", 1, 1, 1, 40, 60)]
    assert metric_suc(rs) == pytest.approx(2 / 3)
    assert metric_ps(rs) == pytest.approx((1 + 0.25 + 1) / 3)
    assert metric_ts(rs) == pytest.approx(640 / 3)
    assert metric_as(rs) == pytest.approx(1810 / 3)


def test_invalid_records_are_excluded_and_empty_sets_rejected():
    rs = [rec("a", TS=100), rec("b", R=0, K_suc=0, TS=500, invalid=True)]
    assert metric_suc(rs) == 1.0 and metric_ts(rs) == 100
    with pytest.raises(MetricError):
        metric_suc([])
    with pytest.raises(MetricError):
        metric_suc([rec(invalid=True)])


def test_se_terms():
    assert se_term(207, 136, 1) == pytest.approx(71 / 207, abs=1e-12)
    assert se_term(100, 150, 1) == 0.0  # slower never counts negative
    assert se_term(207, 136, 0) == 0.0  # and a failed ad hoc run earns nothing


def test_improvement_sign_convention():
    assert improvement(21.1, 26.3, True) == pytest.approx(24.64, abs=0.01)
    assert improvement(453.2, 399.3, False) == pytest.approx(11.89, abs=0.01)
    assert improvement(1813.3, 1918.1, False) == pytest.approx(-5.78, abs=0.01)
    with pytest.raises(MetricError):
        improvement(0.0, 1.0, True)


def test_pairing_checks_keys_and_prefixes():
    base = [rec("a", TS=200, prefix_digests={"50": "x"}), rec("b", TS=300, prefix_digests={"50": "y"})]
    good = [rec("a", TS=150, policy="irot", t0=50, prefix_digests={"50": "x"}),
            rec("b", TS=300, policy="irot", t0=50, prefix_digests={"50": "y"})]
    pairs = pair_records(base, good)
    assert metric_se(pairs) == pytest.approx((50 / 200) / 2)
    bad = [good[0], rec("b", TS=300, policy="irot", t0=50, prefix_digests={"50": "z"})]
    with pytest.raises(MetricError):
        pair_records(base, bad)
    assert len(pair_records(base, bad, check_prefix=False)) == 2
    with pytest.raises(MetricError):
        pair_records(base, good[:1])
    with pytest.raises(MetricError):
        pair_records(base[:1], good)


def test_summary_with_baseline_has_se_and_improvements():
    base = [rec("a", TS=200, AS=400), rec("b", R=0, K_suc=1, TS=500, AS=1000)]
    treat = [rec("a", TS=100, AS=300, policy="irot"), rec("b", TS=400, AS=900, policy="irot")]
    s = summarize(treat, base)
    assert s.Suc == 1.0 and s.SE == pytest.approx((0.5 + 0.2) / 2)
    assert s.improvements["TS"] == pytest.approx((350 - 250) / 350 * 100)
    assert s.improvements["Suc"] == pytest.approx(100.0)


# -- reports

def test_csv_round_trip_is_exact():
    base = [rec("a", TS=200, difficulty="Easy"), rec("b", TS=333, difficulty="Difficult")]
    treat = [rec("a", TS=150, policy="irot", difficulty="Easy"), rec("b", TS=331, policy="irot", difficulty="Difficult")]
    summaries = build_summaries(base + treat, base)
    assert from_csv(to_csv(summaries)) == summaries


def test_per_difficulty_rows_and_text_layout():
    base = [rec("a", TS=200, difficulty="Easy"), rec("b", TS=333, difficulty="Difficult")]
    summaries = build_summaries(base, by_difficulty=True)
    assert [s.group for s in summaries] == ["all", "Easy", "Difficult"]  # no Medium records, no row
    text = to_text(summaries)
    assert text.splitlines()[0].split() == ["team", "ad", "hoc", "t0", "group", "N", "%Suc", "%PS", "#TS", "#AS",
                                            "%SE"]
    assert "Difficult" in text


# -- suite

def test_desk_suite_shape(desk):
    assert len(desk) == 45 == desk.config.n_scenarios
    counts = {d: sum(1 for s in desk.scenarios if s.difficulty == d) for d in ("Easy", "Medium", "Difficult")}
    assert counts == {"Easy": 15, "Medium": 15, "Difficult": 15}
    assert sorted({len(s.team) for s in desk.scenarios}) == [3, 4, 5]
    assert all(s.adhoc is not None for s in desk.scenarios)


def test_paper_scale_counts():
    cfg = SuiteConfig.paper()
    assert cfg.n_scenarios == 450 and cfg.n_adhoc_tasks == 1350
    assert SuiteConfig.desk().n_adhoc_tasks == 135


def test_suite_file_round_trip(desk, tmp_path):
    path = tmp_path / "suite.json"
    desk.save(path)
    loaded = BenchmarkSuite.load(path)
    assert loaded.digest() == desk.digest()
    assert build_benchmark().digest() == desk.digest()
    assert build_benchmark(master_seed=1).digest() != desk.digest()


# -- runner

def test_records_are_byte_identical_across_runs(desk, tmp_path):
    opts = RunOptions(adhoc_policy="irot", t0=0)
    run_suite(desk.scenarios[:4], opts, out_dir=tmp_path / "a")
    run_suite(desk.scenarios[:4], opts, out_dir=tmp_path / "b", jobs=2)
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(names) == 12  # record, trace and message log per episode
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert [r.scenario_id for r in load_records(tmp_path / "a")] == [s.scenario_id for s in desk.scenarios[:4]]


def test_prejoin_trace_matches_team_only(desk):
    for sc in desk.scenarios[:6]:
        team = simulate(sc, RunOptions()).record
        joined = simulate(sc, RunOptions(adhoc_policy="irot", t0=50)).record
        assert joined.prefix_digests["50"] == team.prefix_digests["50"], sc.scenario_id
        pair_records([team], [joined])


def test_adhoc_agent_is_absent_before_joining():
    sc = knife_scenario(adhoc=profile("T0", start=(3, 6), join=None))
    ep = simulate(sc, RunOptions(adhoc_policy="irot", t0=5))
    assert {row[1] for row in ep.state.trace if row[0] < 5} == {"T1", "T2"}
    assert min(row[0] for row in ep.state.trace if row[1] == "T0") == 5


def test_missing_adhoc_profile_is_an_error():
    with pytest.raises(ValueError):
        simulate(knife_scenario(), RunOptions(adhoc_policy="irot"))


# -- oracle

def test_oracle_on_hand_checked_cases():
    house = knife_scenario().house
    # next to the sofa: pick up, five moves to the counter, put down
    assert optimal_makespan(house, ["Knife_0"], [profile("T1", start=(2, 7))]) == 7
    assert optimal_makespan(house, ["Knife_0"], [profile("T1", start=(2, 2))]) == 12
    pair = [profile("T1", start=(2, 2)), profile("T2", start=(2, 7))]
    assert optimal_makespan(house, ["Knife_0"], pair) == 7
    assert optimal_makespan(house, ["Knife_0"], [profile("T1", manip=False)], max_depth=30) is None
    assert optimal_makespan(house, ["Knife_0"], [profile("T1", payload=0.1)], max_depth=30) is None
    with pytest.raises(OracleError):
        optimal_makespan(house, ["Knife_0"], [profile(f"T{i}") for i in range(3)])


def test_policies_never_beat_the_oracle():
    for inst in tiny_instances(4):
        team = simulate(inst.scenario, RunOptions()).record
        assert team.R == 1 and team.TS >= inst.optimum_team
        with_adhoc = simulate(inst.scenario, RunOptions(adhoc_policy="irot")).record
        assert with_adhoc.TS >= inst.optimum_all


# -- command line

def test_cli_generate_run_report(tmp_path, capsys):
    suite = tmp_path / "suite.json"
    assert main(["generate", "--out", str(suite)]) == 0
    assert "45 scenarios" in capsys.readouterr().out
    base, treat = tmp_path / "base", tmp_path / "irot"
    assert main(["run", "--suite", str(suite), "--limit", "3", "--out", str(base)]) == 0
    assert main(["run", "--suite", str(suite), "--limit", "3", "--adhoc-policy", "irot", "--t0", "50",
                 "--out", str(treat)]) == 0
    assert "3 episodes" in capsys.readouterr().out
    assert main(["report", "--records", str(treat), "--baseline", str(base), "--format", "csv"]) == 0
    rows = from_csv(capsys.readouterr().out)
    assert [(s.adhoc_policy, s.t0, s.n) for s in rows] == [("none", 0, 3), ("irot", 50, 3)]
    assert rows[1].SE is not None and rows[0].SE is None


def test_cli_report_without_records_fails(tmp_path, capsys):
    assert main(["report", "--records", str(tmp_path)]) == 1
    assert "no records" in capsys.readouterr().err

"""``bench`` command line: generate a suite, run a policy pairing, report metrics."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from ..agents.adhoc import ADHOC_POLICIES, TEAM_POLICIES
from ..planner.irot import ABLATIONS
from .metrics import MetricError
from .report import build_summaries, report
from .runner import LLMReasonerFactory, RunOptions, load_records, run_suite
from .suite import BenchmarkSuite, SuiteConfig, build_benchmark


def cmd_generate(args) -> int:
    config = SuiteConfig.paper() if args.paper_scale else SuiteConfig.desk()
    suite = build_benchmark(config, args.seed)
    suite.save(args.out)
    print(f"wrote {len(suite)} scenarios to {args.out} (sha256 {suite.digest()[:16]})")
    return 0


def cmd_run(args) -> int:
    suite = BenchmarkSuite.load(args.suite)
    scenarios = suite.scenarios
    if args.limit:
        scenarios = scenarios[:args.limit]
    factory = None
    if args.llm_url:
        factory = LLMReasonerFactory(args.llm_url, args.llm_model, args.token_budget,
                                     str(Path(args.out) / "llm") if args.llm_log else None)
    opts = RunOptions(
        team_policy=args.team_policy, adhoc_policy=args.adhoc_policy, t0=args.t0, seed=args.seed,
        max_steps=args.max_steps or suite.config.max_steps, ablation=args.irot_ablation,
        adhoc_manip=args.adhoc_manip, adaptive_note=args.adaptive_note, reasoner_factory=factory,
    )
    start = time.perf_counter()
    records = run_suite(scenarios, opts, out_dir=args.out, jobs=args.jobs, logs=not args.no_logs)
    n_ok = sum(r.R for r in records)
    n_bad = sum(r.invalid for r in records)
    print(f"{len(records)} episodes, {n_ok} successful, {n_bad} invalid, "
          f"{time.perf_counter() - start:.1f}s -> {args.out}")
    return 0


def cmd_report(args) -> int:
    records = [r for path in args.records for r in load_records(path)]
    if not records:
        print(f"no records under {', '.join(args.records)}", file=sys.stderr)
        return 1
    baseline = load_records(args.baseline) if args.baseline else None
    if baseline is not None:
        records = baseline + [r for r in records if r.adhoc_policy != "none"]
    try:
        summaries = build_summaries(records, baseline, by_difficulty=args.by_difficulty)
    except MetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(report(summaries, args.format))
    return 0


def _tristate(text: str) -> bool:
    if text.lower() in ("yes", "true", "1"):
        return True
    if text.lower() in ("no", "false", "0"):
        return False
    raise argparse.ArgumentTypeError("expected yes or no")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="Ad hoc teamwork tidying-up benchmark.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="build a benchmark suite file")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--paper-scale", action="store_true", help="10 houses per room count: 450 scenarios, 1350 tasks over the three join times")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run one team/ad hoc pairing over a suite")
    r.add_argument("--suite", required=True)
    r.add_argument("--team-policy", choices=TEAM_POLICIES, default="heuristic")
    r.add_argument("--adhoc-policy", choices=ADHOC_POLICIES, default="none")
    r.add_argument("--t0", type=int, choices=(0, 50, 100), default=0)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--max-steps", type=int, default=None)
    r.add_argument("--limit", type=int, default=None, help="only the first N scenarios")
    r.add_argument("--irot-ablation", choices=sorted(ABLATIONS), default=None,
                   help="ev: no evaluation, rf: no reflection, evrf: neither")
    r.add_argument("--adhoc-manip", type=_tristate, default=None,
                   help="force the ad hoc agent's manipulation ability (yes/no)")
    r.add_argument("--adaptive-note", action="store_true", help="LLM team prompt mentions newcomers")
    r.add_argument("--llm-url", default=None, help="chat-completion endpoint; rule reasoner when absent")
    r.add_argument("--llm-model", default=None)
    r.add_argument("--token-budget", type=int, default=None)
    r.add_argument("--llm-log", action="store_true", help="keep every prompt and reply")
    r.add_argument("--no-logs", action="store_true", help="skip trace and message files")
    r.set_defaults(func=cmd_run)

    q = sub.add_parser("report", help="tabulate metrics for record directories")
    q.add_argument("--records", nargs="+", required=True)
    q.add_argument("--baseline", default=None, help="team-only records for SE and improvements")
    q.add_argument("--format", choices=("csv", "text"), default="text")
    q.add_argument("--by-difficulty", action="store_true")
    q.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())

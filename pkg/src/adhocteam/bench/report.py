"""Comparison tables from metric summaries, as aligned text or CSV."""

from __future__ import annotations

import csv
import io
from collections import defaultdict

from .metrics import METRICS, EpisodeRecord, MetricError, MetricsSummary, summarize

CSV_FIELDS = ("team_policy", "adhoc_policy", "t0", "group", "n", "n_invalid", "Suc", "PS", "TS", "AS", "SE",
              "Suc_impr", "PS_impr", "TS_impr", "AS_impr")
PERCENT = {"Suc", "PS", "SE"}
DIFFICULTIES = ("Easy", "Medium", "Difficult")


def group_runs(records) -> dict[tuple, list[EpisodeRecord]]:
    """Split records into runs keyed by (team policy, ad hoc policy, t0, ablation)."""
    runs: dict[tuple, list[EpisodeRecord]] = defaultdict(list)
    for r in records:
        runs[(r.team_policy, r.adhoc_policy, r.t0, r.ablation)].append(r)
    return dict(sorted(runs.items(), key=lambda kv: (kv[0][0], kv[0][1] != "none", kv[0][1], kv[0][2],
                                                      kv[0][3] or "")))


def build_summaries(records, baseline=None, by_difficulty: bool = False) -> list[MetricsSummary]:
    """One summary per run, plus per-difficulty rows when asked.

    A run whose ad hoc policy is ``none`` is reported plainly; other runs get SE
    and improvements when baseline records are supplied.
    """
    baseline = list(baseline) if baseline is not None else None
    out = []
    for (_, adhoc, _, ablation), recs in group_runs(records).items():
        base = baseline if adhoc != "none" else None
        groups = [("all", recs)]
        if by_difficulty:
            groups += [(d, [r for r in recs if r.difficulty == d]) for d in DIFFICULTIES]
        for name, part in groups:
            if not part:
                continue
            s = summarize(part, baseline=base, group=name)
            if ablation:
                s.adhoc_policy = f"{s.adhoc_policy}[{ablation}]"
            out.append(s)
    return out


def _fmt(metric: str, value) -> str:
    if value is None:
        return "-"
    return f"{value * 100:.1f}" if metric in PERCENT else f"{value:.1f}"


def to_text(summaries) -> str:
    """Aligned table; improvements in percent follow the value in brackets."""
    summaries = list(summaries)
    if not summaries:
        raise MetricError("nothing to report")
    header = ["team", "ad hoc", "t0", "group", "N", "%Suc", "%PS", "#TS", "#AS", "%SE"]
    rows = []
    for s in summaries:
        cells = [s.team_policy, s.adhoc_policy, str(s.t0), s.group, str(s.n)]
        for m in METRICS:
            text = _fmt(m, s.value(m))
            imp = s.improvements.get(m)
            if imp is not None:
                text += f" ({imp:.1f})"
            cells.append(text)
        rows.append(cells)
    widths = [max(len(r[i]) for r in rows + [header]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header] + rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def to_csv(summaries) -> str:
    """CSV with fractions and means at full precision, so it parses back exactly."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for s in summaries:
        row = {"team_policy": s.team_policy, "adhoc_policy": s.adhoc_policy, "t0": s.t0, "group": s.group,
               "n": s.n, "n_invalid": s.n_invalid}
        for m in METRICS:
            row[m] = _num(s.value(m))
        for m in ("Suc", "PS", "TS", "AS"):
            row[f"{m}_impr"] = _num(s.improvements.get(m))
        w.writerow(row)
    return buf.getvalue()


def from_csv(text: str) -> list[MetricsSummary]:
    def opt(v):
        return None if v == "" else float(v)

    out = []
    for row in csv.DictReader(io.StringIO(text)):
        imps = {m: opt(row[f"{m}_impr"]) for m in ("Suc", "PS", "TS", "AS") if row[f"{m}_impr"] != ""}
        out.append(MetricsSummary(
            team_policy=row["team_policy"], adhoc_policy=row["adhoc_policy"], t0=int(row["t0"]),
            n=int(row["n"]), n_invalid=int(row["n_invalid"]), Suc=float(row["Suc"]), PS=float(row["PS"]),
            TS=float(row["TS"]), AS=float(row["AS"]), SE=opt(row["SE"]), improvements=imps, group=row["group"],
        ))
    return out


def report(summaries, fmt: str = "text") -> str:
    if fmt == "csv":
        return to_csv(summaries)
    if fmt == "text":
        return to_text(summaries)
    raise ValueError(f"unknown format {fmt!r}")

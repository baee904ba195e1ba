from __future__ import annotations

import os
import re
from pathlib import Path

import pytest

from adhocteam.comms import ExecutingSubTask, ExploredRoom
from adhocteam.planner.prompts import SECTION_ORDER, STAGE_TAIL, STAGES, build_prompt

from helpers import golden_context

GOLDEN = Path(__file__).parent / "golden"
EXTRAS = {
    "generation": {"n": 3},
    "evaluation": {"candidates": ["Explore(room_0)", "RePlace(Knife_0, CounterTop, kitchen)", "Stop"]},
    "rejudging": {"subtask": "RePlace(Knife_0, CounterTop, kitchen)",
                  "facts": [ExploredRoom("room_0", 1.0), ExecutingSubTask("T2", "Explore(room_0)")]},
    "subskill": {"subtask": "RePlace(Knife_0, CounterTop, kitchen)"},
}


def split_sections(text: str) -> list[tuple[str, str]]:
    parts = re.split(r"^## (\w+)\n", text, flags=re.MULTILINE)
    return [(parts[i], parts[i + 1].rstrip("\n")) for i in range(1, len(parts), 2)]


def bundle_for(stage: str):
    return build_prompt(stage, golden_context(), EXTRAS[stage])


@pytest.mark.parametrize("stage", STAGES)
def test_prompt_matches_golden_file(stage):
    bundle = bundle_for(stage)
    path = GOLDEN / f"{stage}.txt"
    if os.environ.get("UPDATE_GOLDEN"):
        path.write_text(bundle.render())
    golden = split_sections(path.read_text())
    assert [n for n, _ in golden] == list(SECTION_ORDER) + [STAGE_TAIL[stage]]
    assert [n for n, _ in golden] == bundle.names()
    for (name, want), (_, got) in zip(golden, bundle.sections):
        assert got == want, f"section {name} of the {stage} prompt changed"

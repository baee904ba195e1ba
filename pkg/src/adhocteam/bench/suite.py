"""Benchmark suite construction and its JSON file format."""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..world import (
    House, Scenario, WorldError, check_house, generate_adhoc_agent, generate_house, generate_scenario,
    generate_team,
)

SUITE_VERSION = 1
MAX_HOUSE_ATTEMPTS = 50


@dataclass
class SuiteConfig:
    room_counts: tuple = (1, 2, 3, 4, 5, 6, 7, 8, 10)
    houses_per_count: int = 1
    k_values: tuple = (1, 2, 3, 4, 5)
    team_sizes: tuple = (3, 4, 5)
    t0_values: tuple = (0, 50, 100)
    room_size: int = 5
    max_steps: int = 500

    @staticmethod
    def desk() -> "SuiteConfig":
        return SuiteConfig()

    @staticmethod
    def paper() -> "SuiteConfig":
        return SuiteConfig(houses_per_count=10)

    @property
    def n_scenarios(self) -> int:
        return len(self.room_counts) * self.houses_per_count * len(self.k_values)

    @property
    def n_adhoc_tasks(self) -> int:
        """Scenarios times join times, counting each (scenario, t0) pairing once."""
        return self.n_scenarios * len(self.t0_values)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @staticmethod
    def from_dict(d: dict) -> "SuiteConfig":
        return SuiteConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class BenchmarkSuite:
    config: SuiteConfig
    master_seed: int
    scenarios: list[Scenario] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.scenarios)

    def by_id(self, scenario_id: str) -> Scenario:
        for s in self.scenarios:
            if s.scenario_id == scenario_id:
                return s
        raise KeyError(scenario_id)

    def to_dict(self) -> dict:
        return {
            "version": SUITE_VERSION,
            "master_seed": self.master_seed,
            "config": self.config.to_dict(),
            "scenarios": [s.to_dict() for s in self.scenarios],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @staticmethod
    def from_dict(d: dict) -> "BenchmarkSuite":
        if d.get("version") != SUITE_VERSION:
            raise WorldError(f"unsupported suite version {d.get('version')!r}")
        return BenchmarkSuite(SuiteConfig.from_dict(d["config"]), d["master_seed"],
                              [Scenario.from_dict(s) for s in d["scenarios"]])

    @staticmethod
    def load(path) -> "BenchmarkSuite":
        return BenchmarkSuite.from_dict(json.loads(Path(path).read_text()))


def _house(master_seed: int, n_rooms: int, index: int, need: int, room_size: int) -> House:
    rng = random.Random(f"house:{master_seed}:{n_rooms}:{index}")
    for _ in range(MAX_HOUSE_ATTEMPTS):
        seed = rng.randrange(1 << 30)
        house = generate_house(seed, n_rooms, room_size=room_size)
        if len(house.objects) >= need:
            check_house(house)
            return house
    raise WorldError(f"no {n_rooms}-room house with {need} objects after {MAX_HOUSE_ATTEMPTS} seeds")


def build_benchmark(config: SuiteConfig | None = None, master_seed: int = 0) -> BenchmarkSuite:
    """Houses per room count, one task per k, team sizes rotating over the task list."""
    config = config or SuiteConfig.desk()
    scenarios = []
    n = 0
    for n_rooms in config.room_counts:
        for i in range(config.houses_per_count):
            house = _house(master_seed, n_rooms, i, max(config.k_values), config.room_size)
            for k in config.k_values:
                seed = master_seed * 100_003 + n
                sc = generate_scenario(house, k, seed, scenario_id=f"task{n:04d}-r{n_rooms}-h{i}-k{k}")
                size = config.team_sizes[n % len(config.team_sizes)]
                sc.team = generate_team(seed, size, house)
                sc.adhoc = generate_adhoc_agent(seed, house, taken=[p.start_position for p in sc.team])
                scenarios.append(sc)
                n += 1
    return BenchmarkSuite(config, master_seed, scenarios)

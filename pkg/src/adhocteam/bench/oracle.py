"""Exhaustive optimal-makespan search on tiny instances.

The search runs over joint symbolic states (agent cells, where each misplaced
object is) of a relaxed model: agents know the whole house from the start,
have no facing, pitch or battery, and may share cells. Every real trajectory
maps onto a relaxed one that is no longer, so the breadth-first depth at which
all objects are reasonably placed is a lower bound on any policy's step count.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from ..engine import chebyshev
from ..world import (
    AgentProfile, House, PlacementRules, Scenario, default_rules, generate_house, generate_scenario,
    neighbors4,
)

MAX_DEPTH = 200
TINY_ROOM_SIZE = 3


class OracleError(RuntimeError):
    pass


def _object_cell(house: House, loc) -> tuple[int, int]:
    kind, ref = loc
    if kind == "on":
        return house.receptacle(ref).position
    return ref


def optimal_makespan(house: House, targets: list[str], agents: list[AgentProfile],
                     rules: PlacementRules | None = None, max_depth: int = MAX_DEPTH) -> int | None:
    """Fewest joint steps until every target is reasonably placed; None if not within ``max_depth``."""
    rules = rules or default_rules()
    if len(agents) > 2 or len(targets) > 2:
        raise OracleError("the oracle is meant for at most two agents and two objects")
    objects = {o.object_id: o for o in house.objects}
    passable = set(house.free_cells())
    moves = {c: [c] + [nb for nb in neighbors4(c) if nb in passable] for c in passable}
    good = {}
    for oid in targets:
        o = objects[oid]
        good[oid] = [r.receptacle_id for r in house.receptacles
                     if not rules.is_misplaced(o.object_type, r.receptacle_type, house.room(r.room_id).room_type)]
    near_recs = {c: [r for r in house.receptacles if chebyshev(c, r.position) <= 1] for c in passable}

    def loc0(oid):
        loc = objects[oid].location
        return ("on", loc.ref) if loc.kind == "on" else ("floor", loc.ref)

    def done(locs) -> bool:
        return all(l[0] == "on" and l[1] in good[oid] for oid, l in zip(targets, locs))

    def options(i, pos, locs):
        """(new cell, object index or None, new location) choices for agent ``i``."""
        prof = agents[i]
        out = [(nxt, None, None) for nxt in moves[pos]]
        if not prof.alpha_manip:
            return out
        held = next((j for j, l in enumerate(locs) if l == ("held", i)), None)
        if held is None:
            for j, l in enumerate(locs):
                if l[0] != "held" and objects[targets[j]].mass <= prof.payload \
                        and chebyshev(pos, _object_cell(house, l)) <= 1:
                    out.append((pos, j, ("held", i)))
        else:
            for r in near_recs[pos]:
                out.append((pos, held, ("on", r.receptacle_id)))
            out.append((pos, held, ("floor", pos)))
        return out

    start = (tuple(a.start_position for a in agents), tuple(loc0(o) for o in targets))
    if done(start[1]):
        return 0
    seen = {start}
    frontier = [start]
    for depth in range(1, max_depth + 1):
        nxt_frontier = []
        for positions, locs in frontier:
            per_agent = [options(i, p, locs) for i, p in enumerate(positions)]
            for combo in _product(per_agent):
                new_locs = list(locs)
                clash = False
                for _, j, loc in combo:
                    if j is None:
                        continue
                    if new_locs[j] != locs[j]:
                        clash = True  # two agents grabbing the same object in one step
                        break
                    new_locs[j] = loc
                if clash:
                    continue
                state = (tuple(c for c, _, _ in combo), tuple(new_locs))
                if state in seen:
                    continue
                if done(state[1]):
                    return depth
                seen.add(state)
                nxt_frontier.append(state)
        if not nxt_frontier:
            return None
        frontier = nxt_frontier
    return None


def _product(lists):
    if len(lists) == 1:
        return [(a,) for a in lists[0]]
    return [(a, b) for a in lists[0] for b in lists[1]]


def scenario_optimum(scenario: Scenario, with_adhoc: bool = False, **kw) -> int | None:
    agents = list(scenario.team)
    if with_adhoc and scenario.adhoc is not None:
        agents.append(scenario.adhoc)
    return optimal_makespan(scenario.house, [m.object_id for m in scenario.misplacements], agents, **kw)


@dataclass
class TinyInstance:
    scenario: Scenario
    optimum_team: int
    optimum_all: int


def tiny_instances(n: int = 12, seed: int = 0, rules: PlacementRules | None = None) -> list[TinyInstance]:
    """Small solvable scenarios: one or two rooms, one or two misplacements, one
    teammate plus the ad hoc agent, both strong enough to lift every object."""
    rules = rules or default_rules()
    rng = random.Random(f"tiny:{seed}")
    out = []
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 50 * n:
            raise OracleError("could not build enough tiny instances")
        idx = len(out)
        house = generate_house(rng.randrange(1 << 30), 1 + idx % 2, rules, room_size=TINY_ROOM_SIZE)
        k = 1 + (idx // 2) % 2
        if len(house.objects) < k:
            continue
        sc = generate_scenario(house, k, rng.randrange(1 << 30), rules, scenario_id=f"tiny{idx:02d}")
        free = sorted(set(house.free_cells()))
        a, b = rng.sample(free, 2)
        heavy = max(o.mass for o in house.objects) + 1.0
        team = AgentProfile("T1", True, True, rng.randint(0, 1), heavy, 500, a, 0)
        sc.team = [team]
        sc.adhoc = AgentProfile("T0", True, True, rng.randint(0, 1), heavy, 500, b, None)
        opt_team = scenario_optimum(sc, rules=rules)
        opt_all = scenario_optimum(sc, with_adhoc=True, rules=rules)
        if opt_team is None or opt_all is None:
            continue
        out.append(TinyInstance(sc, opt_team, opt_all))
    return out


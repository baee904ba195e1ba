"""Hand-built houses and contexts shared by the unit tests."""

from __future__ import annotations

from adhocteam.engine import new_state, observe
from adhocteam.perception import Perception
from adhocteam.planner.context import PlannerContext
from adhocteam.world import (
    DOOR, FLOOR, WALL, AgentProfile, House, Location, Misplacement, ObjectInstance, ReceptacleInstance, Room,
    Scenario, default_rules,
)

# kitchen on the left, living room on the right, one door between them
ROWS = (
    "##########",
    "#....#...#",
    "#....+...#",
    "#....#...#",
    "##########",
)
ROOMS = (("room_0", "kitchen", 1, 4), ("room_1", "living_room", 6, 8))
RECEPTACLES = (
    ("CounterTop_0", "CounterTop", (1, 1), "low", "room_0"),
    ("Fridge_0", "Fridge", (3, 1), "low", "room_0"),
    ("Sofa_0", "Sofa", (1, 8), "low", "room_1"),
    ("CoffeeTable_0", "CoffeeTable", (3, 8), "floor", "room_1"),
)


def two_room_house(objects=None) -> House:
    kinds = {"#": WALL, "+": DOOR, ".": FLOOR}
    grid = [[kinds[ch] for ch in row] for row in ROWS]
    room_map = [[-1] * len(ROWS[0]) for _ in ROWS]
    for idx, (_, _, c0, c1) in enumerate(ROOMS):
        for r in range(1, 4):
            for c in range(c0, c1 + 1):
                room_map[r][c] = idx
    rooms = [Room(rid, rtype) for rid, rtype, _, _ in ROOMS]
    recs = [ReceptacleInstance(*spec) for spec in RECEPTACLES]
    if objects is None:
        objects = [
            ObjectInstance("Knife_0", "Knife", 0.5, Location.on("Sofa_0")),
            ObjectInstance("Apple_0", "Apple", 0.3, Location.on("Fridge_0")),
        ]
    return House(grid, room_map, rooms, recs, list(objects), seed=0)


def profile(agent_id="T1", manip=True, height=0, payload=10.0, battery=500, start=(2, 2), join=0):
    return AgentProfile(agent_id, True, manip, height, payload, battery, start, join)


def knife_scenario(team=None, adhoc=None) -> Scenario:
    """Knife_0 left on the sofa; its only reasonable spot is the kitchen counter."""
    house = two_room_house()
    mis = [Misplacement("Knife_0", "CounterTop_0", Location.on("Sofa_0"))]
    team = team if team is not None else [profile("T1", start=(2, 2)), profile("T2", manip=False, start=(2, 3))]
    return Scenario("knife", house, mis, team=team, adhoc=adhoc, seed=0)


def seen_state(scenario: Scenario, agent_id: str = "T1", pitch: str | None = None):
    state = new_state(scenario.house, scenario.team, [m.object_id for m in scenario.misplacements],
                      default_rules())
    if pitch:
        state.agents[agent_id].pitch = pitch
    return state


def context_after_looking(scenario: Scenario, agent_id: str = "T1", positions=(), **kw) -> PlannerContext:
    """A planner context for ``agent_id`` after observing from each cell in ``positions``."""
    state = seen_state(scenario, agent_id)
    agent = state.agents[agent_id]
    perception = Perception(agent_id, scenario.house.shape)
    for pos in positions or (agent.position,):
        agent.position = pos
        for pitch in ("level", "down", "up"):
            agent.pitch = pitch
            perception.update(observe(state, agent_id))
    holding = kw.pop("holding", None)
    return PlannerContext(agent_id, agent.profile, 0, agent.position, holding, perception, **kw)


def golden_context() -> PlannerContext:
    """Fixed context behind the prompt snapshots: T1 in the living room, knife in view."""
    from adhocteam.planner.context import TeammateInfo

    ctx = context_after_looking(knife_scenario(), "T1", [(2, 2), (2, 7)])
    ctx.t = 42
    ctx.teammates = {"T2": TeammateInfo("T2", profile("T2", manip=False, start=(2, 3)), "Explore(room_0)", "started")}
    ctx.memory = [
        "t=12 T2: SubTaskStatus Explore(room_0) started",
        "t=30 T2: KeyDetection Apple_0 on Fridge_0 in place",
    ]
    return ctx

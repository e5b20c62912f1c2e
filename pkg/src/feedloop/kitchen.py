"""Discrete kitchen mobile-manipulation world.

Named locations, household objects, precondition-gated skills with
configurable stochastic failure, symbolic affordance filtering, and
knock-from-gripper disturbances. There is no navigation geometry: moving
between locations is a single skill.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import UnaffordedSkill, UnknownTask

GRIPPER = "gripper"
DRAWER = "drawer"     # object_at value "drawer" means inside the drawer
USER = "user"

DEFAULT_LOCATIONS = ("counter", "table", "trash", "drawer", "user")

DEFAULT_OBJECTS = (
    "coke", "sprite", "mountain dew", "water", "tea", "grapefruit soda",
    "kettle chips", "rice chips", "multigrain chips",
    "apple", "orange", "banana", "sponge", "energy bar", "trailmix",
)

NAVIGATION_SKILLS = ("find", "go_to", "bring_to_user")
MANIPULATION_SKILLS = ("pick_up", "put_down", "open_drawer", "close_drawer")

_VOWELS = "aeiou"


def _article(noun: str) -> str:
    return "an" if noun[:1].lower() in _VOWELS else "a"


@dataclass(frozen=True)
class Skill:
    """A primitive with the language description the planner emits."""

    name: str                 # find | pick_up | go_to | put_down | bring_to_user
    arg: Optional[str] = None  # | open_drawer | close_drawer | done

    def description(self) -> str:
        if self.name == "find":
            return f"find {_article(self.arg)} {self.arg}"
        if self.name == "pick_up":
            return f"pick up the {self.arg}"
        if self.name == "go_to":
            return f"go to the {self.arg}"
        if self.name == "put_down":
            return f"put down the {self.arg}"
        if self.name == "bring_to_user":
            return "bring it to you"
        if self.name == "open_drawer":
            return "open the drawer"
        if self.name == "close_drawer":
            return "close the drawer"
        if self.name == "done":
            return "done."
        raise ValueError(f"unknown skill {self.name!r}")

    @property
    def family(self) -> str:
        return "navigation" if self.name in NAVIGATION_SKILLS else "manipulation"


@dataclass
class KitchenState:
    robot_at: str
    holding: Optional[str]
    object_at: dict[str, str]   # object -> location | "gripper" | "drawer"
    drawer_open: bool = False

    def __post_init__(self) -> None:
        held = [o for o, p in self.object_at.items() if p == GRIPPER]
        if self.holding is None:
            assert not held, "object_at says gripper but holding is None"
        else:
            assert held == [self.holding], "holding and object_at disagree"

    def copy(self) -> "KitchenState":
        return KitchenState(self.robot_at, self.holding, dict(self.object_at),
                            self.drawer_open)

    def objects_at(self, place: str) -> list[str]:
        return sorted(o for o, p in self.object_at.items() if p == place)

    def visible_here(self) -> list[str]:
        """Objects the robot can currently see at its location. Drawer
        contents are visible only while standing at the open drawer."""
        if self.robot_at == DRAWER and not self.drawer_open:
            return []
        return self.objects_at(self.robot_at)


@dataclass
class KitchenScenario:
    locations: tuple[str, ...] = DEFAULT_LOCATIONS
    placement: dict[str, str] = field(default_factory=dict)  # object -> place
    robot_at: str = USER
    drawer_open: bool = False
    categories: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def initial_state(self) -> KitchenState:
        return KitchenState(robot_at=self.robot_at, holding=None,
                            object_at=dict(self.placement),
                            drawer_open=self.drawer_open)

    @property
    def objects(self) -> tuple[str, ...]:
        return tuple(self.placement)


DEFAULT_CATEGORIES = {
    "soda": ("coke", "sprite", "mountain dew", "grapefruit soda"),
    "caffeinated drink": ("coke", "mountain dew", "tea"),
    "snack": ("kettle chips", "rice chips", "multigrain chips",
              "energy bar", "trailmix"),
    "fruit": ("apple", "orange", "banana"),
    "cleaning item": ("sponge",),
    "jalapeno or kettle chips": ("kettle chips",),
}


def default_scenario() -> KitchenScenario:
    placement = {
        "coke": "table", "sprite": "table", "grapefruit soda": "table",
        "kettle chips": "table", "apple": "table", "orange": "table",
        "water": "counter", "tea": "counter", "sponge": "counter",
        "energy bar": "counter", "multigrain chips": "counter",
        "trailmix": "counter", "banana": "counter",
        "rice chips": DRAWER, "mountain dew": DRAWER,
    }
    assert set(placement) == set(DEFAULT_OBJECTS)
    return KitchenScenario(placement=placement, categories=dict(DEFAULT_CATEGORIES))


@dataclass
class SkillOutcomeModel:
    """Stochastic skill outcomes plus scripted adversarial failures.

    forced_failures maps (canonical skill description, 1-based attempt
    index) to a forced failure of that attempt. knock_prob is the chance
    that a failed skill knocks a held object out of the gripper onto the
    robot's current location.
    """

    base_success: dict[str, float] = field(
        default_factory=lambda: {"navigation": 1.0, "manipulation": 0.9})
    forced_failures: dict[tuple[str, int], bool] = field(default_factory=dict)
    knock_prob: float = 0.0

    def __post_init__(self) -> None:
        for v in self.base_success.values():
            assert 0.0 <= v <= 1.0
        assert 0.0 <= self.knock_prob <= 1.0

    def sample_outcome(self, skill: Skill, attempt: int,
                       rng: np.random.Generator) -> bool:
        if self.forced_failures.get((skill.description(), attempt), False):
            return False
        p = self.base_success.get(skill.family, 1.0)
        return bool(rng.random() < p) if p < 1.0 else True

    @classmethod
    def reliable(cls) -> "SkillOutcomeModel":
        return cls(base_success={"navigation": 1.0, "manipulation": 1.0})


def skill_precondition(state: KitchenState, skill: Skill) -> bool:
    """Symbolic affordance check standing in for value-function grounding."""
    if skill.name in ("find", "go_to", "bring_to_user", "done"):
        return True
    if skill.name == "pick_up":
        if state.holding is not None:
            return False
        place = state.object_at.get(skill.arg)
        if place is None or place == GRIPPER:
            return False
        if place == DRAWER:
            return state.robot_at == DRAWER and state.drawer_open
        return state.robot_at == place
    if skill.name == "put_down":
        if state.holding != skill.arg:
            return False
        # depositing into the drawer needs it open
        return state.robot_at != DRAWER or state.drawer_open
    if skill.name in ("open_drawer", "close_drawer"):
        return state.robot_at == DRAWER
    return False


def affordance_filter(state: KitchenState, candidates: Iterable[Skill]) -> list[Skill]:
    return [s for s in candidates if skill_precondition(state, s)]


def all_skills(scenario: KitchenScenario) -> list[Skill]:
    out: list[Skill] = []
    for obj in scenario.objects:
        out.append(Skill("find", obj))
        out.append(Skill("pick_up", obj))
        out.append(Skill("put_down", obj))
    for loc in scenario.locations:
        out.append(Skill("go_to", loc))
    out.extend([Skill("bring_to_user"), Skill("open_drawer"),
                Skill("close_drawer"), Skill("done")])
    return out


def _apply_skill(state: KitchenState, skill: Skill) -> KitchenState:
    new = state.copy()
    if skill.name == "find":
        place = state.object_at.get(skill.arg)
        if place is not None and place != GRIPPER:
            new.robot_at = place
    elif skill.name == "go_to":
        new.robot_at = skill.arg
    elif skill.name == "bring_to_user":
        new.robot_at = USER
    elif skill.name == "pick_up":
        new.holding = skill.arg
        new.object_at[skill.arg] = GRIPPER
    elif skill.name == "put_down":
        new.holding = None
        new.object_at[skill.arg] = state.robot_at
    elif skill.name == "open_drawer":
        new.drawer_open = True
    elif skill.name == "close_drawer":
        new.drawer_open = False
    return new


def execute_skill(
    state: KitchenState,
    skill: Skill,
    outcome_model: SkillOutcomeModel,
    rng: np.random.Generator,
    attempt: int = 1,
    bypass_affordance: bool = False,
) -> tuple[KitchenState, bool]:
    """Run one skill. On failure the state is unchanged, except a failed
    skill may knock a held object onto the robot's current location.

    Raises UnaffordedSkill when preconditions are violated and the caller
    did not request bypass; with bypass the attempt simply fails (this is
    how open-loop planners blindly execute infeasible steps).
    """
    if skill.name == "done":
        return state.copy(), True
    afforded = skill_precondition(state, skill)
    if not afforded and not bypass_affordance:
        raise UnaffordedSkill(f"{skill.description()!r} preconditions violated")
    succeeded = afforded and outcome_model.sample_outcome(skill, attempt, rng)
    if succeeded:
        return _apply_skill(state, skill), True
    new = state.copy()
    if (new.holding is not None and outcome_model.knock_prob > 0.0
            and float(rng.random()) < outcome_model.knock_prob):
        dropped = new.holding
        new.holding = None
        new.object_at[dropped] = new.robot_at
    return new, False


# ---------------------------------------------------------------------------
# Task registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KitchenTask:
    id: str
    instruction: str
    kind: str                 # hold | deliver | relocate | drawer_open | into_drawer
    category: Optional[str] = None   # satisfier category for hold/deliver
    destination: Optional[str] = None


KITCHEN_TASKS: dict[str, KitchenTask] = {
    t.id: t for t in (
        KitchenTask("pick_up_soda", "pick up a soda", "hold", category="soda"),
        KitchenTask("pick_up_jalapeno_or_kettle_chips",
                    "pick up the jalapeno or kettle chips", "hold",
                    category="jalapeno or kettle chips"),
        KitchenTask("pick_up_snack", "pick up a snack", "hold", category="snack"),
        KitchenTask("pick_up_caffeinated_drink", "pick up a caffeinated drink",
                    "hold", category="caffeinated drink"),
        KitchenTask("throw_away_table_soda",
                    "can you throw away the soda on the table", "relocate",
                    category="soda", destination="trash"),
        KitchenTask("bring_cleaning_item",
                    "I spilled my coke, can you bring me something to clean it up",
                    "deliver", category="cleaning item"),
        KitchenTask("leave_drawer_open", "leave the top drawer open", "drawer_open"),
        KitchenTask("coke_in_drawer", "put a coke in the top drawer", "into_drawer",
                    category=None),
    )
}


def satisfiers(task: KitchenTask, scenario: KitchenScenario) -> list[str]:
    """Objects that can satisfy the task, in deterministic preference order."""
    if task.id == "coke_in_drawer":
        pool: tuple[str, ...] = ("coke",)
    elif task.category is not None:
        pool = scenario.categories.get(task.category, ())
    else:
        pool = ()
    if task.id == "throw_away_table_soda":
        pool = tuple(o for o in pool if scenario.placement.get(o) == "table")
    return sorted(o for o in pool if o in scenario.objects)


def kitchen_goal_satisfied(task_id: str, state: KitchenState,
                           scenario: KitchenScenario) -> bool:
    task = KITCHEN_TASKS.get(task_id)
    if task is None:
        raise UnknownTask(f"unregistered kitchen task {task_id!r}")
    sats = satisfiers(task, scenario)
    if task.kind == "hold":
        return state.holding in sats
    if task.kind == "deliver":
        return any(state.object_at.get(o) == USER for o in sats)
    if task.kind == "relocate":
        return any(state.object_at.get(o) == task.destination for o in sats)
    if task.kind == "drawer_open":
        return state.drawer_open
    if task.kind == "into_drawer":
        return state.object_at.get("coke") == DRAWER
    raise UnknownTask(f"unhandled task kind {task.kind!r}")


# ---------------------------------------------------------------------------
# Scenario config files
# ---------------------------------------------------------------------------

def scenario_to_json(scenario: KitchenScenario, outcome: SkillOutcomeModel) -> str:
    doc = {
        "locations": list(scenario.locations),
        "placement": dict(scenario.placement),
        "robot_at": scenario.robot_at,
        "drawer_open": scenario.drawer_open,
        "categories": {k: list(v) for k, v in scenario.categories.items()},
        "outcome": {
            "base_success": dict(outcome.base_success),
            "forced_failures": [[d, a] for (d, a) in sorted(outcome.forced_failures)],
            "knock_prob": outcome.knock_prob,
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def scenario_from_json(text: str) -> tuple[KitchenScenario, SkillOutcomeModel]:
    doc = json.loads(text)
    scenario = KitchenScenario(
        locations=tuple(doc.get("locations", DEFAULT_LOCATIONS)),
        placement=dict(doc["placement"]),
        robot_at=doc.get("robot_at", USER),
        drawer_open=bool(doc.get("drawer_open", False)),
        categories={k: tuple(v) for k, v in doc.get("categories", {}).items()},
    )
    out = doc.get("outcome", {})
    outcome = SkillOutcomeModel(
        base_success=dict(out.get("base_success", {"navigation": 1.0,
                                                   "manipulation": 0.9})),
        forced_failures={(d, int(a)): True
                         for d, a in out.get("forced_failures", [])},
        knock_prob=float(out.get("knock_prob", 0.0)),
    )
    return scenario, outcome

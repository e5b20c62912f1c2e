"""Planners: a deterministic rule-based oracle per environment, and an
LLM-backed planner that delegates to a completion client.

Planners produce raw completion text continuing the prompt cue; the
harness parses it back through the dialect grammar, so oracle output is
grammar-conformant by construction. Oracles are stateless between calls:
everything they know is reconstructed from the transcript.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Protocol

from .errors import NoFeasibleAction
from .kitchen import DRAWER, USER, KitchenScenario, KitchenTask, Skill, satisfiers
from .tabletop import CORNER_NAMES, TabletopTask, TaskFamily
from .transcript import (KITCHEN_ACTIVE, SIM, AchievedSubgoals, Instruction,
                         RobotAction, SceneObjects, SubGoal, Success,
                         Terminate, Transcript, _REAL_ACTION_RE,
                         _SIM_ACTION_RE, parse_kitchen_skill,
                         render_goal_state, render_real_action,
                         render_sim_action)


@dataclass
class PlannerQuery:
    prompt: str
    cue: str
    dialect: str
    expect: str = "action"            # "action" | "thought"
    stop: tuple[str, ...] = ("\n",)
    temperature: float = 0.0
    max_tokens: int = 128


class Planner(Protocol):
    def next_completion(self, transcript: Transcript, query: PlannerQuery) -> str:
        ...


@dataclass
class OraclePolicy:
    retry_on_failure: bool = True
    replan_on_regression: bool = True


def infer_goals(task: TabletopTask, blocks: list[str],
                bowls: list[str]) -> list[SubGoal]:
    """Deterministic sub-goal inference: blocks in lexicographic order,
    stacking goals base-up."""
    blocks = sorted(blocks)
    bowls = sorted(bowls)
    fam = task.family
    if fam == TaskFamily.PICK_AND_PLACE:
        return [SubGoal(task.pick, task.place)]
    if fam == TaskFamily.STACK_ALL:
        return [SubGoal(t, b) for b, t in zip(blocks, blocks[1:])]
    if fam in (TaskFamily.ALL_ON_LOCATION, TaskFamily.ALL_IN_BOWL):
        return [SubGoal(b, task.place) for b in blocks]
    if fam == TaskFamily.DIFFERENT_CORNERS:
        return [SubGoal(b, c) for b, c in zip(blocks, CORNER_NAMES)]
    if fam == TaskFamily.MATCHING_BOWLS:
        return [SubGoal(b, b.replace(" block", " bowl")) for b in blocks]
    if fam == TaskFamily.MISMATCHED_BOWLS:
        out = []
        for b in blocks:
            color = b.replace(" block", "")
            others = [w for w in bowls if not w.startswith(color + " ")]
            out.append(SubGoal(b, others[0]))
        return out
    if fam == TaskFamily.STACK_ON_LOCATION:
        out = [SubGoal(blocks[0], task.place)]
        out.extend(SubGoal(t, b) for b, t in zip(blocks, blocks[1:]))
        return out
    raise ValueError(f"no goal inference for family {fam!r}")


def _action_subgoal(text: str) -> Optional[SubGoal]:
    m = _SIM_ACTION_RE.match(text) or _REAL_ACTION_RE.search(text)
    if m:
        return SubGoal(m.group("pick").strip().lower(),
                       m.group("place").strip().lower())
    return None


class TabletopOracle:
    """Sub-goal tracking planner for the sim and real tabletop dialects."""

    def __init__(self, task: TabletopTask, policy: OraclePolicy | None = None):
        self.task = task
        self.policy = policy or OraclePolicy()

    # -- transcript digestion ------------------------------------------------

    def _known_objects(self, t: Transcript) -> tuple[list[str], list[str]]:
        blocks: list[str] = []
        bowls: list[str] = []
        seen: set[str] = set()
        for e in t.entries:
            if isinstance(e, SceneObjects):
                for n in list(e.visible) + list(e.occluded or ()):
                    if n in seen:
                        continue
                    seen.add(n)
                    (bowls if n.endswith(" bowl") else blocks).append(n)
                if t.dialect == SIM:
                    break    # sim scene is the episode-start inventory
        return blocks, bowls

    def _met_goals(self, t: Transcript, goals: list[SubGoal],
                   scene_on: bool) -> set[SubGoal]:
        if scene_on:
            achieved: set[SubGoal] = set()
            latest: Optional[AchievedSubgoals] = None
            for e in t.entries:
                if isinstance(e, AchievedSubgoals):
                    latest = e
                    if not self.policy.replan_on_regression:
                        achieved |= set(e.goals)
            if self.policy.replan_on_regression:
                return set(latest.goals) if latest else set()
            return achieved
        # estimate from Success entries; without them assume actions worked
        met: set[SubGoal] = set()
        entries = t.entries
        for i, e in enumerate(entries):
            if not isinstance(e, RobotAction):
                continue
            g = _action_subgoal(e.text)
            if g is None:
                continue
            verdict: Optional[bool] = None
            for nxt in entries[i + 1:]:
                if isinstance(nxt, (RobotAction, Terminate)):
                    break
                if isinstance(nxt, Success):
                    verdict = nxt.ok
                    break
            if verdict is None or verdict:
                met.add(g)
            elif not self.policy.retry_on_failure:
                met.add(g)   # attempted once and abandoned
            else:
                met.discard(g)
        return met

    # -- planning ------------------------------------------------------------

    def next_completion(self, t: Transcript, query: PlannerQuery) -> str:
        blocks, bowls = self._known_objects(t)
        goals = infer_goals(self.task, blocks, bowls)
        if query.expect == "thought":
            return " " + render_goal_state(goals)
        scene_on = t.dialect == SIM and any(
            isinstance(e, AchievedSubgoals) for e in t.entries)
        met = self._met_goals(t, goals, scene_on)
        unmet = [g for g in goals if g not in met]
        if not unmet:
            return " done." if t.dialect == SIM else " robot.stop()"
        g = unmet[0]
        if t.dialect == SIM:
            return " " + render_sim_action(g.top, g.base)
        return " " + render_real_action(g.top, g.base)


# ---------------------------------------------------------------------------
# Kitchen oracle
# ---------------------------------------------------------------------------

_UNKNOWN = "?"


@dataclass
class _Belief:
    robot_at: str
    holding: Optional[str] = None
    drawer_open: bool = False
    at: dict[str, str] = field(default_factory=dict)   # object -> believed place

    def place_of(self, obj: str) -> str:
        return self.at.get(obj, _UNKNOWN)


class KitchenOracle:
    """Belief-tracking planner over kitchen skills.

    The belief is reconstructed from the transcript alone: successful
    steps apply skill semantics, failed steps ([success: no]) leave it
    unchanged, and [scene: ...] annotations pin the listed objects to the
    robot's believed location (which is how a knocked-from-gripper object
    is noticed, and only when Object feedback is enabled).
    """

    def __init__(self, task: KitchenTask, scenario: KitchenScenario,
                 policy: OraclePolicy | None = None):
        self.task = task
        self.scenario = scenario
        self.policy = policy or OraclePolicy()

    def _replay_belief(self, t: Transcript) -> _Belief:
        belief = _Belief(robot_at=self.scenario.robot_at,
                         drawer_open=self.scenario.drawer_open)
        entries = t.entries
        i = 0
        while i < len(entries):
            e = entries[i]
            if not isinstance(e, RobotAction):
                i += 1
                continue
            group = []
            j = i + 1
            while j < len(entries) and not isinstance(
                    entries[j], (RobotAction, Terminate, Instruction)):
                group.append(entries[j])
                j += 1
            ok = not any(isinstance(g, Success) and not g.ok for g in group)
            skill = parse_kitchen_skill(e.text)
            if skill is not None and (ok or not self.policy.retry_on_failure):
                self._apply(belief, skill)
            # scene annotations describe the post-action world; a held
            # object showing up in them means it was knocked loose
            for g in group:
                if isinstance(g, SceneObjects):
                    for obj in g.visible:
                        if obj in self.scenario.objects:
                            belief.at[obj] = belief.robot_at
                            if belief.holding == obj:
                                belief.holding = None
            i = j
        return belief

    def _apply(self, b: _Belief, skill: Skill) -> None:
        if skill.name == "find":
            where = b.place_of(skill.arg)
            if where in (_UNKNOWN, "gripper"):
                where = f"@{skill.arg}"
            b.robot_at = where
            b.at[skill.arg] = where
        elif skill.name == "go_to":
            b.robot_at = skill.arg
        elif skill.name == "bring_to_user":
            b.robot_at = USER
        elif skill.name == "pick_up":
            b.holding = skill.arg
            b.at[skill.arg] = "gripper"
        elif skill.name == "put_down":
            b.holding = None
            b.at[skill.arg] = b.robot_at
        elif skill.name == "open_drawer":
            b.drawer_open = True
        elif skill.name == "close_drawer":
            b.drawer_open = False

    def _acquire(self, b: _Belief, target: str) -> Skill:
        """Next skill toward holding `target`."""
        where = b.place_of(target)
        if where == _UNKNOWN:
            return Skill("find", target)
        if where == b.robot_at:
            if where == DRAWER and not b.drawer_open:
                return Skill("open_drawer")
            return Skill("pick_up", target)
        if where == DRAWER:
            return Skill("go_to", DRAWER)
        if where.startswith("@"):
            return Skill("find", target)
        return Skill("go_to", where)

    def _next_skill(self, b: _Belief) -> Skill:
        kind = self.task.kind
        cands = satisfiers(self.task, self.scenario)
        if kind == "drawer_open":
            if b.drawer_open:
                return Skill("done")
            if b.robot_at == DRAWER:
                return Skill("open_drawer")
            return Skill("go_to", DRAWER)
        if not cands:
            raise NoFeasibleAction(f"no satisfier available for {self.task.id}")
        target = cands[0]
        if kind == "hold":
            if b.holding == target:
                return Skill("done")
            return self._acquire(b, target)
        if kind in ("deliver", "relocate"):
            dest = USER if kind == "deliver" else self.task.destination
            if b.place_of(target) == dest:
                return Skill("done")
            if b.holding == target:
                if b.robot_at != dest:
                    return (Skill("bring_to_user") if dest == USER
                            else Skill("go_to", dest))
                return Skill("put_down", target)
            return self._acquire(b, target)
        if kind == "into_drawer":
            if b.place_of(target) == DRAWER and b.holding != target:
                return Skill("done")
            if b.holding == target:
                if b.robot_at != DRAWER:
                    return Skill("go_to", DRAWER)
                if not b.drawer_open:
                    return Skill("open_drawer")
                return Skill("put_down", target)
            return self._acquire(b, target)
        raise NoFeasibleAction(f"no plan for task kind {kind!r}")

    def next_completion(self, t: Transcript, query: PlannerQuery) -> str:
        belief = self._replay_belief(t)
        skill = self._next_skill(belief)
        text = skill.description()
        if query.dialect == KITCHEN_ACTIVE and skill.name != "done":
            text += " and continue"
        return " " + text


# ---------------------------------------------------------------------------
# LLM planner
# ---------------------------------------------------------------------------

class LLMPlanner:
    """Delegates planning to a completion backend (live client or mock)."""

    def __init__(self, backend):
        self.backend = backend

    def next_completion(self, transcript: Transcript, query: PlannerQuery) -> str:
        from .completion import CompletionRequest
        request = CompletionRequest(prompt=query.prompt,
                                    max_tokens=query.max_tokens,
                                    temperature=query.temperature,
                                    stop=tuple(query.stop))
        return self.backend.complete(request)

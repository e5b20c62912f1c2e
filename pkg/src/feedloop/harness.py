"""Episode runner, recorded-episode replay, benchmark sweeps, and
failure-cause attribution.

One episode owns its environment, transcript, and rng streams; the
benchmark parallelizes at the episode level and aggregates into a
deterministic report keyed by (cell, seed index).
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from . import kitchen as kw
from . import tabletop as tw
from .completion import CompletionRequest, ReplayBackend
from .errors import (BackendUnavailable, FixtureMiss, InvalidTarget,
                     MalformedGoalList, NoFeasibleAction, UnknownObjectInGoal,
                     UnparseableCompletion)
from .feedback import (FeedbackConfig, NoisyDetector, OcclusionTracker,
                       ScriptedHuman, object_feedback, scene_feedback)
from .planner import (KitchenOracle, LLMPlanner, OraclePolicy, PlannerQuery,
                      TabletopOracle, infer_goals)
from .transcript import (AUTO, KITCHEN, KITCHEN_ACTIVE, REAL, SIM,
                         AchievedSubgoals, Ask, Corpus, HumanAnswer,
                         Instruction, RobotAction, RobotThought, SceneObjects,
                         Success, Terminate, Transcript, next_cue,
                         parse_completion, parse_goal_state, parse_transcript,
                         render_prompt, render_transcript)

CAUSES = ("none", "max_steps", "planning_failure", "control_failure",
          "success_detection_error", "infeasible", "missing_fixture")


@dataclass
class TabletopScenario:
    family: tw.TaskFamily
    n_blocks: int = 3
    n_bowls: int = 0
    prestack_pair: bool = False
    place_sigma: float = 0.0
    pick_sigma: float = 0.0
    cap_sigmas: Optional[float] = None
    disturbance_prob: float = 0.0


@dataclass
class KitchenEpisode:
    task_id: str
    scenario: kw.KitchenScenario = field(default_factory=kw.default_scenario)
    outcome: kw.SkillOutcomeModel = field(default_factory=kw.SkillOutcomeModel)


@dataclass
class EpisodeConfig:
    environment: Union[TabletopScenario, KitchenEpisode]
    dialect: str
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)
    planner: str = "oracle"            # "oracle" | "llm"
    policy: OraclePolicy = field(default_factory=OraclePolicy)
    max_steps: int = 15                # the paper's step cap k
    seed: int = 0
    few_shot: str = ""
    human_fixture: Optional[tuple[dict, ...]] = None

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class EpisodeResult:
    success: bool
    steps_taken: int
    failure_cause: str
    transcript: Transcript
    seed: int
    metrics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        assert self.failure_cause in CAUSES
        assert self.success == (self.failure_cause == "none")


@dataclass
class StepRecord:
    action: str
    referenced_missing: bool = False
    unafforded: bool = False
    geometric_ok: Optional[bool] = None
    truth_after: Optional[bool] = None
    reported: Optional[bool] = None
    skill_failed: bool = False
    regressed: bool = False


def attribute_failure(trace: list[StepRecord], cap_hit: bool) -> str:
    """Map a failed episode's ground-truth trace to its cause bucket."""
    if any(r.referenced_missing for r in trace):
        return "planning_failure"
    if any(r.reported is not None and r.truth_after is not None
           and r.reported != r.truth_after for r in trace):
        return "success_detection_error"
    if any(r.geometric_ok is False or r.skill_failed or r.regressed
           for r in trace):
        return "control_failure"
    if cap_hit:
        return "max_steps"
    return "planning_failure"   # unexplained premature termination


def _planner_for(config: EpisodeConfig, task, backend):
    if config.planner == "oracle":
        if isinstance(config.environment, TabletopScenario):
            return TabletopOracle(task, config.policy)
        return KitchenOracle(task, config.environment.scenario, config.policy)
    if config.planner == "llm":
        if backend is None:
            from .completion import ClientConfig, CompletionClient
            backend = CompletionClient(ClientConfig())
        return LLMPlanner(backend)
    raise ValueError(f"unknown planner {config.planner!r}")


def _ask_planner(planner, transcript, config, expect):
    prompt = render_prompt(config.few_shot, transcript, expect)
    query = PlannerQuery(prompt=prompt, cue=next_cue(transcript, expect),
                         dialect=config.dialect, expect=expect)
    completion = planner.next_completion(transcript, query)
    return parse_completion(config.dialect, completion, query.cue)


def _fresh(entry):
    return dataclasses.replace(entry, raw=None, gap=AUTO, inline=False)


# ---------------------------------------------------------------------------
# Tabletop episodes
# ---------------------------------------------------------------------------

def _latest_goals(transcript: Transcript):
    for e in reversed(transcript.entries):
        if isinstance(e, RobotThought) and "Goal state is" in e.text:
            return parse_goal_state(e.text)
    return []


def _run_tabletop(config: EpisodeConfig, planner, backend) -> EpisodeResult:
    env = config.environment
    fb = config.feedback
    task, state = tw.sample_episode(env.family, env.n_blocks, env.n_bowls,
                                    config.seed, env.prestack_pair)
    noise = tw.NoiseConfig(
        place_sigma=env.place_sigma, pick_sigma=env.pick_sigma,
        cap_sigmas=env.cap_sigmas, disturbance_prob=env.disturbance_prob,
        rng=np.random.default_rng(np.random.SeedSequence([config.seed, 11])))
    detector = NoisyDetector(fb.detector_fp_rate, fb.detector_fn_rate,
                             np.random.default_rng(np.random.SeedSequence([config.seed, 12])))
    radius = fb.success_radius
    planner = planner or _planner_for(config, task, backend)
    tracker = OcclusionTracker() if fb.occlusion else None

    transcript = Transcript(dialect=config.dialect)
    if config.dialect == SIM:
        visible, _ = object_feedback(state, occlusion=False)
        transcript.append(SceneObjects(visible=tuple(visible)))
        transcript.append(Instruction(task.instruction))
    else:
        transcript.append(Instruction(task.instruction))
        vis, occ = (tracker.observe(state) if tracker
                    else (state.names(), []))
        transcript.append(SceneObjects(visible=tuple(vis), occluded=tuple(occ)))

    # attribution baseline: the task's own sub-goal decomposition
    base_goals = infer_goals(task, [b.id for b in state.blocks()],
                             [w.id for w in state.bowls()])

    trace: list[StepRecord] = []
    steps = 0
    thought_turns = 0
    reprompted = False
    success = False
    cause: Optional[str] = None
    cap_hit = False

    while True:
        if steps >= config.max_steps:
            cap_hit = True
            break
        expect = ("thought" if config.dialect == SIM
                  and not any(isinstance(e, RobotThought) for e in transcript.entries)
                  else "action")
        try:
            entries, action = _ask_planner(planner, transcript, config, expect)
        except UnparseableCompletion:
            if not reprompted:
                reprompted = True
                continue
            cause = "planning_failure"
            break
        except (BackendUnavailable, NoFeasibleAction) as exc:
            cause = ("infeasible" if isinstance(exc, NoFeasibleAction)
                     else "planning_failure")
            break
        for e in entries:
            if isinstance(e, RobotThought):
                transcript.append(e)
        if action is None:
            thought_turns += 1
            if thought_turns > 3:
                cause = "planning_failure"
                break
            continue
        if action.is_done:
            transcript.append(Terminate())
            steps += 1
            success = tw.goal_satisfied(task, state, radius)
            break
        action_entry = next(e for e in entries if isinstance(e, RobotAction))
        transcript.append(action_entry)
        steps += 1
        rec = StepRecord(action=action_entry.text)
        trace.append(rec)
        try:
            after, _point = tw.execute_pick_place(state, action.pick,
                                                  action.place, noise)
        except InvalidTarget:
            rec.referenced_missing = True
            cause = "planning_failure"
            break
        rec.geometric_ok = tw.on_predicate(after, action.pick, action.place, radius)
        achieved_before = {g for g in base_goals
                           if tw.on_predicate(state, g.top, g.base, radius)}
        state = tw.apply_disturbance(after, noise)
        achieved_after = {g for g in base_goals
                          if tw.on_predicate(state, g.top, g.base, radius)}
        rec.regressed = bool(achieved_before - achieved_after)
        rec.truth_after = tw.on_predicate(state, action.pick, action.place, radius)
        if fb.success:
            rec.reported = detector.report(rec.truth_after)
            transcript.append(Success(ok=rec.reported))
        if config.dialect == REAL and fb.object_feedback:
            vis, occ = (tracker.observe(state) if tracker
                        else (state.names(), []))
            transcript.append(SceneObjects(visible=tuple(vis), occluded=tuple(occ)))
        if config.dialect == SIM and fb.scene:
            try:
                goals = _latest_goals(transcript)
                achieved = scene_feedback(state, goals, radius)
            except (UnknownObjectInGoal, MalformedGoalList):
                rec.referenced_missing = True
                cause = "planning_failure"
                break
            transcript.append(AchievedSubgoals(goals=tuple(achieved)))

    if cause is None:
        cause = "none" if success else attribute_failure(trace, cap_hit)
    success = cause == "none"
    metrics = {
        "successful_actions": sum(1 for r in trace if r.geometric_ok),
        "retries": sum(1 for r in trace if r.reported is False),
        "goal_satisfied": tw.goal_satisfied(task, state, radius),
    }
    return EpisodeResult(success=success, steps_taken=steps,
                         failure_cause=cause, transcript=transcript,
                         seed=config.seed, metrics=metrics)


# ---------------------------------------------------------------------------
# Kitchen episodes
# ---------------------------------------------------------------------------

def _run_kitchen(config: EpisodeConfig, planner, backend,
                 human=None) -> EpisodeResult:
    env = config.environment
    fb = config.feedback
    task = kw.KITCHEN_TASKS.get(env.task_id)
    if task is None:
        from .errors import UnknownTask
        raise UnknownTask(f"unregistered kitchen task {env.task_id!r}")
    scenario = env.scenario
    state = scenario.initial_state()
    outcome_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 13]))
    planner = planner or _planner_for(config, task, backend)
    human = human or ScriptedHuman(config.human_fixture or [])

    transcript = Transcript(dialect=config.dialect)
    transcript.append(Instruction(task.instruction))

    trace: list[StepRecord] = []
    attempts: dict[str, int] = {}
    steps = 0
    ask_index = 0
    reprompted = False
    success = False
    cause: Optional[str] = None
    cap_hit = False

    while True:
        if steps >= config.max_steps:
            cap_hit = True
            break
        try:
            entries, action = _ask_planner(planner, transcript, config, "action")
        except UnparseableCompletion:
            if not reprompted:
                reprompted = True
                continue
            cause = "planning_failure"
            break
        except NoFeasibleAction:
            cause = "infeasible"
            break
        except BackendUnavailable:
            cause = "planning_failure"
            break
        if action is None:
            cause = "planning_failure"
            break
        if action.is_done:
            transcript.append(Terminate())
            steps += 1
            success = kw.kitchen_goal_satisfied(env.task_id, state, scenario)
            break
        skill = action.skill
        action_entry = next(e for e in entries if isinstance(e, RobotAction))
        transcript.append(action_entry)
        steps += 1
        rec = StepRecord(action=action_entry.text)
        trace.append(rec)
        if skill.arg is not None:
            known = (skill.arg in scenario.objects
                     or skill.arg in scenario.locations)
            if not known:
                rec.referenced_missing = True
                cause = "planning_failure"
                break
        desc = skill.description()
        attempts[desc] = attempts.get(desc, 0) + 1
        rec.unafforded = not kw.skill_precondition(state, skill)
        state, ok = kw.execute_skill(state, skill, env.outcome, outcome_rng,
                                     attempt=attempts[desc],
                                     bypass_affordance=True)
        rec.skill_failed = not ok
        rec.truth_after = ok
        if fb.success and not ok:
            rec.reported = False
            transcript.append(Success(ok=False))   # kitchen marks failures only
        if fb.object_feedback:
            transcript.append(SceneObjects(visible=tuple(state.visible_here())))
        if action.is_ask:
            if config.dialect != KITCHEN_ACTIVE or not fb.human:
                cause = "planning_failure"
                break
            transcript.append(Ask(question=action.ask))
            try:
                answer = human.answer(action.ask, ask_index)
            except FixtureMiss:
                cause = "missing_fixture"
                break
            ask_index += 1
            transcript.append(HumanAnswer(text=answer))
        said = human.interjection(steps)
        if said is not None and config.dialect == KITCHEN_ACTIVE:
            transcript.append(HumanAnswer(text=said, prompted=False))

    if cause is None:
        cause = "none" if success else attribute_failure(trace, cap_hit)
    success = cause == "none"
    metrics = {
        "successful_actions": sum(1 for r in trace if not r.skill_failed),
        "retries": sum(1 for r in trace if r.skill_failed),
        "goal_satisfied": kw.kitchen_goal_satisfied(env.task_id, state, scenario),
    }
    return EpisodeResult(success=success, steps_taken=steps,
                         failure_cause=cause, transcript=transcript,
                         seed=config.seed, metrics=metrics)


def run_episode(config: EpisodeConfig, planner=None, backend=None,
                human=None) -> EpisodeResult:
    """Run one closed-loop episode; module errors become failure causes."""
    if isinstance(config.environment, TabletopScenario):
        return _run_tabletop(config, planner, backend)
    return _run_kitchen(config, planner, backend, human=human)


# ---------------------------------------------------------------------------
# Recorded-episode replay
# ---------------------------------------------------------------------------

def replay_episode(corpus: Corpus, index: int,
                   few_shot: Optional[str] = None) -> EpisodeResult:
    """Drive a recorded episode end-to-end: recorded completions come back
    through the replay backend (which asserts every prompt), the parsed
    actions are appended, and the recorded feedback plays the environment."""
    backend = ReplayBackend(corpus, index, few_shot=few_shot)
    dialect = corpus.dialect
    transcript = Transcript(dialect=dialect,
                            entries=[_fresh(e) for e in backend._head_entries])
    steps = 0
    retries = 0
    successful = 0
    terminated = False
    while not backend.exhausted:
        expect = backend.next_expect()
        prompt = render_prompt(backend.few_shot, transcript, expect)
        completion = backend.complete(CompletionRequest(prompt=prompt, stop=("\n",)))
        entries, action = parse_completion(dialect, completion,
                                           next_cue(transcript, expect))
        env_entries = [_fresh(e) for e in backend.current_env_entries()]
        answers = [e for e in env_entries if isinstance(e, HumanAnswer)]
        feedback = [e for e in env_entries if not isinstance(e, HumanAnswer)]
        for e in entries:
            if isinstance(e, Ask):
                continue
            transcript.append(e)
        if action is not None:
            steps += 1
            if action.is_done:
                terminated = True
            failed = any(isinstance(e, Success) and not e.ok for e in feedback)
            retries += 1 if failed else 0
            successful += 0 if (failed or action.is_done) else 1
        for e in feedback:
            transcript.append(e)
        ask = next((e for e in entries if isinstance(e, Ask)), None)
        if ask is not None:
            transcript.append(_fresh(ask))
        for e in answers:
            transcript.append(e)
    return EpisodeResult(
        success=True, steps_taken=steps, failure_cause="none",
        transcript=transcript, seed=index,
        metrics={"successful_actions": successful, "retries": retries,
                 "terminated": terminated})


# ---------------------------------------------------------------------------
# Benchmark sweeps
# ---------------------------------------------------------------------------

@dataclass
class BenchmarkCell:
    name: str
    config: EpisodeConfig


@dataclass
class CellStats:
    episodes: int
    successes: int
    mean_steps: float
    causes: dict[str, int]

    @property
    def success_rate(self) -> float:
        return self.successes / self.episodes if self.episodes else 0.0


@dataclass
class BenchmarkReport:
    base_seed: int
    episodes_per_cell: int
    cells: dict[str, CellStats]

    def to_json(self) -> str:
        doc = {
            "base_seed": self.base_seed,
            "episodes_per_cell": self.episodes_per_cell,
            "cells": {
                name: {
                    "episodes": s.episodes,
                    "successes": s.successes,
                    "success_rate": round(s.success_rate, 10),
                    "mean_steps": round(s.mean_steps, 10),
                    "causes": dict(sorted(s.causes.items())),
                }
                for name, s in sorted(self.cells.items())
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def to_table(self) -> str:
        width = max((len(n) for n in self.cells), default=4)
        rows = [f"{'cell':<{width}}  episodes  success  mean-steps  causes"]
        for name, s in sorted(self.cells.items()):
            causes = ", ".join(f"{k}={v}" for k, v in sorted(s.causes.items())
                               if k != "none" and v)
            rows.append(f"{name:<{width}}  {s.episodes:8d}  "
                        f"{100 * s.success_rate:6.1f}%  {s.mean_steps:10.2f}  "
                        f"{causes}")
        return "\n".join(rows)


def run_benchmark(cells: list[BenchmarkCell], episodes_per_cell: int,
                  base_seed: int = 0, parallelism: int = 1,
                  backend=None) -> BenchmarkReport:
    """Seeds are assigned per cell as base_seed + index, so the report is
    reproducible for a fixed base seed regardless of parallelism."""
    if episodes_per_cell < 1:
        raise ValueError("episodes_per_cell must be >= 1")
    jobs = [(cell, i) for cell in cells for i in range(episodes_per_cell)]

    def run_one(job):
        cell, i = job
        cfg = replace(cell.config, seed=base_seed + i)
        return cell.name, i, run_episode(cfg, backend=backend)

    if parallelism <= 1:
        outcomes = [run_one(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(run_one, jobs))

    per_cell: dict[str, list[Optional[EpisodeResult]]] = {
        c.name: [None] * episodes_per_cell for c in cells}
    for name, i, result in outcomes:
        per_cell[name][i] = result
    stats = {}
    for cell in cells:
        results = per_cell[cell.name]
        causes = {c: 0 for c in CAUSES}
        for r in results:
            causes[r.failure_cause] += 1
        stats[cell.name] = CellStats(
            episodes=len(results),
            successes=sum(1 for r in results if r.success),
            mean_steps=sum(r.steps_taken for r in results) / len(results),
            causes={k: v for k, v in causes.items() if v},
        )
    return BenchmarkReport(base_seed=base_seed,
                           episodes_per_cell=episodes_per_cell, cells=stats)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def result_to_json(result: EpisodeResult) -> str:
    return json.dumps({
        "success": result.success,
        "steps_taken": result.steps_taken,
        "failure_cause": result.failure_cause,
        "seed": result.seed,
        "dialect": result.transcript.dialect,
        "metrics": dict(sorted(result.metrics.items())),
        "transcript": render_transcript(result.transcript),
    }, indent=2, sort_keys=True)


def result_from_json(text: str) -> EpisodeResult:
    doc = json.loads(text)
    transcript = parse_transcript(doc["dialect"], doc["transcript"])
    return EpisodeResult(success=doc["success"], steps_taken=doc["steps_taken"],
                         failure_cause=doc["failure_cause"],
                         transcript=transcript, seed=doc["seed"],
                         metrics=doc.get("metrics", {}))

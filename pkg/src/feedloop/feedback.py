"""Feedback sources computed from ground-truth state.

Object recognition (with optional occlusion bookkeeping), success
detection, task-progress scene description, and the human Q&A channel.
All detectors are pure functions of state; the episode runner decides
which of them feed the transcript.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import FixtureMiss, UnknownObjectInGoal
from .kitchen import KitchenState
from .tabletop import LOCATIONS, SUCCESS_RADIUS, TabletopState, on_predicate
from .transcript import SubGoal

# real-platform success thresholds by task style
REAL_MODE_THRESHOLDS = {"stacking": 0.03, "sorting": 0.10}

SOURCES = ("object", "success", "scene", "human")


@dataclass
class FeedbackConfig:
    object_feedback: bool = True
    success: bool = False
    scene: bool = False
    human: bool = False
    occlusion: bool = False
    success_radius: float = SUCCESS_RADIUS
    detector_fp_rate: float = 0.0   # injected detector error rates
    detector_fn_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.scene and not self.object_feedback:
            raise ValueError("scene feedback presumes object feedback")
        if self.success_radius <= 0:
            raise ValueError("success_radius must be > 0")
        for r in (self.detector_fp_rate, self.detector_fn_rate):
            if not 0.0 <= r <= 1.0:
                raise ValueError("detector error rates must be in [0, 1]")

    @classmethod
    def from_names(cls, names: str | Sequence[str], **kwargs) -> "FeedbackConfig":
        if isinstance(names, str):
            names = [n.strip() for n in names.split(",") if n.strip()]
        unknown = set(names) - set(SOURCES)
        if unknown:
            raise ValueError(f"unknown feedback sources: {sorted(unknown)}")
        return cls(object_feedback="object" in names, success="success" in names,
                   scene="scene" in names, human="human" in names, **kwargs)

    def enabled(self) -> set[str]:
        return {n for n, on in zip(SOURCES, (self.object_feedback, self.success,
                                             self.scene, self.human)) if on}


def object_feedback(state, occlusion: bool) -> tuple[list[str], list[str]]:
    """Currently visible and currently covered object names.

    Tabletop: with occlusion on, a block directly beneath another block is
    hidden. Kitchen: whatever is at the robot's location. The second list
    is what is physically covered right now; episode-level never-seen vs
    seen-then-hidden bookkeeping lives in OcclusionTracker.
    """
    if isinstance(state, KitchenState):
        return state.visible_here(), []
    assert isinstance(state, TabletopState)
    if not occlusion:
        return state.names(), []
    covered = {
        o.id for o in state.objects
        if o.kind == "block"
        and any(c.kind == "block" for c in state.children_of(o.id))
    }
    visible = [n for n in state.names() if n not in covered]
    hidden = [n for n in state.names() if n in covered]
    return visible, hidden


class OcclusionTracker:
    """Remembers which objects have ever been seen, so a covered object is
    reported as occluded only after its first reveal."""

    def __init__(self) -> None:
        self._seen: set[str] = set()

    def observe(self, state) -> tuple[list[str], list[str]]:
        visible, hidden = object_feedback(state, occlusion=True)
        self._seen.update(visible)
        occluded = [n for n in hidden if n in self._seen]
        return visible, occluded


def success_feedback(prev: TabletopState, curr: TabletopState, pick: str,
                     place: str, radius: float = SUCCESS_RADIUS) -> bool:
    """Tabletop success heuristic: the picked object ended up within
    `radius` of the place target, and higher than it unless the target is
    a named location. Kitchen skills echo their sampled outcome instead
    and never route through here."""
    del prev  # the verdict only needs post-action geometry
    return on_predicate(curr, pick, place, radius)


def scene_feedback(state: TabletopState, inferred_goals: Sequence[SubGoal],
                   radius: float = SUCCESS_RADIUS) -> list[SubGoal]:
    """The subset of inferred sub-goals currently achieved, in inference
    order, re-checked from scratch every step so regressions show up."""
    names = set(state.names())
    achieved = []
    for g in inferred_goals:
        if g.top not in names:
            raise UnknownObjectInGoal(f"sub-goal names absent object {g.top!r}")
        if g.base not in names and g.base not in LOCATIONS:
            raise UnknownObjectInGoal(f"sub-goal names absent object {g.base!r}")
        if on_predicate(state, g.top, g.base, radius):
            achieved.append(g)
    return achieved


@dataclass
class NoisyDetector:
    """Optional error injection wrapped around a boolean detector."""

    fp_rate: float = 0.0
    fn_rate: float = 0.0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def report(self, truth: bool) -> bool:
        if truth and self.fn_rate > 0 and float(self.rng.random()) < self.fn_rate:
            return False
        if not truth and self.fp_rate > 0 and float(self.rng.random()) < self.fp_rate:
            return True
        return truth


# ---------------------------------------------------------------------------
# Human channel
# ---------------------------------------------------------------------------

class ScriptedHuman:
    """Fixture-driven answers.

    Fixture entries are dicts, consumed in order:
      {"answer": "..."}                 answer the next question
      {"match": "substr", "answer": ""} answer the next question containing substr
      {"index": k, "answer": "..."}     answer question number k (0-based)
      {"after_step": n, "say": "..."}   unprompted interjection after step n
    """

    def __init__(self, fixture: Sequence[dict]):
        self._answers = [dict(e) for e in fixture if "answer" in e]
        self._interjections = {int(e["after_step"]): e["say"]
                               for e in fixture if "say" in e}
        self._used: set[int] = set()

    def answer(self, question: str, index: int) -> str:
        for i, e in enumerate(self._answers):
            if i in self._used:
                continue
            if "index" in e and int(e["index"]) != index:
                continue
            if "match" in e and e["match"] not in question:
                continue
            self._used.add(i)
            return e["answer"]
        raise FixtureMiss(f"no fixture answer for question {question!r}")

    def interjection(self, step: int) -> Optional[str]:
        return self._interjections.get(step)


class InteractiveHuman:
    """Blocks on operator input; one operator session per process."""

    def __init__(self, input_fn: Callable[[str], str] = input):
        self._input = input_fn

    def answer(self, question: str, index: int) -> str:
        return self._input(f"robot asks: {question}\nanswer> ")

    def interjection(self, step: int) -> Optional[str]:
        return None

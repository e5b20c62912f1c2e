"""Transcript data model and the prompt dialects.

A Transcript is an ordered list of typed entries; rendering turns it into
prompt text and parsing turns completion/corpus text back into entries.
Parsed entries keep the literal source line (`raw`) and the blank-line
layout in front of them (`gap`) so corpus text round-trips byte-exactly;
freshly built entries render in canonical form. `raw`/`gap` never take
part in equality.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import DialectMismatch, MalformedGoalList, UnparseableCompletion
from .tabletop import LOCATIONS

SIM = "sim_tabletop"
REAL = "real_tabletop"
KITCHEN = "kitchen"
KITCHEN_ACTIVE = "kitchen_active"
DIALECTS = (SIM, REAL, KITCHEN, KITCHEN_ACTIVE)

SEPARATOR = "==============="

# sentinel: "renderer decides the layout" (vs None = explicitly no gap line)
AUTO = "\x00auto"


def _cap(s: str) -> str:
    return s[:1].upper() + s[1:]


@dataclass(frozen=True)
class SubGoal:
    """One inferred goal-state item: `top` sits on `base`."""

    top: str
    base: str

    @property
    def base_is_location(self) -> bool:
        return self.base in LOCATIONS

    def render(self) -> str:
        if self.base_is_location:
            return f"{_cap(self.top)} is on the {self.base}."
        return f"{_cap(self.top)} is on top of the {self.base}."


_SUBGOAL_RE = re.compile(
    r"^(?P<top>.+?) is (?:on top of|on|in) (?:the )?(?P<base>.+?)\.?$",
    re.IGNORECASE)


def parse_subgoal(text: str) -> SubGoal:
    m = _SUBGOAL_RE.match(text.strip())
    if not m:
        raise MalformedGoalList(f"item does not match the sub-goal template: {text!r}")
    return SubGoal(top=m.group("top").strip().lower(),
                   base=m.group("base").strip().lower())


def parse_goal_state(text: str) -> list[SubGoal]:
    """Extract sub-goals from a `Goal state is [...]` clause."""
    m = re.search(r"Goal state is \[(?P<items>.*)\]", text)
    if not m:
        raise MalformedGoalList(f"no goal-state clause in {text!r}")
    return [parse_subgoal(item) for item in re.findall(r'"([^"]*)"', m.group("items"))]


def render_goal_state(goals: list[SubGoal]) -> str:
    inner = ", ".join(f'"{g.render()}"' for g in goals)
    return f"Goal state is [{inner}]"


# ---------------------------------------------------------------------------
# Entries
# ---------------------------------------------------------------------------

@dataclass
class Instruction:
    text: str
    raw: Optional[str] = field(default=None, compare=False, repr=False)
    gap: Optional[str] = field(default=AUTO, compare=False, repr=False)
    inline: bool = field(default=False, compare=False, repr=False)


@dataclass
class SceneObjects:
    visible: tuple[str, ...]
    occluded: Optional[tuple[str, ...]] = None   # None: dialect has no occluded line
    raw: Optional[str] = field(default=None, compare=False, repr=False)
    gap: Optional[str] = field(default=AUTO, compare=False, repr=False)
    inline: bool = field(default=False, compare=False, repr=False)


@dataclass
class AchievedSubgoals:
    goals: tuple[SubGoal, ...]
    raw: Optional[str] = field(default=None, compare=False, repr=False)
    gap: Optional[str] = field(default=AUTO, compare=False, repr=False)
    inline: bool = field(default=False, compare=False, repr=False)


@dataclass
class Success:
    ok: bool
    raw: Optional[str] = field(default=None, compare=False, repr=False)
    gap: Optional[str] = field(default=AUTO, compare=False, repr=False)
    inline: bool = field(default=False, compare=False, repr=False)


@dataclass
class RobotThought:
    text: str
    raw: Optional[str] = field(default=None, compare=False, repr=False)
    gap: Optional[str] = field(default=AUTO, compare=False, repr=False)
    inline: bool = field(default=False, compare=False, repr=False)


@dataclass
class RobotAction:
    text: str    # dialect action phrase, e.g. 'robot.pick_place("a", "b")'
    raw: Optional[str] = field(default=None, compare=False, repr=False)
    gap: Optional[str] = field(default=AUTO, compare=False, repr=False)
    inline: bool = field(default=False, compare=False, repr=False)


@dataclass
class Ask:
    question: str
    raw: Optional[str] = field(default=None, compare=False, repr=False)
    gap: Optional[str] = field(default=AUTO, compare=False, repr=False)
    inline: bool = field(default=False, compare=False, repr=False)


@dataclass
class HumanAnswer:
    text: str
    prompted: bool = True    # False: unprompted mid-plan interjection
    raw: Optional[str] = field(default=None, compare=False, repr=False)
    gap: Optional[str] = field(default=AUTO, compare=False, repr=False)
    inline: bool = field(default=False, compare=False, repr=False)


@dataclass
class Terminate:
    text: str = "done."
    raw: Optional[str] = field(default=None, compare=False, repr=False)
    gap: Optional[str] = field(default=AUTO, compare=False, repr=False)
    inline: bool = field(default=False, compare=False, repr=False)


Entry = Union[Instruction, SceneObjects, AchievedSubgoals, Success,
              RobotThought, RobotAction, Ask, HumanAnswer, Terminate]

_LEGAL_ENTRIES = {
    SIM: (Instruction, SceneObjects, AchievedSubgoals, Success,
          RobotThought, RobotAction, Terminate),
    REAL: (Instruction, SceneObjects, Success, RobotAction, Terminate),
    KITCHEN: (Instruction, SceneObjects, Success, RobotAction, Terminate),
    KITCHEN_ACTIVE: (Instruction, SceneObjects, Success, RobotAction,
                     Ask, HumanAnswer, Terminate),
}


@dataclass
class Transcript:
    dialect: str
    entries: list[Entry] = field(default_factory=list)

    def append(self, entry: Entry) -> None:
        if not isinstance(entry, _LEGAL_ENTRIES[self.dialect]):
            raise DialectMismatch(
                f"{type(entry).__name__} is not legal in dialect {self.dialect}")
        self.entries.append(entry)

    def actions(self) -> list[Entry]:
        return [e for e in self.entries if isinstance(e, (RobotAction, Terminate))]

    def last_of(self, kind) -> Optional[Entry]:
        for e in reversed(self.entries):
            if isinstance(e, kind):
                return e
        return None


# ---------------------------------------------------------------------------
# Parsed actions (execution-level view of a completion)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParsedAction:
    kind: str                      # "pick_place" | "skill" | "done"
    pick: Optional[str] = None
    place: Optional[str] = None
    skill: Optional[object] = None   # kitchen.Skill
    ask: Optional[str] = None        # question riding along the action

    @property
    def is_done(self) -> bool:
        return self.kind == "done"

    @property
    def is_ask(self) -> bool:
        return self.ask is not None


# ---------------------------------------------------------------------------
# Line grammars
# ---------------------------------------------------------------------------

_QUOTED = re.compile(r'"([^"]*)"')

_SIM_ACTION_RE = re.compile(
    r"^(?:Robot action:\s*)?(?:\d+\.\s*)?Pick (?:up )?the (?P<pick>.+?) "
    r"and place it (?:on|in) (?:the )?(?P<place>.+?)\.?\s*$",
    re.IGNORECASE)
_REAL_ACTION_RE = re.compile(
    r'robot\.pick_place\(\s*"(?P<pick>[^"]*)"\s*,\s*"(?P<place>[^"]*)"\s*\)')
_DONE_RE = re.compile(
    r"^(?:Robot action:\s*)?(?:\d+\.\s*)?"
    r"(?:done\.?|robot\.stop\(\)|STOP|tell you I'm done\.?)\s*$")
_ANNOTATION_RE = re.compile(r"\[(?P<key>success|scene): ?(?P<val>[^\]]*)\]$")
_STEP_PREFIX_RE = re.compile(r"^(?:Robot: )?(?:\d+\. )?")

_KITCHEN_SKILL_RES = (
    (re.compile(r"^find (?:a |an |the )?(?P<arg>.+?)$", re.I), "find"),
    (re.compile(r"^pick up (?:a |an |the )?(?P<arg>.+?)"
                r"(?: from the .+)?$", re.I), "pick_up"),
    (re.compile(r"^go to (?:the )?(?P<arg>.+?)$", re.I), "go_to"),
    (re.compile(r"^put down (?:a |an |the )?(?P<arg>.+?)"
                r"(?: (?:on|in|at) the .+)?$", re.I), "put_down"),
    (re.compile(r"^bring it to you$", re.I), "bring_to_user"),
    (re.compile(r"^open (?:the )?(?:top )?drawer$", re.I), "open_drawer"),
    (re.compile(r"^close (?:the )?(?:top )?drawer$", re.I), "close_drawer"),
)


def parse_kitchen_skill(text: str):
    """Map a kitchen step phrase to a Skill, or None if unrecognized."""
    from .kitchen import DRAWER, Skill
    core = text.strip()
    if _DONE_RE.match(core):
        return Skill("done")
    for rex, name in _KITCHEN_SKILL_RES:
        m = rex.match(core)
        if m:
            arg = m.groupdict().get("arg")
            if arg is not None:
                arg = arg.strip().lower()
            if name == "go_to" and arg in ("top drawer",):
                arg = DRAWER
            return Skill(name, arg)
    return None


def render_sim_action(pick: str, place: str) -> str:
    return f"Pick the {pick} and place it on the {place}."


def render_real_action(pick: str, place: str) -> str:
    return f'robot.pick_place("{pick}", "{place}")'


def _quoted_list(names) -> str:
    return "[" + ", ".join(f'"{n}"' for n in names) + "]"


def _sim_scene_line(entry: SceneObjects) -> str:
    names = list(entry.visible)
    if names and all(n.endswith(" block") for n in names):
        colors = ", ".join(n[:-len(" block")] for n in names)
        return f"Scene: There is a {colors} block."
    listed = ", ".join(f"a {n}" for n in names)
    return f"Scene: There is {listed}." if names else "Scene: There is nothing."


def _parse_sim_scene(text: str) -> SceneObjects:
    body = text[len("Scene: There is "):].rstrip(".")
    if body == "nothing":
        return SceneObjects(visible=())
    items = [it.strip() for it in body.split(",")]
    if all(not it.startswith(("a ", "an ")) for it in items[1:]) and \
            items[0].startswith("a ") and not items[0][2:].endswith(("block", "bowl")):
        # collapsed all-blocks form: "a cyan, yellow, brown block"
        items[0] = items[0][2:]
        last = items[-1]
        assert last.endswith(" block")
        items[-1] = last[:-len(" block")]
        return SceneObjects(visible=tuple(f"{c} block" for c in items))
    names = []
    for it in items:
        for art in ("an ", "a "):
            if it.startswith(art):
                it = it[len(art):]
                break
        names.append(it)
    return SceneObjects(visible=tuple(names))


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _gap_lines(entry: Entry, canonical_gap: Optional[str],
               preserve: bool) -> list[str]:
    gap = entry.gap if (preserve and entry.gap != AUTO) else canonical_gap
    return [gap] if gap is not None else []


def _render_sim_or_real_lines(t: Transcript, preserve: bool) -> list[str]:
    real = t.dialect == REAL
    lines: list[str] = []
    prev: Optional[Entry] = None
    for e in t.entries:
        if isinstance(e, (Ask, HumanAnswer, RobotThought)) and real:
            raise DialectMismatch(f"{type(e).__name__} not legal in {t.dialect}")
        if isinstance(e, AchievedSubgoals) and real:
            raise DialectMismatch("AchievedSubgoals not legal in real_tabletop")
        canonical_gap: Optional[str] = None
        if real:
            group_start = (isinstance(e, SceneObjects)
                           or (isinstance(e, (RobotAction, Terminate))
                               and not isinstance(prev, SceneObjects)))
            if group_start and prev is not None:
                canonical_gap = ""
        else:
            if isinstance(e, (RobotAction, Terminate)) and prev is not None:
                canonical_gap = " "
        lines.extend(_gap_lines(e, canonical_gap, preserve))
        if preserve and e.raw is not None:
            lines.extend(e.raw.split("\n"))
            prev = e
            continue
        if isinstance(e, Instruction):
            lines.append(("Task: " if real else "Human: ") + e.text)
        elif isinstance(e, SceneObjects):
            if real or e.occluded is not None:
                lines.append("Scene: Visible objects are " + _quoted_list(e.visible))
                lines.append("Scene: Occluded objects are "
                             + _quoted_list(e.occluded or ()))
            else:
                lines.append(_sim_scene_line(e))
        elif isinstance(e, AchievedSubgoals):
            inner = ", ".join(f'"{g.render()}"' for g in e.goals)
            lines.append(f"Scene: You have completed [{inner}]")
        elif isinstance(e, Success):
            lines.append(f"Successful action: {e.ok}")
        elif isinstance(e, RobotThought):
            lines.append(f"Robot thought: {e.text}")
        elif isinstance(e, RobotAction):
            lines.append(f"Robot action: {e.text}")
        elif isinstance(e, Terminate):
            if real:
                lines.append("Robot action: robot.stop()")
                lines.append("STOP")
            else:
                lines.append("Robot action: done.")
        else:
            raise DialectMismatch(
                f"{type(e).__name__} not legal in {t.dialect}")
        prev = e
    return lines


def _render_kitchen_lines(t: Transcript, preserve: bool) -> list[str]:
    active = t.dialect == KITCHEN_ACTIVE
    lines: list[str] = []
    step = 0
    i = 0
    entries = t.entries
    while i < len(entries):
        e = entries[i]
        if isinstance(e, Instruction):
            lines.append(f"Human: {e.text}")
            step = 0
            i += 1
            continue
        if not isinstance(e, (RobotAction, Terminate)):
            raise DialectMismatch(
                f"stray {type(e).__name__} outside a step in {t.dialect}")
        step += 1
        prefix = "Robot: " if step == 1 else ""
        if preserve and e.raw is not None:
            lines.append(e.raw)
            i += 1
            while i < len(entries) and getattr(entries[i], "inline", False):
                i += 1
            continue
        if isinstance(e, Terminate):
            lines.append(f"{prefix}{step}. done.")
            i += 1
            continue
        parts = [f"{prefix}{step}. {e.text}"]
        i += 1
        suffix = ""
        while i < len(entries):
            nxt = entries[i]
            if isinstance(nxt, Success):
                if nxt.ok:
                    i += 1       # kitchen renders only failures
                    continue
                parts.append("[success: no]")
            elif isinstance(nxt, SceneObjects):
                parts.append("[scene: " + ", ".join(nxt.visible) + "]")
            elif isinstance(nxt, Ask) and active:
                suffix = f" and ask: {nxt.question}"
                if (i + 1 < len(entries)
                        and isinstance(entries[i + 1], HumanAnswer)
                        and entries[i + 1].prompted):
                    suffix += f" Human: {entries[i + 1].text}"
                    i += 1
            elif isinstance(nxt, HumanAnswer) and active and not nxt.prompted:
                suffix = f", Human: {nxt.text}"
            else:
                break
            i += 1
        if active and not suffix:
            suffix = " and continue"
        lines.append("".join(parts) + suffix)
    return lines


def render_transcript(t: Transcript, preserve_layout: bool = True) -> str:
    """Render entries to dialect text (no trailing newline).

    preserve_layout=False ignores captured raw lines and gaps and emits
    canonical forms throughout (used for live prompts and replay checks).
    """
    if t.dialect in (SIM, REAL):
        lines = _render_sim_or_real_lines(t, preserve_layout)
    else:
        lines = _render_kitchen_lines(t, preserve_layout)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _parse_sim_or_real_lines(dialect: str, lines: list[str]) -> list[Entry]:
    entries: list[Entry] = []
    pending_gap: Optional[str] = None

    def attach(entry: Entry) -> Entry:
        nonlocal pending_gap
        entry.gap = pending_gap
        pending_gap = None
        entries.append(entry)
        return entry

    i = 0
    while i < len(lines):
        line = lines[i]
        i += 1
        if line.strip() == "":
            pending_gap = line
            continue
        if line.startswith("Human: ") and dialect == SIM:
            attach(Instruction(line[len("Human: "):], raw=line))
        elif line.startswith("Task: ") and dialect == REAL:
            attach(Instruction(line[len("Task: "):], raw=line))
        elif line.startswith("Scene: Visible objects are "):
            visible = tuple(_QUOTED.findall(line))
            occluded: tuple[str, ...] = ()
            raw = line
            if i < len(lines) and lines[i].startswith("Scene: Occluded objects are "):
                occluded = tuple(_QUOTED.findall(lines[i]))
                raw = line + "\n" + lines[i]
                i += 1
            attach(SceneObjects(visible=visible, occluded=occluded, raw=raw))
        elif line.startswith("Scene: You have completed "):
            goals = tuple(parse_subgoal(s) for s in _QUOTED.findall(line))
            attach(AchievedSubgoals(goals=goals, raw=line))
        elif line.startswith("Scene: There is "):
            e = _parse_sim_scene(line)
            e.raw = line
            attach(e)
        elif line.startswith("Successful action: "):
            attach(Success(ok=line.endswith("True"), raw=line))
        elif line.startswith("Robot thought: "):
            attach(RobotThought(line[len("Robot thought: "):], raw=line))
        elif line.startswith("Robot action: "):
            body = line[len("Robot action: "):]
            if _DONE_RE.match(body):
                raw = line
                if i < len(lines) and lines[i].strip() == "STOP":
                    raw = line + "\n" + lines[i]
                    i += 1
                attach(Terminate(text=body, raw=raw))
            else:
                attach(RobotAction(text=body, raw=line))
        elif line.strip() == "STOP":
            attach(Terminate(text="robot.stop()", raw=line))
        else:
            raise UnparseableCompletion(f"unrecognized {dialect} line: {line!r}")
    return entries


def parse_kitchen_step(dialect: str, line: str) -> list[Entry]:
    """Parse one kitchen step line into [action, inline annotations...]."""
    body = _STEP_PREFIX_RE.sub("", line, count=1)
    ask: Optional[tuple[str, Optional[str]]] = None
    interject: Optional[str] = None
    if " and ask: " in body:
        body, rest = body.split(" and ask: ", 1)
        if " Human: " in rest:
            q, a = rest.split(" Human: ", 1)
            ask = (q, a)
        else:
            ask = (rest, None)
    elif body.endswith(" and continue"):
        body = body[: -len(" and continue")]
    elif ", Human: " in body:
        body, interject = body.split(", Human: ", 1)
    annotations: list[Entry] = []
    while True:
        m = _ANNOTATION_RE.search(body)
        if not m:
            break
        body = body[: m.start()]
        if m.group("key") == "success":
            annotations.insert(0, Success(ok=m.group("val").strip() != "no",
                                          raw="", inline=True))
        else:
            val = m.group("val").strip()
            names = tuple(n.strip() for n in val.split(",")) if val else ()
            annotations.insert(0, SceneObjects(visible=names, raw="", inline=True))
    body = body.strip()
    head: Entry
    if _DONE_RE.match(body):
        head = Terminate(text=body, raw=line)
    elif body:
        head = RobotAction(text=body, raw=line)
    else:
        raise UnparseableCompletion(f"empty kitchen step: {line!r}")
    out: list[Entry] = [head] + annotations
    if ask is not None:
        out.append(Ask(question=ask[0], raw="", inline=True))
        if ask[1] is not None:
            out.append(HumanAnswer(text=ask[1], raw="", inline=True))
    if interject is not None:
        out.append(HumanAnswer(text=interject, prompted=False, raw="", inline=True))
    return out


def _parse_kitchen_lines(dialect: str, lines: list[str]) -> list[Entry]:
    entries: list[Entry] = []
    for line in lines:
        if not line.strip():
            continue
        if line.startswith("Human: "):
            entries.append(Instruction(line[len("Human: "):], raw=line))
        else:
            entries.extend(parse_kitchen_step(dialect, line))
    return entries


def parse_transcript(dialect: str, text: str) -> Transcript:
    lines = text.split("\n")
    while lines and lines[-1].strip() == "":
        lines.pop()
    if dialect in (SIM, REAL):
        entries = _parse_sim_or_real_lines(dialect, lines)
    else:
        entries = _parse_kitchen_lines(dialect, lines)
    return Transcript(dialect=dialect, entries=entries)


# ---------------------------------------------------------------------------
# Completion parsing
# ---------------------------------------------------------------------------

def _action_from_text(dialect: str, body: str) -> Optional[ParsedAction]:
    if _DONE_RE.match(body.strip()):
        return ParsedAction(kind="done")
    if dialect == SIM:
        m = _SIM_ACTION_RE.match(body.strip())
        if m:
            return ParsedAction(kind="pick_place",
                                pick=m.group("pick").strip().lower(),
                                place=m.group("place").strip().lower())
        return None
    if dialect == REAL:
        m = _REAL_ACTION_RE.search(body)
        if m:
            return ParsedAction(kind="pick_place",
                                pick=m.group("pick").strip().lower(),
                                place=m.group("place").strip().lower())
        return None
    # kitchen dialects
    entries = parse_kitchen_step(dialect, body.strip())
    head = entries[0]
    question = None
    for e in entries:
        if isinstance(e, Ask):
            question = e.question
    if isinstance(head, Terminate):
        return ParsedAction(kind="done", ask=question)
    skill = parse_kitchen_skill(head.text)
    if skill is None:
        return None
    return ParsedAction(kind="skill", skill=skill, ask=question)


def parse_completion(dialect: str, text: str,
                     cue: Optional[str] = None
                     ) -> tuple[list[Entry], Optional[ParsedAction]]:
    """Extract leading thought entries and the first valid action from a
    raw completion; content after the action is discarded, unknown lines
    are skipped.

    `cue` is the prompt tail the completion continues (e.g. "Robot action:"
    or "3."); when given, the first line is interpreted against it. The
    returned action entry keeps the planner's literal phrase.
    """
    lines = text.split("\n")
    if cue is not None and lines:
        first = cue.strip("\n ") + " " + lines[0].strip()
        lines = [first] + lines[1:]
    entries: list[Entry] = []
    for line in lines:
        body = line.strip()
        if not body:
            continue
        if body.startswith("Robot thought:"):
            entries.append(RobotThought(body[len("Robot thought:"):].strip()))
            continue
        if dialect in (KITCHEN, KITCHEN_ACTIVE):
            body = _STEP_PREFIX_RE.sub("", body, count=1)
        elif body.startswith("Robot action:"):
            body = body[len("Robot action:"):].strip()
        try:
            action = _action_from_text(dialect, body)
        except UnparseableCompletion:
            action = None
        if action is None:
            continue
        if dialect in (KITCHEN, KITCHEN_ACTIVE):
            # keep the planner's literal phrasing; drop env-side annotations
            for e in parse_kitchen_step(dialect, body):
                if isinstance(e, (RobotAction, Terminate, Ask)):
                    e.raw, e.inline = None, False
                    entries.append(e)
        else:
            if action.kind == "done":
                entries.append(Terminate(text=body))
            else:
                entries.append(RobotAction(text=body))
        return entries, action
    if entries:
        return entries, None
    raise UnparseableCompletion(f"no valid entry in completion {text!r}")


# ---------------------------------------------------------------------------
# Corpora (multi-episode texts with few-shot layout)
# ---------------------------------------------------------------------------

@dataclass
class Corpus:
    dialect: str
    preamble: list[str] = field(default_factory=list)
    episodes: list[Transcript] = field(default_factory=list)
    sep_gaps: list[Optional[str]] = field(default_factory=list)
    trailing_sep: bool = False
    trailing_gap: Optional[str] = None

    def text(self) -> str:
        lines = list(self.preamble)
        if self.dialect in (SIM, REAL):
            for gap, ep in zip(self.sep_gaps, self.episodes):
                if gap is not None:
                    lines.append(gap)
                lines.append(SEPARATOR)
                lines.extend(render_transcript(ep).split("\n"))
            if self.trailing_sep:
                if self.trailing_gap is not None:
                    lines.append(self.trailing_gap)
                lines.append(SEPARATOR)
        else:
            for ep in self.episodes:
                lines.extend(render_transcript(ep).split("\n"))
        return "\n".join(lines) + "\n"

    def prefix_text(self, index: int) -> str:
        """Corpus text strictly before episode `index` (few-shot prefix)."""
        clipped = Corpus(dialect=self.dialect, preamble=list(self.preamble),
                         episodes=self.episodes[:index],
                         sep_gaps=self.sep_gaps[:index])
        return clipped.text() if (clipped.episodes or clipped.preamble) else ""


def parse_corpus(dialect: str, text: str) -> Corpus:
    lines = text.split("\n")
    while lines and lines[-1] == "":
        lines.pop()
    corpus = Corpus(dialect=dialect)
    if dialect in (SIM, REAL):
        chunks: list[list[str]] = []
        gaps: list[Optional[str]] = []
        current: Optional[list[str]] = None
        pending_gap: Optional[str] = None
        preamble_done = False
        for line in lines:
            if line == SEPARATOR:
                chunks.append([])
                gaps.append(pending_gap)
                pending_gap = None
                current = chunks[-1]
                preamble_done = True
                continue
            if preamble_done and line.strip() == "" and current is not None:
                # hold gaps so a gap right before the next separator
                # attaches to the separator, not the episode tail
                if pending_gap is not None:
                    current.append(pending_gap)
                pending_gap = line
                continue
            if current is None:
                corpus.preamble.append(line)
            else:
                if pending_gap is not None:
                    current.append(pending_gap)
                    pending_gap = None
                current.append(line)
        if chunks and not chunks[-1]:
            corpus.trailing_sep = True
            corpus.trailing_gap = gaps.pop()
            chunks.pop()
        corpus.sep_gaps = gaps
        for chunk in chunks:
            entries = _parse_sim_or_real_lines(dialect, chunk)
            corpus.episodes.append(Transcript(dialect=dialect, entries=entries))
        if pending_gap is not None and corpus.episodes:
            pass  # stray trailing blank line already trimmed above
    else:
        blocks: list[list[str]] = []
        for line in lines:
            if line.startswith("Human: "):
                blocks.append([line])
            elif blocks:
                blocks[-1].append(line)
            else:
                corpus.preamble.append(line)
        for block in blocks:
            entries = _parse_kitchen_lines(dialect, block)
            corpus.episodes.append(Transcript(dialect=dialect, entries=entries))
    return corpus


def load_golden_text(dialect: str) -> str:
    from importlib.resources import files
    return (files("feedloop") / "golden" / f"{dialect}.txt").read_text()


def load_golden(dialect: str) -> Corpus:
    return parse_corpus(dialect, load_golden_text(dialect))


# ---------------------------------------------------------------------------
# Prompt assembly
# ---------------------------------------------------------------------------

def next_cue(transcript: Transcript, expect: str = "action") -> str:
    """Prompt tail positioning the planner for its next completion."""
    d = transcript.dialect
    if d == SIM:
        return " \nRobot action:" if expect == "action" else "Robot thought:"
    if d == REAL:
        last = transcript.entries[-1] if transcript.entries else None
        gap = "" if isinstance(last, SceneObjects) else "\n"
        return gap + "Robot action:"
    n = 0
    for e in reversed(transcript.entries):
        if isinstance(e, Instruction):
            break
        if isinstance(e, (RobotAction, Terminate)):
            n += 1
    return f"Robot: {n + 1}." if n == 0 else f"{n + 1}."


def render_prompt(few_shot: str, transcript: Transcript,
                  expect: str = "action") -> str:
    """few-shot prefix + separator + canonical transcript + completion cue."""
    body = render_transcript(transcript, preserve_layout=False)
    cue = next_cue(transcript, expect)
    if few_shot and not few_shot.endswith("\n"):
        few_shot += "\n"
    if transcript.dialect in (SIM, REAL):
        head = few_shot
        if not head.rstrip("\n").endswith(SEPARATOR):
            head += SEPARATOR + "\n"
        return head + body + "\n" + cue
    return few_shot + body + "\n" + cue

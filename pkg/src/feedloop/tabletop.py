"""Simulated tabletop rearrangement world.

Seeded object sampling, geometric pick-and-place under Gaussian noise,
stack bookkeeping, per-task goal predicates. No physics engine: transport
is instantaneous and collisions during transport are not modeled.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidTarget, SamplingExhausted, UnknownTask

COLORS = (
    "blue", "red", "green", "orange", "yellow",
    "purple", "pink", "cyan", "brown", "gray",
)

TABLE_HALF_EXTENT = 0.3     # meters; 0.6 m square table
BLOCK_EDGE = 0.04           # meters, also the block height
BOWL_RADIUS = 0.06
BOWL_HEIGHT = 0.02
MIN_SPACING = 0.15          # enforced between any two objects at init
SUCCESS_RADIUS = 0.04       # planar tolerance of the success heuristic
SAMPLING_BUDGET = 10_000    # total position draws before SamplingExhausted
_EDGE_MARGIN = 0.04         # keep sampled centers off the table rim


@dataclass(frozen=True)
class NamedLocation:
    name: str
    anchor: tuple[float, float]


def _location_grid() -> dict[str, NamedLocation]:
    d = 0.2  # 3x3 anchor pitch, symmetric about the table center
    rows = (("top", d), ("", 0.0), ("bottom", -d))
    cols = (("left", -d), ("", 0.0), ("right", d))
    locs = {}
    for rname, y in rows:
        for cname, x in cols:
            if rname and cname:
                name = f"{rname} {cname} corner"
            elif rname:
                name = f"{rname} side"
            elif cname:
                name = f"{cname} side"
            else:
                name = "middle"
            locs[name] = NamedLocation(name, (x, y))
    return locs


LOCATIONS: dict[str, NamedLocation] = _location_grid()
CORNER_NAMES = tuple(n for n in LOCATIONS if n.endswith("corner"))
SIDE_NAMES = tuple(n for n in LOCATIONS if n.endswith("side"))


@dataclass
class ObjectSpec:
    id: str
    kind: str                      # "block" | "bowl"
    color: str
    x: float
    y: float
    z: float                       # height of the object's underside
    size: float                    # block edge length or bowl radius
    resting_on: Optional[str] = None   # id of the object directly beneath

    @property
    def name(self) -> str:
        return self.id

    @property
    def height(self) -> float:
        return self.size if self.kind == "block" else BOWL_HEIGHT


@dataclass
class TabletopState:
    objects: list[ObjectSpec]
    table_half_extent: float = TABLE_HALF_EXTENT
    rng_seed: int = 0

    def get(self, name: str) -> Optional[ObjectSpec]:
        for obj in self.objects:
            if obj.id == name:
                return obj
        return None

    def blocks(self) -> list[ObjectSpec]:
        return [o for o in self.objects if o.kind == "block"]

    def bowls(self) -> list[ObjectSpec]:
        return [o for o in self.objects if o.kind == "bowl"]

    def names(self) -> list[str]:
        return [o.id for o in self.objects]

    def copy(self) -> "TabletopState":
        return TabletopState(
            objects=[dataclasses.replace(o) for o in self.objects],
            table_half_extent=self.table_half_extent,
            rng_seed=self.rng_seed,
        )

    def children_of(self, name: str) -> list[ObjectSpec]:
        return [o for o in self.objects if o.resting_on == name]

    def stack_top(self, name: str) -> ObjectSpec:
        """Topmost object of the stack rooted at (or above) `name`."""
        top = self.get(name)
        assert top is not None
        while True:
            kids = self.children_of(top.id)
            if not kids:
                return top
            top = max(kids, key=lambda o: (o.z, o.id))

    def support_depth(self, name: str) -> int:
        """Number of objects transitively beneath `name`."""
        depth = 0
        obj = self.get(name)
        while obj is not None and obj.resting_on is not None:
            depth += 1
            obj = self.get(obj.resting_on)
        return depth

    def to_text(self) -> str:
        """Snapshot serialization: one tab-separated object per line."""
        lines = [f"table\t{self.table_half_extent!r}\t{self.rng_seed}"]
        for o in self.objects:
            lines.append(
                f"{o.id}\t{o.kind}\t{o.color}\t{o.x!r}\t{o.y!r}\t{o.z!r}"
                f"\t{o.size!r}\t{o.resting_on or '-'}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TabletopState":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        _, half, seed = lines[0].split("\t")
        objs = []
        for ln in lines[1:]:
            oid, kind, color, x, y, z, size, rest = ln.split("\t")
            objs.append(ObjectSpec(
                id=oid, kind=kind, color=color,
                x=float(x), y=float(y), z=float(z), size=float(size),
                resting_on=None if rest == "-" else rest,
            ))
        return cls(objects=objs, table_half_extent=float(half), rng_seed=int(seed))


class TaskFamily(str, Enum):
    PICK_AND_PLACE = "pick_and_place"
    STACK_ALL = "stack_all"
    ALL_ON_LOCATION = "all_on_location"
    ALL_IN_BOWL = "all_in_bowl"
    DIFFERENT_CORNERS = "different_corners"
    MATCHING_BOWLS = "matching_bowls"
    MISMATCHED_BOWLS = "mismatched_bowls"
    STACK_ON_LOCATION = "stack_on_location"


_INSTRUCTIONS = {
    TaskFamily.PICK_AND_PLACE: "Pick the {pick} and place it on the {place}.",
    TaskFamily.STACK_ALL: "Stack all the blocks.",
    TaskFamily.ALL_ON_LOCATION: "Put all the blocks on the {place}.",
    TaskFamily.ALL_IN_BOWL: "Put all the blocks in the {place}.",
    TaskFamily.DIFFERENT_CORNERS: "Put all the blocks in different corners.",
    TaskFamily.MATCHING_BOWLS: "Put the blocks in their matching bowls.",
    TaskFamily.MISMATCHED_BOWLS: "Put the blocks on mismatched bowls.",
    TaskFamily.STACK_ON_LOCATION: "Stack all the blocks on the {place}.",
}


@dataclass(frozen=True)
class TabletopTask:
    family: TaskFamily
    instruction: str
    pick: Optional[str] = None    # object name, for pick_and_place
    place: Optional[str] = None   # object or location name

    @classmethod
    def make(cls, family: TaskFamily, pick: Optional[str] = None,
             place: Optional[str] = None) -> "TabletopTask":
        instruction = _INSTRUCTIONS[family].format(pick=pick, place=place)
        return cls(family=family, instruction=instruction, pick=pick, place=place)


@dataclass
class NoiseConfig:
    """Noise model for the pick-and-place primitive and step disturbances.

    place_sigma is the per-axis Gaussian offset on place locations.
    pick_sigma, when nonzero, perturbs the grasp point (magnitude sampled
    from |N(0, sigma)| capped at cap_sigmas * sigma, angle uniform); a
    grasp offset larger than the block half-edge misses and leaves the
    state unchanged. The rng stream is independent of episode sampling.
    """

    place_sigma: float = 0.02
    pick_sigma: float = 0.0
    cap_sigmas: Optional[float] = None
    disturbance_prob: float = 0.0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def __post_init__(self) -> None:
        if self.place_sigma < 0 or self.pick_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")
        if not 0.0 <= self.disturbance_prob <= 1.0:
            raise ValueError("disturbance_prob must be in [0, 1]")

    @classmethod
    def seeded(cls, seed, **kwargs) -> "NoiseConfig":
        return cls(rng=np.random.default_rng(seed), **kwargs)


def planar_distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def on_predicate(state: TabletopState, top_name: str, base_ref: str,
                 radius: float = SUCCESS_RADIUS) -> bool:
    """The success-detector predicate: planar distance < radius, and for
    object targets the top must sit strictly higher than the base. The
    height clause is not applied to named locations."""
    top = state.get(top_name)
    if top is None:
        return False
    if base_ref in LOCATIONS:
        anchor = LOCATIONS[base_ref].anchor
        return planar_distance((top.x, top.y), anchor) < radius
    base = state.get(base_ref)
    if base is None or base.id == top.id:
        return False
    close = planar_distance((top.x, top.y), (base.x, base.y)) < radius
    return close and top.z > base.z


# ---------------------------------------------------------------------------
# Episode sampling
# ---------------------------------------------------------------------------

class _DrawBudget:
    def __init__(self, total: int = SAMPLING_BUDGET):
        self.left = total

    def spend(self) -> None:
        self.left -= 1
        if self.left < 0:
            raise SamplingExhausted(
                f"no valid layout found within {SAMPLING_BUDGET} draws")


def _sample_positions(n: int, rng: np.random.Generator,
                      half_extent: float) -> list[tuple[float, float]]:
    """Positions pairwise >= MIN_SPACING apart; restarts dead-end layouts."""
    budget = _DrawBudget()
    lim = half_extent - _EDGE_MARGIN
    while True:
        points: list[tuple[float, float]] = []
        stuck = False
        for _ in range(n):
            for _attempt in range(150):
                budget.spend()
                p = (float(rng.uniform(-lim, lim)), float(rng.uniform(-lim, lim)))
                if all(planar_distance(p, q) >= MIN_SPACING for q in points):
                    points.append(p)
                    break
            else:
                stuck = True
                break
        if not stuck:
            return points


def _sample_colors(family: TaskFamily, n_blocks: int, n_bowls: int,
                   rng: np.random.Generator) -> tuple[list[str], list[str]]:
    colors = list(COLORS)
    if family == TaskFamily.MATCHING_BOWLS:
        # every block needs a same-colored bowl
        if n_blocks > n_bowls:
            raise ValueError("matching_bowls needs n_bowls >= n_blocks")
        bowl_colors = [colors[i] for i in rng.choice(len(colors), n_bowls, replace=False)]
        block_colors = bowl_colors[:n_blocks]
    else:
        block_colors = [colors[i] for i in rng.choice(len(colors), n_blocks, replace=False)]
        bowl_colors = [colors[i] for i in rng.choice(len(colors), n_bowls, replace=False)]
    return block_colors, list(bowl_colors)


def _build_state(family: TaskFamily, n_blocks: int, n_bowls: int, seed: int,
                 prestack_pair: bool) -> TabletopState:
    if not 1 <= n_blocks <= 4:
        raise ValueError("n_blocks must be in 1..4")
    if not 0 <= n_bowls <= 3:
        raise ValueError("n_bowls must be in 0..3")
    rng = np.random.default_rng(seed)
    block_colors, bowl_colors = _sample_colors(family, n_blocks, n_bowls, rng)
    n_positions = n_blocks + n_bowls - (1 if prestack_pair and n_blocks >= 2 else 0)
    positions = _sample_positions(n_positions, rng, TABLE_HALF_EXTENT)
    objects = [
        ObjectSpec(f"{c} block", "block", c, 0.0, 0.0, 0.0, BLOCK_EDGE)
        for c in block_colors
    ]
    pos_iter = iter(positions)
    if not prestack_pair or n_blocks < 2:
        for o in objects:
            o.x, o.y = next(pos_iter)
    else:
        # two rng-chosen blocks share a column: `top` rests on `base`
        idx = rng.choice(n_blocks, 2, replace=False)
        base_i, top_i = int(idx[0]), int(idx[1])
        for i in range(n_blocks):
            if i != top_i:
                objects[i].x, objects[i].y = next(pos_iter)
        top, base = objects[top_i], objects[base_i]
        top.x, top.y, top.z = base.x, base.y, base.height
        top.resting_on = base.id
    for c in bowl_colors:
        x, y = next(pos_iter)
        objects.append(ObjectSpec(f"{c} bowl", "bowl", c, x, y, 0.0, BOWL_RADIUS))
    return TabletopState(objects=objects, rng_seed=seed)


def init_episode(task: TabletopTask, n_blocks: int, n_bowls: int, seed: int,
                 prestack_pair: bool = False) -> TabletopState:
    """Sample a fresh state for `task`; deterministic for a fixed seed.

    Raises SamplingExhausted when the spacing constraint cannot be met
    within the draw budget, and ValueError when the task's parameters
    cannot be resolved against the sampled objects.
    """
    state = _build_state(task.family, n_blocks, n_bowls, seed, prestack_pair)
    for ref in (task.pick, task.place):
        if ref is not None and ref not in LOCATIONS and state.get(ref) is None:
            raise ValueError(f"task parameter {ref!r} not present in sampled state")
    return state


def sample_episode(family: TaskFamily, n_blocks: int, n_bowls: int, seed: int,
                   prestack_pair: bool = False) -> tuple[TabletopTask, TabletopState]:
    """Sample a state and a concrete task instruction over its objects."""
    state = _build_state(family, n_blocks, n_bowls, seed, prestack_pair)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    pick = place = None
    blocks, bowls = state.blocks(), state.bowls()
    if family == TaskFamily.PICK_AND_PLACE:
        pick = blocks[int(rng.integers(len(blocks)))].id
        choices = [o.id for o in state.objects if o.id != pick] + list(LOCATIONS)
        place = choices[int(rng.integers(len(choices)))]
    elif family in (TaskFamily.ALL_ON_LOCATION, TaskFamily.STACK_ON_LOCATION):
        corner_sides = CORNER_NAMES + SIDE_NAMES
        place = corner_sides[int(rng.integers(len(corner_sides)))]
    elif family == TaskFamily.ALL_IN_BOWL:
        if not bowls:
            raise ValueError("all_in_bowl requires at least one bowl")
        place = bowls[int(rng.integers(len(bowls)))].id
    task = TabletopTask.make(family, pick=pick, place=place)
    return task, state


# ---------------------------------------------------------------------------
# Action execution
# ---------------------------------------------------------------------------

def _clamp(v: float, lim: float) -> float:
    return max(-lim, min(lim, v))


def _capped_planar_offset(sigma: float, cap_sigmas: Optional[float],
                          rng: np.random.Generator) -> tuple[float, float]:
    mag = abs(float(rng.normal(0.0, sigma)))
    if cap_sigmas is not None:
        mag = min(mag, cap_sigmas * sigma)
    ang = float(rng.uniform(0.0, 2.0 * math.pi))
    return mag * math.cos(ang), mag * math.sin(ang)


def execute_pick_place(
    state: TabletopState,
    pick: str,
    place: str,
    noise: NoiseConfig,
) -> tuple[TabletopState, Optional[tuple[float, float]]]:
    """Relocate block `pick` onto object or location `place`.

    Returns the new state and the executed place point (None when a noisy
    grasp missed the block). Blocks that rested on the picked block drop
    to its former support height. The place point is clamped to the table.
    """
    src = state.get(pick)
    if src is None or src.kind != "block":
        raise InvalidTarget(f"cannot pick {pick!r}: not a block in the scene")
    if place == pick:
        raise InvalidTarget("place target equals pick object")
    if place in LOCATIONS:
        target_point = LOCATIONS[place].anchor
        target_obj = None
    else:
        target_obj = state.get(place)
        if target_obj is None:
            raise InvalidTarget(f"unknown place target {place!r}")
        target_point = (target_obj.x, target_obj.y)

    new = state.copy()
    src = new.get(pick)
    assert src is not None

    if noise.pick_sigma > 0.0:
        dx, dy = _capped_planar_offset(noise.pick_sigma, noise.cap_sigmas, noise.rng)
        if math.hypot(dx, dy) > src.size / 2.0:
            return new, None  # grasp missed; nothing moved

    # blocks stacked on the picked block drop to its former height
    former_z, former_support = src.z, src.resting_on
    for child in new.children_of(src.id):
        drop = child.z - former_z
        child.resting_on = former_support
        for o in _subtree(new, child):
            o.z -= drop

    if noise.place_sigma > 0.0:
        ox = float(noise.rng.normal(0.0, noise.place_sigma))
        oy = float(noise.rng.normal(0.0, noise.place_sigma))
    else:
        ox = oy = 0.0
    executed = (
        _clamp(target_point[0] + ox, new.table_half_extent),
        _clamp(target_point[1] + oy, new.table_half_extent),
    )
    src.x, src.y = executed
    if target_obj is None:
        src.z = 0.0
        src.resting_on = None
    else:
        top = new.stack_top(target_obj.id)
        src.z = top.z + top.height
        src.resting_on = top.id
    return new, executed


def _subtree(state: TabletopState, root: ObjectSpec) -> list[ObjectSpec]:
    out = [root]
    frontier = [root]
    while frontier:
        nxt = []
        for node in frontier:
            kids = state.children_of(node.id)
            out.extend(kids)
            nxt.extend(kids)
        frontier = nxt
    return out


def apply_disturbance(state: TabletopState, noise: NoiseConfig) -> TabletopState:
    """With probability disturbance_prob, relocate the topmost block of the
    tallest stack (ties broken by lowest id) to a free point on the table."""
    if noise.disturbance_prob <= 0.0:
        return state
    if float(noise.rng.random()) >= noise.disturbance_prob:
        return state
    tops = [b for b in state.blocks() if not state.children_of(b.id)]
    if not tops:
        return state
    victim_id = min(tops, key=lambda b: (-state.support_depth(b.id), b.id)).id
    new = state.copy()
    victim = new.get(victim_id)
    assert victim is not None
    others = [(o.x, o.y) for o in new.objects if o.id != victim_id]
    lim = new.table_half_extent - _EDGE_MARGIN
    for _ in range(SAMPLING_BUDGET):
        p = (float(noise.rng.uniform(-lim, lim)), float(noise.rng.uniform(-lim, lim)))
        if all(planar_distance(p, q) >= MIN_SPACING for q in others):
            victim.x, victim.y = p
            victim.z = 0.0
            victim.resting_on = None
            return new
    return state  # no free point found; leave the scene as is


# ---------------------------------------------------------------------------
# Goal predicates
# ---------------------------------------------------------------------------

def _single_chain(state: TabletopState, radius: float) -> Optional[list[ObjectSpec]]:
    """All blocks in one on(.,.) chain, bottom-up, or None."""
    blocks = sorted(state.blocks(), key=lambda b: (b.z, b.id))
    if len(blocks) < 2:
        return blocks
    for lower, upper in zip(blocks, blocks[1:]):
        if upper.z <= lower.z:
            return None
        if not on_predicate(state, upper.id, lower.id, radius):
            return None
    return blocks


def goal_satisfied(task: TabletopTask, state: TabletopState,
                   radius: float = SUCCESS_RADIUS) -> bool:
    """Evaluate the task family's goal predicate on ground-truth state."""
    family = task.family
    if not isinstance(family, TaskFamily):
        raise UnknownTask(f"unregistered task id {family!r}")
    blocks = state.blocks()
    bowls = state.bowls()
    if family == TaskFamily.PICK_AND_PLACE:
        if task.pick is None or task.place is None:
            raise UnknownTask("pick_and_place task missing parameters")
        return on_predicate(state, task.pick, task.place, radius)
    if family == TaskFamily.STACK_ALL:
        return _single_chain(state, radius) is not None
    if family == TaskFamily.ALL_ON_LOCATION:
        if task.place not in LOCATIONS:
            raise UnknownTask(f"bad location {task.place!r}")
        return all(on_predicate(state, b.id, task.place, radius) for b in blocks)
    if family == TaskFamily.ALL_IN_BOWL:
        if task.place is None or state.get(task.place) is None:
            raise UnknownTask(f"bad bowl {task.place!r}")
        return all(on_predicate(state, b.id, task.place, radius) for b in blocks)
    if family == TaskFamily.DIFFERENT_CORNERS:
        taken: set[str] = set()
        for b in blocks:
            spots = [c for c in CORNER_NAMES if on_predicate(state, b.id, c, radius)]
            if len(spots) != 1 or spots[0] in taken:
                return False
            taken.add(spots[0])
        return True
    if family == TaskFamily.MATCHING_BOWLS:
        for b in blocks:
            mates = [w for w in bowls if w.color == b.color]
            if not any(on_predicate(state, b.id, w.id, radius) for w in mates):
                return False
        return True
    if family == TaskFamily.MISMATCHED_BOWLS:
        for b in blocks:
            mates = [w for w in bowls if w.color != b.color]
            if not any(on_predicate(state, b.id, w.id, radius) for w in mates):
                return False
        return True
    if family == TaskFamily.STACK_ON_LOCATION:
        chain = _single_chain(state, radius)
        if chain is None or task.place not in LOCATIONS:
            return False
        return on_predicate(state, chain[0].id, task.place, radius)
    raise UnknownTask(f"unregistered task family {family!r}")


def min_pairwise_distance(state: TabletopState) -> float:
    pts = [(o.x, o.y) for o in state.objects]
    best = math.inf
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            best = min(best, planar_distance(pts[i], pts[j]))
    return best

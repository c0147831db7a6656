"""Task templates, attribute splits, seeded scene resets, and success predicates.

The benchmark suite instantiates 13 templated instructions whose attributes
come from disjoint seen/unseen lists. Resets rejection-sample object
placements until the task is not already complete and a straight-line
corridor with at least 5 cm clearance reaches every required target.
Success thresholds (5 cm position, 5% joint closure, +/-25% velocity band)
are fixed here and shared by every caller.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError, SetupError
from ..voxels import DEFAULT_SPEC
from .objects import JointKind, make_block, make_cabinet, make_drawer, make_latched, make_line
from .world import DisturbanceEvent, DisturbanceKind, WorldState

POS_TOL = 0.05
JOINT_CLOSED_FRAC = 0.05
VEL_BAND = 0.25
CLEARANCE_SLACK = 0.01  # one voxel
PAIR_CLEARANCE_MIN = 0.06
EE_START = np.array([0.5, 0.45, 0.28])
HOVER_Z = 0.15
MAX_RESAMPLES = 1000

# Published episode seed list used by the benchmark runner.
EPISODE_SEEDS = tuple(2000 + 37 * i for i in range(20))

SEEN_ATTRS = {
    "pos": [
        "back left corner of the table",
        "front right corner of the table",
        "right side of the table",
        "back side of the table",
    ],
    "obj": ["blue block", "green block", "yellow block", "pink block", "brown block"],
    "preposition": ["left of", "front side of", "top of"],
    "deixis": ["topmost", "second to the bottom"],
    "dist": [3, 5, 7, 9, 11],
    "region": ["right side of the table", "back side of the table"],
    "velocity": ["faster speed", "a quarter of the speed"],
    "line": ["blue line", "green line", "yellow line", "pink line", "brown line"],
}

UNSEEN_ATTRS = {
    "pos": [
        "back right corner of the table",
        "front left corner of the table",
        "left side of the table",
        "front side of the table",
    ],
    "obj": ["red block", "orange block", "purple block", "cyan block", "gray block"],
    "preposition": ["right of", "back side of"],
    "deixis": ["bottommost", "second to the top"],
    "dist": [4, 6, 8, 10],
    "region": ["left side of the table", "front side of the table"],
    "velocity": ["slower speed", "3x speed"],
    "line": ["red line", "orange line", "purple line", "cyan line", "gray line"],
}

POSITIONS = {
    "back left corner of the table": (0.18, 0.82),
    "front right corner of the table": (0.82, 0.18),
    "right side of the table": (0.82, 0.5),
    "back side of the table": (0.5, 0.82),
    "back right corner of the table": (0.82, 0.82),
    "front left corner of the table": (0.18, 0.18),
    "left side of the table": (0.18, 0.5),
    "front side of the table": (0.5, 0.18),
}

REGIONS = {
    "right side of the table": ((0.70, 0.10), (0.90, 0.90)),
    "left side of the table": ((0.10, 0.10), (0.30, 0.90)),
    "back side of the table": ((0.10, 0.70), (0.90, 0.90)),
    "front side of the table": ((0.10, 0.10), (0.90, 0.30)),
}

PREPOSITIONS = {
    "left of": (-1.0, 0.0, 0.0),
    "right of": (1.0, 0.0, 0.0),
    "front side of": (0.0, -1.0, 0.0),
    "back side of": (0.0, 1.0, 0.0),
    "top of": (0.0, 0.0, 1.0),
}
PREP_OFFSET_CM = 10.0

VELOCITY_SCALES = {
    "faster speed": 1.5,
    "a quarter of the speed": 0.25,
    "slower speed": 0.5,
    "3x speed": 3.0,
}

DEIXIS_DRAWERS = {
    "topmost": "topmost drawer",
    "second to the bottom": "middle drawer",
    "second to the top": "middle drawer",
    "bottommost": "bottommost drawer",
    # casual phrasings accepted by the open-drawer instruction
    "top": "topmost drawer",
    "bottom": "bottommost drawer",
}

LATCHED_SPECS = {
    # name: (open_axis, latch_threshold, lever_range, success_joint)
    "door": ((0.0, -1.0, 0.0), 0.45, (0.06, 0.10), 0.45),
    "window": ((1.0, 0.0, 0.0), 0.50, (0.05, 0.09), 0.40),
    "fridge": ((-1.0, 0.0, 0.0), 0.55, (0.05, 0.09), 0.40),
}
ZERO_SHOT_PRESS_M = 0.03  # zero-shot programs press handles this far


@dataclass(frozen=True)
class TemplateDef:
    id: str
    pattern: str  # instruction with {attr} placeholders
    category: str
    attrs: tuple[str, ...]


TEMPLATES: dict[str, TemplateDef] = {
    t.id: t
    for t in [
        TemplateDef(
            "move_prep_obj", "move to the {preposition} the {obj}", "spatial composition",
            ("preposition", "obj"),
        ),
        TemplateDef(
            "move_pos_stay_prep",
            "move to the {pos} while staying on the {preposition} the {obj}",
            "spatial composition", ("pos", "preposition", "obj"),
        ),
        TemplateDef(
            "move_pos_vel_near",
            "move to the {pos} while moving at {velocity} when within {dist}cm from the {obj}",
            "spatial composition", ("pos", "velocity", "dist", "obj"),
        ),
        TemplateDef(
            "close_drawer", "close the {deixis} drawer by pushing", "object interaction",
            ("deixis",),
        ),
        TemplateDef(
            "push_along_line", "push the {obj} along the {line}", "object interaction",
            ("obj", "line"),
        ),
        TemplateDef(
            "grasp_at_vel", "grasp the {obj} from the table at {velocity}",
            "object interaction", ("obj", "velocity"),
        ),
        TemplateDef(
            "drop_to_pos", "drop the {obj} to the {pos}", "object interaction",
            ("obj", "pos"),
        ),
        TemplateDef(
            "push_stay_region", "push the {obj} while letting it stay on {region}",
            "object interaction", ("obj", "region"),
        ),
        TemplateDef("move_region", "move to the {region}", "spatial composition", ("region",)),
        TemplateDef(
            "move_pos_min_dist",
            "move to the {pos} while staying at least {dist}cm from the {obj}",
            "spatial composition", ("pos", "dist", "obj"),
        ),
        TemplateDef(
            "move_pos_vel_region",
            "move to the {pos} while moving at {velocity} in the {region}",
            "spatial composition", ("pos", "velocity", "region"),
        ),
        TemplateDef(
            "push_pos_avoid",
            "push the {obj} to the {pos} while staying away from {obstacle}",
            "object interaction", ("obj", "pos", "obstacle"),
        ),
        TemplateDef("push_to_pos", "push the {obj} to the {pos}", "object interaction",
                    ("obj", "pos")),
        # Articulation tasks used by the dynamics-learning experiments and
        # the two-phase planning example; not part of the 13-template suite.
        TemplateDef("open_drawer", "open the {deixis} drawer", "object interaction", ("deixis",)),
        TemplateDef("open_door", "open the door", "object interaction", ()),
        TemplateDef("open_window", "open the window", "object interaction", ()),
        TemplateDef("open_fridge", "open the fridge", "object interaction", ()),
    ]
}

SUITE_TEMPLATES = [t for t in TEMPLATES if not t.startswith("open_")]


@dataclass
class TaskSpec:
    template: str
    bindings: dict = field(default_factory=dict)
    split: str = "seen"
    disturbances: list[DisturbanceEvent] = field(default_factory=list)
    observation_layout: list[str] = field(default_factory=list)
    tracking: dict = field(default_factory=dict)
    goal: dict = field(default_factory=dict)

    @property
    def category(self) -> str:
        return TEMPLATES[self.template].category

    @property
    def instruction(self) -> str:
        return render_instruction(self.template, self.bindings)

    def to_dict(self) -> dict:
        events = [
            {
                "kind": ev.kind.value,
                "schedule": ev.schedule,
                "params": ev.params,
                "trigger_joint_below": ev.trigger_joint_below,
            }
            for ev in self.disturbances
        ]
        return {
            "template": self.template,
            "bindings": self.bindings,
            "split": self.split,
            "disturbances": events,
            "observation_layout": self.observation_layout,
        }

    @staticmethod
    def from_dict(d: dict) -> "TaskSpec":
        events = [
            DisturbanceEvent(
                kind=DisturbanceKind(e["kind"]),
                schedule=e.get("schedule", 0),
                params=e.get("params", {}),
                trigger_joint_below=e.get("trigger_joint_below"),
            )
            for e in d.get("disturbances", [])
        ]
        task = TaskSpec(
            template=d["template"],
            bindings=dict(d.get("bindings", {})),
            split=d.get("split", "seen"),
            disturbances=events,
            observation_layout=list(d.get("observation_layout", [])),
        )
        _finalize_task(task)
        return task

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @staticmethod
    def load(path) -> "TaskSpec":
        return TaskSpec.from_dict(json.loads(Path(path).read_text()))


def render_instruction(template_id: str, bindings: dict) -> str:
    tdef = TEMPLATES[template_id]
    return tdef.pattern.format(**{a: bindings[a] for a in tdef.attrs})


def match_template(text: str):
    """Resolve an instruction or sub-task back to (template_id, bindings)."""
    import re

    text = " ".join(text.lower().split())
    for tdef in TEMPLATES.values():
        pat = re.escape(tdef.pattern)
        for attr in tdef.attrs:
            pat = pat.replace(re.escape("{%s}" % attr), r"(?P<%s>.+?)" % attr)
        m = re.fullmatch(pat, text)
        if m is None:
            continue
        bindings = dict(m.groupdict())
        if "dist" in bindings:
            try:
                bindings["dist"] = int(bindings["dist"])
            except ValueError:
                continue
        if _bindings_valid(tdef, bindings):
            return tdef.id, bindings
    return None, {}


def _bindings_valid(tdef: TemplateDef, bindings: dict) -> bool:
    for attr, value in bindings.items():
        if attr == "deixis":
            if value not in DEIXIS_DRAWERS:
                return False
            continue
        key = "obj" if attr == "obstacle" else attr
        if key not in SEEN_ATTRS:
            continue
        pool = SEEN_ATTRS[key] + UNSEEN_ATTRS[key]
        if value not in pool:
            return False
    return True


def make_task(template_id: str, split: str = "seen", seed: int = 0, disturb: bool = False) -> TaskSpec:
    """Instantiate a template with seeded attribute bindings from one split."""
    if template_id not in TEMPLATES:
        raise InvalidInputError(f"unknown template {template_id!r}")
    tdef = TEMPLATES[template_id]
    pools = SEEN_ATTRS if split == "seen" else UNSEEN_ATTRS
    rng = np.random.default_rng(seed)
    bindings: dict = {}
    for attr in tdef.attrs:
        key = "obj" if attr == "obstacle" else attr
        choices = [v for v in pools[key] if v not in bindings.values()]
        bindings[attr] = choices[int(rng.integers(len(choices)))]
    task = TaskSpec(template=template_id, bindings=bindings, split=split)
    _finalize_task(task)
    if disturb:
        task.disturbances = default_disturbances(task)
    return task


def _finalize_task(task: TaskSpec) -> None:
    """Fill goal data, tracking declarations, and observation layout."""
    b = task.bindings
    goal: dict = {}
    tracking: dict = {}
    t = task.template

    if "pos" in b:
        goal["target_xy"] = POSITIONS[b["pos"]]
    if "region" in b:
        lo, hi = REGIONS[b["region"]]
        goal["region"] = (lo, hi)
        goal["region_center"] = ((lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2)
    if "preposition" in b:
        goal["prep_dir"] = PREPOSITIONS[b["preposition"]]
    if "dist" in b:
        goal["dist_m"] = b["dist"] / 100.0
    if "velocity" in b:
        goal["vel_scale"] = VELOCITY_SCALES[b["velocity"]]
    if "deixis" in b:
        goal["drawer"] = DEIXIS_DRAWERS[b["deixis"]]

    if t == "move_pos_min_dist":
        tracking["clearance_to"] = (b["obj"],)
    elif t == "move_pos_vel_near":
        tracking["velocity_region"] = ("near", b["obj"], goal["dist_m"])
    elif t == "move_pos_vel_region":
        lo, hi = goal["region"]
        tracking["velocity_region"] = ("box", lo, hi)
    elif t == "grasp_at_vel":
        tracking["velocity_region"] = ("near", b["obj"], 0.10)
    elif t == "move_pos_stay_prep":
        tracking["halfspace"] = (b["obj"], PREPOSITIONS[b["preposition"]], CLEARANCE_SLACK)
    elif t in ("push_to_pos", "push_along_line", "push_stay_region", "push_pos_avoid"):
        tracking["track_object"] = b["obj"]
        if t == "push_pos_avoid":
            tracking["pair_clearance"] = (b["obj"], b["obstacle"])
    elif t in ("open_door", "open_window", "open_fridge"):
        name = t.split("_")[1]
        goal["latched"] = name
        goal["open_success"] = LATCHED_SPECS[name][3]
        task.observation_layout = [
            "ee_pos", "ee_quat", "gripper", f"handle_joint:{name}", f"joint:{name}",
        ]

    task.goal.update(goal)
    task.tracking.update(tracking)


def default_disturbances(task: TaskSpec) -> list[DisturbanceEvent]:
    """Scripted disturbance schedule mirroring moving obstacles and undone progress."""
    t = task.template
    if t == "move_pos_min_dist":
        tx, ty = task.goal["target_xy"]
        return [
            DisturbanceEvent(
                kind=DisturbanceKind.OBJECT_DISPLACEMENT,
                schedule=6,
                params={
                    "object": task.bindings["obj"],
                    "goal": (tx, ty, HOVER_Z),
                    "lateral_cm": task.bindings["dist"] + 4.0,
                    "min_clear_cm": task.bindings["dist"] + 3.0,
                },
            )
        ]
    if t == "close_drawer":
        return [
            DisturbanceEvent(
                kind=DisturbanceKind.PROGRESS_REVERSAL,
                schedule=0,
                params={"object": task.goal["drawer"], "target": "initial", "max_delta": 0.08},
                trigger_joint_below=0.4,
            )
        ]
    if t.startswith("move"):
        return [
            DisturbanceEvent(
                kind=DisturbanceKind.ROBOT_FORCE,
                schedule=6,
                params={"force": (-0.04, 0.0, 0.0)},
            )
        ]
    return []


# -- scene construction ---------------------------------------------------


def _sample_block_positions(rng, count, keepout=(), min_gap=0.10):
    """Seeded rejection placement with pairwise and keep-out constraints."""
    for _ in range(200):
        pts = []
        ok = True
        for _ in range(count):
            p = np.array([rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.62), 0.02])
            pts.append(p)
        for i in range(count):
            for j in range(i + 1, count):
                if np.linalg.norm(pts[i][:2] - pts[j][:2]) < min_gap:
                    ok = False
            for kx, ky, kr in keepout:
                if np.linalg.norm(pts[i][:2] - np.array([kx, ky])) < kr:
                    ok = False
        if ok:
            return pts
    raise SetupError("could not place blocks")


def _distractors(rng, task: TaskSpec, used: list[str], count: int = 2) -> list[str]:
    pools = SEEN_ATTRS if task.split == "seen" else UNSEEN_ATTRS
    names = [n for n in pools["obj"] if n not in used]
    order = rng.permutation(len(names))
    return [names[i] for i in order[:count]]


def required_targets(task: TaskSpec, state: WorldState) -> list[np.ndarray]:
    """World points a feasible episode must be able to reach in a straight line."""
    t = task.template
    pts = []
    if t in ("move_region",):
        cx, cy = task.goal["region_center"]
        pts.append(np.array([cx, cy, HOVER_Z]))
    elif "target_xy" in task.goal and t.startswith("move"):
        tx, ty = task.goal["target_xy"]
        pts.append(np.array([tx, ty, HOVER_Z]))
    if t == "move_prep_obj":
        block = state.find(task.bindings["obj"])
        d = np.asarray(task.goal["prep_dir"])
        pts.append(block.position + d * (PREP_OFFSET_CM / 100.0))
    if t.startswith("push") or t == "grasp_at_vel":
        pts.append(state.find(task.bindings["obj"]).position + np.array([0, 0, 0.06]))
    if t == "close_drawer" or t == "open_drawer":
        drawer = state.find(task.goal["drawer"])
        pts.append(drawer.world_points(drawer.part_rows("handle")).mean(axis=0))
    return pts


def _corridor_clear(state: WorldState, start: np.ndarray, end: np.ndarray, ignore=()) -> bool:
    """5 cm clearance from movable blocks along the straight start->end segment."""
    seg = end - start
    seg_len = np.linalg.norm(seg)
    if seg_len < 1e-9:
        return True
    for obj in state.objects:
        if not obj.interactable or obj.articulation.kind is not JointKind.RIGID:
            continue
        if obj.name in ignore:
            continue
        rel = obj.position - start
        tproj = float(np.clip(np.dot(rel, seg) / (seg_len**2), 0.0, 1.0))
        closest = start + tproj * seg
        clearance = float(np.linalg.norm(obj.position - closest)) - float(obj.half_extents.max())
        if clearance < 0.05:
            return False
    return True


def _build_scene(task: TaskSpec, rng: np.random.Generator) -> list:
    t = task.template
    b = task.bindings
    objects = []
    used = [b.get("obj", ""), b.get("obstacle", "")]

    if t in ("close_drawer", "open_drawer"):
        cab_pos = np.array([0.5, 0.85, 0.18])
        objects.append(make_cabinet(cab_pos))
        joints = {"topmost drawer": 0.0, "middle drawer": 0.0, "bottommost drawer": 0.0}
        target = task.goal["drawer"]
        joints[target] = float(rng.uniform(0.09, 0.14)) if t == "close_drawer" else 0.0
        for name, dz in (("topmost drawer", 0.10), ("middle drawer", 0.0), ("bottommost drawer", -0.10)):
            objects.append(make_drawer(name, cab_pos, dz, joints[name]))
        for name, p in zip(
            _distractors(rng, task, used), _sample_block_positions(rng, 2, keepout=((0.5, 0.85, 0.35),))
        ):
            objects.append(make_block(name, p))
        return objects

    if t in ("open_door", "open_window", "open_fridge"):
        name = task.goal["latched"]
        open_axis, threshold, lever_range, _ = LATCHED_SPECS[name]
        lever = float(rng.uniform(*lever_range))
        pos = (
            0.5 + rng.uniform(-0.02, 0.02),
            0.80 + rng.uniform(-0.01, 0.01),
            0.25 + rng.uniform(-0.005, 0.005),
        )
        objects.append(make_latched(name, pos, open_axis, threshold, lever))
        return objects

    # Tabletop block scenes.
    refs = []
    if "obj" in b:
        refs.append(b["obj"])
    if "obstacle" in b:
        refs.append(b["obstacle"])
    names = refs + _distractors(rng, task, used)
    keepout = []
    if "target_xy" in task.goal and t.startswith("push"):
        # Keep the goal area open so pushes can finish.
        keepout.append((*task.goal["target_xy"], 0.12))
    positions = _sample_block_positions(rng, len(names), keepout=keepout)
    if t == "move_pos_stay_prep":
        # The reference block must leave both the start pose and the goal on
        # the required side; sample it directly from the compatible interval.
        positions[0] = _stay_prep_block_position(task, rng)
    for name, p in zip(names, positions):
        objects.append(make_block(name, p))

    if t == "push_along_line":
        center = np.array([rng.uniform(0.35, 0.65), rng.uniform(0.25, 0.5), 0.0])
        line = make_line(b["line"], center, (1.0, 0.0, 0.0), length=0.24)
        objects.append(line)
        ends = line.world_points(np.concatenate([line.parts["end a"], line.parts["end b"]]))
        start_end = int(rng.integers(2))
        block = next(o for o in objects if o.name == b["obj"])
        block.position = np.array([ends[start_end][0], ends[start_end][1], block.half_extents[2]])
        task.goal["line_start"] = tuple(ends[start_end][:2])
        task.goal["line_target"] = tuple(ends[1 - start_end][:2])
    return objects


STAY_PREP_MARGIN = 0.05


def _stay_prep_block_position(task: TaskSpec, rng: np.random.Generator) -> np.ndarray:
    """Block placement satisfying the keep-to-one-side constraint for start and goal."""
    d = np.asarray(task.goal["prep_dir"])
    tx, ty = task.goal["target_xy"]
    lo = np.array([0.12, 0.12])
    hi = np.array([0.88, 0.88])
    for ax in range(2):
        if d[ax] > 0.5:  # stay on +ax side: block below both anchors
            hi[ax] = min(hi[ax], EE_START[ax] - STAY_PREP_MARGIN, (tx, ty)[ax] - STAY_PREP_MARGIN)
        elif d[ax] < -0.5:  # stay on -ax side: block above both anchors
            lo[ax] = max(lo[ax], EE_START[ax] + STAY_PREP_MARGIN, (tx, ty)[ax] + STAY_PREP_MARGIN)
    if np.any(lo > hi):
        raise SetupError("side constraint incompatible with the goal position")
    return np.array([rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]), 0.02])


def _scene_constraints_ok(task: TaskSpec, state: WorldState) -> bool:
    t = task.template
    b = task.bindings
    g = task.goal
    if t == "move_pos_min_dist":
        tx, ty = g["target_xy"]
        block = state.find(b["obj"])
        # The goal itself must be compatible with the keep-away constraint.
        if np.linalg.norm(block.position[:2] - np.array([tx, ty])) < g["dist_m"] + 0.08:
            return False
        if np.linalg.norm(block.position[:2] - EE_START[:2]) < g["dist_m"] + 0.03:
            return False
    if t == "move_pos_stay_prep":
        d = np.asarray(g["prep_dir"])[:2]
        if np.linalg.norm(d) > 1e-9:
            block = state.find(b["obj"])
            tx, ty = g["target_xy"]
            # Start and goal must already sit on the required side.
            if np.dot(EE_START[:2] - block.position[:2], d) < STAY_PREP_MARGIN - 1e-9:
                return False
            if np.dot(np.array([tx, ty]) - block.position[:2], d) < STAY_PREP_MARGIN - 1e-9:
                return False
    if t in ("push_to_pos", "push_pos_avoid"):
        tx, ty = g["target_xy"]
        block = state.find(b["obj"])
        span = np.linalg.norm(block.position[:2] - np.array([tx, ty]))
        if span < 0.12 or span > 0.60:
            return False
        if t == "push_pos_avoid":
            obstacle = state.find(b["obstacle"])
            if np.linalg.norm(obstacle.position[:2] - np.array([tx, ty])) < 0.15:
                return False
            # Obstacle near the straight push corridor makes avoidance meaningful
            # but must not seal the goal; just keep it off both endpoints.
            if np.linalg.norm(obstacle.position[:2] - block.position[:2]) < 0.12:
                return False
    if t == "push_stay_region":
        (lx, ly), (hx, hy) = g["region"]
        block = state.find(b["obj"])
        x, y = block.position[:2]
        if not (lx + 0.06 <= x <= hx - 0.06 and ly + 0.06 <= y <= hy - 0.06):
            return False
        cx, cy = g["region_center"]
        if np.linalg.norm(np.array([cx, cy]) - block.position[:2]) < 0.08:
            return False
    if t == "push_along_line":
        a = np.asarray(g["line_start"])
        c = np.asarray(g["line_target"])
        for o in state.objects:
            if o.articulation.kind is not JointKind.RIGID or not o.interactable:
                continue
            if o.name == b["obj"]:
                continue
            if _segment_distance(o.position[:2], a, c) < 0.10:
                return False
    return True


def reset(task: TaskSpec, seed: int) -> WorldState:
    """Deterministic scene reset; resamples until valid or raises SetupError."""
    rng = np.random.default_rng(seed)
    for _ in range(MAX_RESAMPLES):
        scene_rng = np.random.default_rng(rng.integers(2**63))
        try:
            objects = _build_scene(task, scene_rng)
        except SetupError:
            continue
        state = WorldState(
            objects=objects,
            ee_position=EE_START.copy(),
            rng=scene_rng,
            spec=DEFAULT_SPEC,
            task=task,
            schedule=list(task.disturbances),
        )
        if task.template == "drop_to_pos":
            block = state.find(task.bindings["obj"])
            state.gripper = 1.0
            state.grasped = block.name
            state.grasp_offset = np.array([0.0, 0.0, -0.05])
            block.position = state.ee_position + state.grasp_offset
        if not _scene_constraints_ok(task, state):
            continue
        if success_check(task, state):
            continue
        targets = required_targets(task, state)
        ignore = {task.bindings.get("obj", ""), task.bindings.get("obstacle", "")}
        if not all(
            _corridor_clear(state, state.ee_position, p, ignore=ignore) for p in targets
        ):
            continue
        return state
    raise SetupError(f"no feasible reset for {task.template} with seed {seed}")


# -- success predicates ---------------------------------------------------


def _xy_close(a, b, tol=POS_TOL) -> bool:
    return float(np.linalg.norm(np.asarray(a)[:2] - np.asarray(b)[:2])) <= tol


def _in_region(p, region, slack=0.0) -> bool:
    (lx, ly), (hx, hy) = region
    return lx - slack <= p[0] <= hx + slack and ly - slack <= p[1] <= hy + slack


def _velocity_band_ok(task: TaskSpec, state: WorldState) -> bool:
    scale = task.goal["vel_scale"]
    from .world import V_MAX

    lo = (1.0 - VEL_BAND) * scale * V_MAX
    hi = (1.0 + VEL_BAND) * scale * V_MAX
    for _, disp, full_step, inside in state.metrics.speed_records:
        if inside and full_step and not (lo <= disp <= hi):
            return False
    return True


def success_check(task: TaskSpec, state: WorldState) -> bool:
    t = task.template
    b = task.bindings
    g = task.goal
    ee = state.ee_position

    if t == "move_region":
        return _in_region(ee, g["region"])
    if t == "move_prep_obj":
        block = state.find(b["obj"])
        target = block.position + np.asarray(g["prep_dir"]) * (PREP_OFFSET_CM / 100.0)
        return float(np.linalg.norm(ee - target)) <= POS_TOL
    if t == "move_pos_min_dist":
        clo = state.metrics.min_clearance.get(b["obj"], np.inf)
        return _xy_close(ee, g["target_xy"]) and clo >= g["dist_m"] - CLEARANCE_SLACK
    if t == "move_pos_stay_prep":
        return _xy_close(ee, g["target_xy"]) and not state.metrics.side_violation
    if t in ("move_pos_vel_near", "move_pos_vel_region"):
        return _xy_close(ee, g["target_xy"]) and _velocity_band_ok(task, state)
    if t == "close_drawer":
        drawer = state.find(g["drawer"])
        lo, hi = drawer.articulation.limits
        return drawer.joint <= lo + JOINT_CLOSED_FRAC * (hi - lo)
    if t == "open_drawer":
        drawer = state.find(g["drawer"])
        lo, hi = drawer.articulation.limits
        return drawer.joint >= lo + 0.6 * (hi - lo)
    if t == "grasp_at_vel":
        return state.grasped == b["obj"] and _velocity_band_ok(task, state)
    if t == "drop_to_pos":
        block = state.find(b["obj"])
        return (
            state.grasped is None
            and state.gripper == 0.0
            and _xy_close(block.position, g["target_xy"])
        )
    if t == "push_to_pos":
        return _xy_close(state.find(b["obj"]).position, g["target_xy"])
    if t == "push_pos_avoid":
        key = f"{b['obj']}|{b['obstacle']}"
        clo = state.metrics.min_clearance.get(key, np.inf)
        return (
            _xy_close(state.find(b["obj"]).position, g["target_xy"])
            and clo >= PAIR_CLEARANCE_MIN
        )
    if t == "push_along_line":
        block = state.find(b["obj"])
        if not _xy_close(block.position, g["line_target"]):
            return False
        a = np.asarray(g["line_start"])
        c = np.asarray(g["line_target"])
        for p in state.metrics.entity_path:
            if _segment_distance(p[:2], a, c) > POS_TOL:
                return False
        return True
    if t == "push_stay_region":
        block = state.find(b["obj"])
        if not _in_region(block.position, g["region"]):
            return False
        path = state.metrics.entity_path
        if not path:
            return False
        if float(np.linalg.norm(block.position[:2] - path[0][:2])) < 0.05:
            return False
        return all(_in_region(p, g["region"], slack=CLEARANCE_SLACK) for p in path)
    if t in ("open_door", "open_window", "open_fridge"):
        return state.find(g["latched"]).joint >= g["open_success"]
    raise InvalidInputError(f"no success predicate for template {t!r}")


def _segment_distance(p, a, c) -> float:
    seg = c - a
    L2 = float(np.dot(seg, seg))
    if L2 < 1e-12:
        return float(np.linalg.norm(p - a))
    tproj = float(np.clip(np.dot(p - a, seg) / L2, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + tproj * seg)))

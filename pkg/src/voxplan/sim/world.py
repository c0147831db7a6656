"""Deterministic kinematic tabletop world.

The end-effector is a free-flying frame with a per-tick speed cap; there is
no arm geometry or inverse kinematics. Contact is kinematic: a closing
gripper within grasp range rigidly attaches an object, grasped articulated
handles turn projected hand motion into joint motion, and non-grasped
bodies respond to pushing contact. Stepping a state returns a new state;
identical inputs give bitwise-identical trajectories.
"""

from __future__ import annotations

import copy
import enum
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InvalidInputError
from ..geometry import rotate_towards
from ..trajectory import Waypoint
from ..voxels import DEFAULT_SPEC, GridSpec, world_to_voxel
from .objects import JointKind, SceneObject

TICK_SECONDS = 0.05  # 20 Hz simulation
V_MAX = 0.05  # meters per tick at velocity scale 1
GRASP_RANGE = 0.02  # two voxels: a 1.5 cm gate is unreachable on voxel centers
PUSH_RANGE = 0.02
EE_RADIUS = 0.01
ARRIVE_TOL = 0.006
MAX_ROT_STEP = 0.5  # radians per tick
FORCE_CAP = 0.05  # max end-effector displacement per force disturbance
WORKSPACE_MARGIN = 0.02


class DisturbanceKind(enum.Enum):
    ROBOT_FORCE = "robot_force"
    OBJECT_DISPLACEMENT = "object_displacement"
    PROGRESS_REVERSAL = "progress_reversal"


@dataclass
class DisturbanceEvent:
    kind: DisturbanceKind
    schedule: int = 0  # tick at which applied; ignored when trigger is set
    params: dict = field(default_factory=dict)
    # Optional progress trigger: fire when the named joint drops below a
    # fraction of its range ("while it's being closed" style events).
    trigger_joint_below: float | None = None

    def __post_init__(self):
        if self.schedule < 0:
            raise InvalidInputError("disturbance schedule must be >= 0")


@dataclass
class DetectionRecord:
    name: str
    center: np.ndarray
    occupancy: np.ndarray
    normal: np.ndarray
    points: np.ndarray  # world-frame points backing the record
    query: str = ""
    index: int = 0


@dataclass
class Metrics:
    """Per-episode measurements the success predicates consume."""

    min_clearance: dict[str, float] = field(default_factory=dict)
    speed_records: list[tuple[int, float, bool, bool]] = field(default_factory=list)
    # (tick, displacement, full_step, inside_velocity_region)
    entity_path: list[np.ndarray] = field(default_factory=list)
    side_violation: bool = False

    def copy(self) -> "Metrics":
        return Metrics(
            min_clearance=dict(self.min_clearance),
            speed_records=list(self.speed_records),
            entity_path=list(self.entity_path),
            side_violation=self.side_violation,
        )


@dataclass
class WorldState:
    objects: list[SceneObject]
    ee_position: np.ndarray
    ee_quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    gripper: float = 0.0
    tick: int = 0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    spec: GridSpec = DEFAULT_SPEC
    task: object | None = None  # TaskSpec; typed loosely to avoid an import cycle
    grasped: str | None = None
    grasp_offset: np.ndarray | None = None
    schedule: list[DisturbanceEvent] = field(default_factory=list)
    metrics: Metrics = field(default_factory=Metrics)
    flags: list[str] = field(default_factory=list)

    def copy(self) -> "WorldState":
        return replace(
            self,
            objects=[o.copy() for o in self.objects],
            ee_position=self.ee_position.copy(),
            ee_quaternion=self.ee_quaternion.copy(),
            rng=copy.deepcopy(self.rng),
            grasp_offset=None if self.grasp_offset is None else self.grasp_offset.copy(),
            schedule=list(self.schedule),
            metrics=self.metrics.copy(),
            flags=list(self.flags),
        )

    def find(self, name: str) -> SceneObject:
        for o in self.objects:
            if o.name == name:
                return o
        raise InvalidInputError(f"no object named {name!r}")

    def ee_pose(self) -> Waypoint:
        return Waypoint(
            position=self.ee_position.copy(),
            rotation=self.ee_quaternion.copy(),
            velocity_scale=1.0,
            gripper=self.gripper,
        )

    def scene_signature(self) -> tuple:
        """Pose-sensitive signature for memoizing map evaluations."""
        rows = []
        for o in self.objects:
            rows.append((o.name, tuple(np.round(o.position, 9)), round(o.joint, 9), round(o.handle_joint, 9)))
        return (tuple(rows), self.gripper, tuple(np.round(self.ee_quaternion, 9)))


# Part-name aliases used by ground-truth perception; deixis phrases map to
# the canonical drawer names.
NAME_ALIASES = {
    "second to the bottom drawer": "middle drawer",
    "second to the top drawer": "middle drawer",
    "top drawer": "topmost drawer",
    "bottom drawer": "bottommost drawer",
}


def _resolve_query(query: str) -> str:
    q = " ".join(query.lower().split())
    for alias, canonical in NAME_ALIASES.items():
        if q.startswith(alias):
            q = canonical + q[len(alias):]
    return q


def rasterize(points: np.ndarray, spec: GridSpec) -> np.ndarray:
    occ = np.zeros(spec.dims, dtype=bool)
    if len(points) == 0:
        return occ
    idx = np.floor((points - np.asarray(spec.world_min)) / spec.voxel_size).astype(int)
    idx = np.clip(idx, 0, np.asarray(spec.dims) - 1)
    occ[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return occ


def detect(state: WorldState, query: str) -> list[DetectionRecord]:
    """Ground-truth perception: one record per object or named part match."""
    q = _resolve_query(query)
    records: list[DetectionRecord] = []
    for obj in state.objects:
        rows = None
        if q == obj.name:
            rows = np.arange(len(obj.points))
        else:
            for part in obj.parts:
                if q == f"{obj.name} {part}":
                    rows = obj.part_rows(part)
                    break
        if rows is None:
            continue
        pts = obj.world_points(rows)
        normals = obj.normals[rows]
        mean_n = normals.mean(axis=0)
        nn = np.linalg.norm(mean_n)
        normal = mean_n / nn if nn > 1e-9 else np.array([0.0, 0.0, 1.0])
        records.append(
            DetectionRecord(
                name=q,
                center=pts.mean(axis=0),
                occupancy=rasterize(pts, state.spec),
                normal=normal,
                points=pts,
                query=query,
                index=len(records),
            )
        )
    return records


def occupancy_grid(state: WorldState, exclude: str | None = None) -> np.ndarray:
    """Rasterized surface voxels of all interactable objects."""
    occ = np.zeros(state.spec.dims, dtype=bool)
    for obj in state.objects:
        if not obj.interactable or obj.name == exclude:
            continue
        occ |= rasterize(obj.world_points(), state.spec)
    return occ


def _clamp_workspace(state: WorldState, p: np.ndarray) -> tuple[np.ndarray, bool]:
    lo = np.asarray(state.spec.world_min) + WORKSPACE_MARGIN
    hi = np.asarray(state.spec.world_max) - WORKSPACE_MARGIN
    clamped = np.clip(p, lo, hi)
    return clamped, bool(np.any(clamped != p))


def _handle_reference(obj: SceneObject) -> np.ndarray:
    return obj.world_points(obj.part_rows("handle")).mean(axis=0)


def _apply_grasped_articulation(state: WorldState, step_vec: np.ndarray) -> np.ndarray:
    """Project a desired hand displacement through a grasped joint.

    Returns the realized end-effector displacement; joint state is updated
    in place on the grasped object.
    """
    obj = state.find(state.grasped)
    art = obj.articulation
    realized = np.zeros(3)
    if art.kind is JointKind.PRISMATIC:
        axis = np.asarray(art.axis)
        want = float(np.dot(step_vec, axis))
        before = obj.joint
        obj.joint += want
        obj.clamp_joints()
        realized = (obj.joint - before) * axis
    elif art.kind is JointKind.REVOLUTE_LATCHED:
        h_axis = np.asarray(art.handle_axis)
        press = float(np.dot(step_vec, h_axis))
        before_h = obj.handle_joint
        obj.handle_joint += press / art.handle_lever
        obj.clamp_joints()
        realized = (obj.handle_joint - before_h) * art.handle_lever * h_axis
        if obj.handle_joint >= art.latch_threshold:
            obj.unlatched = True
        if obj.unlatched:
            m_axis = np.asarray(art.axis)
            want = float(np.dot(step_vec, m_axis))
            before_m = obj.joint
            obj.joint += want / art.main_lever
            obj.clamp_joints()
            realized = realized + (obj.joint - before_m) * art.main_lever * m_axis
    return realized


def _drawer_push_contact(state: WorldState, ee_before: np.ndarray, ee_after: np.ndarray) -> None:
    """Pushing on a drawer front or handle drives its joint closed."""
    step_vec = ee_after - ee_before
    for obj in state.objects:
        if obj.articulation.kind is not JointKind.PRISMATIC or obj.name == state.grasped:
            continue
        closing = -np.asarray(obj.articulation.axis)
        push = float(np.dot(step_vec, closing))
        if push <= 0:
            continue
        rows = np.concatenate([obj.part_rows("handle"), obj.part_rows("front")])
        pts = obj.world_points(rows)
        d_before = np.linalg.norm(pts - ee_before, axis=1).min()
        d_after = np.linalg.norm(pts - ee_after, axis=1).min()
        if min(d_before, d_after) <= PUSH_RANGE:
            obj.joint -= push
            obj.clamp_joints()


def _block_push_contact(state: WorldState, ee_after: np.ndarray, skip: str | None = None) -> None:
    """Horizontal penetration resolution between the hand and free blocks."""
    for obj in state.objects:
        if (
            not obj.interactable
            or obj.name == state.grasped
            or obj.name == skip
            or obj.articulation.kind is not JointKind.RIGID
        ):
            continue
        contact_r = float(obj.half_extents.max()) + EE_RADIUS
        diff = obj.position - ee_after
        dist = float(np.linalg.norm(diff))
        if dist >= contact_r:
            continue
        horiz = diff.copy()
        horiz[2] = 0.0
        hn = float(np.linalg.norm(horiz))
        if hn < 1e-9:
            continue  # vertical contact transfers no planar motion
        obj.position = obj.position + (contact_r - dist) * (horiz / hn)
        lo = np.asarray(state.spec.world_min) + obj.half_extents
        hi = np.asarray(state.spec.world_max) - obj.half_extents
        obj.position = np.clip(obj.position, lo, hi)


def _attach_if_close(state: WorldState) -> None:
    best = None
    for obj in state.objects:
        if not obj.interactable:
            continue
        for part in obj.graspable_parts:
            pts = obj.world_points(obj.part_rows(part))
            d = float(np.linalg.norm(pts - state.ee_position, axis=1).min())
            if d <= GRASP_RANGE and (best is None or d < best[0]):
                best = (d, obj, part)
    if best is not None:
        _, obj, part = best
        state.grasped = obj.name
        if obj.articulation.kind is JointKind.RIGID:
            state.grasp_offset = obj.position - state.ee_position
        else:
            # Gripping a bar centers the hand on it, so joint projections
            # see the hand exactly at the handle reference point.
            state.ee_position = obj.world_points(obj.part_rows(part)).mean(axis=0)
            state.grasp_offset = None
            obj.unlatched = False


def _release(state: WorldState) -> None:
    if state.grasped is None:
        return
    obj = state.find(state.grasped)
    if obj.articulation.kind is JointKind.RIGID:
        # Kinematic settle: released blocks drop to their rest height.
        obj.position = obj.position.copy()
        obj.position[2] = float(obj.half_extents[2])
    else:
        obj.handle_joint = 0.0  # sprung handle returns on release
        obj.unlatched = False
    state.grasped = None
    state.grasp_offset = None


def _update_metrics(state: WorldState, before: np.ndarray, after: np.ndarray, budget: float) -> None:
    task = state.task
    if task is None:
        return
    tracking = getattr(task, "tracking", {})
    for name in tracking.get("clearance_to", ()):  # horizontal clearance to centers
        try:
            center = state.find(name).position
        except InvalidInputError:
            continue
        d = float(np.linalg.norm((after - center)[:2]))
        prev = state.metrics.min_clearance.get(name, np.inf)
        state.metrics.min_clearance[name] = min(prev, d)
    region = tracking.get("velocity_region")
    if region is not None:
        disp = float(np.linalg.norm(after - before))
        if disp > 1e-9:
            inside = _in_velocity_region(state, region, before) and _in_velocity_region(
                state, region, after
            )
            full_step = disp >= budget - 1e-9
            state.metrics.speed_records.append((state.tick, disp, full_step, inside))
    track_obj = tracking.get("track_object")
    if track_obj is not None:
        try:
            state.metrics.entity_path.append(state.find(track_obj).position.copy())
        except InvalidInputError:
            pass
    pair = tracking.get("pair_clearance")
    if pair is not None:
        a, b = pair
        try:
            d = float(np.linalg.norm((state.find(a).position - state.find(b).position)[:2]))
        except InvalidInputError:
            d = np.inf
        key = f"{a}|{b}"
        state.metrics.min_clearance[key] = min(state.metrics.min_clearance.get(key, np.inf), d)
    half = tracking.get("halfspace")
    if half is not None:
        name, normal, margin = half
        try:
            center = state.find(name).position
        except InvalidInputError:
            center = None
        if center is not None:
            side = float(np.dot((after - center)[:2], np.asarray(normal)[:2]))
            if side < -margin:
                state.metrics.side_violation = True


def _in_velocity_region(state: WorldState, region, p: np.ndarray) -> bool:
    kind = region[0]
    if kind == "near":
        _, name, radius = region
        try:
            center = state.find(name).position
        except InvalidInputError:
            return False
        return float(np.linalg.norm((p - center)[:2])) <= radius
    _, lo, hi = region  # ("box", lo_xy, hi_xy)
    return bool(lo[0] <= p[0] <= hi[0] and lo[1] <= p[1] <= hi[1])


def _apply_due_disturbances(state: WorldState) -> None:
    remaining = []
    for ev in state.schedule:
        due = False
        if ev.trigger_joint_below is not None:
            name = ev.params.get("object", "")
            try:
                obj = state.find(name)
                lo, hi = obj.articulation.limits
                frac = (obj.joint - lo) / (hi - lo) if hi > lo else 0.0
                due = frac <= ev.trigger_joint_below
            except InvalidInputError:
                due = False
        else:
            due = state.tick >= ev.schedule
        if due:
            _apply_disturbance(state, ev)
        else:
            remaining.append(ev)
    state.schedule = remaining


def step_waypoint(state: WorldState, wp: Waypoint) -> WorldState:
    """Advance one tick toward a waypoint; returns the successor state."""
    s = state.copy()
    target, clamped = _clamp_workspace(s, wp.position)
    if clamped:
        s.flags.append(f"tick{s.tick}:waypoint-clamped")
    budget = V_MAX * wp.velocity_scale
    delta = target - s.ee_position
    dist = float(np.linalg.norm(delta))
    step_vec = delta if dist <= budget else delta * (budget / dist)

    before = s.ee_position.copy()
    grasped_obj = s.find(s.grasped) if s.grasped is not None else None
    if grasped_obj is not None and grasped_obj.articulation.kind is not JointKind.RIGID:
        realized = _apply_grasped_articulation(s, step_vec)
        s.ee_position = s.ee_position + realized
    else:
        s.ee_position = s.ee_position + step_vec
        _drawer_push_contact(s, before, s.ee_position)
        _block_push_contact(s, s.ee_position)
        if grasped_obj is not None:
            grasped_obj.position = s.ee_position + s.grasp_offset

    s.ee_quaternion = rotate_towards(s.ee_quaternion, wp.rotation, MAX_ROT_STEP)

    arrived = float(np.linalg.norm(target - s.ee_position)) <= ARRIVE_TOL
    if arrived and wp.gripper != s.gripper:
        s.gripper = wp.gripper
        if s.gripper == 0.0:
            _release(s)
    if s.gripper == 1.0 and s.grasped is None:
        _attach_if_close(s)

    s.tick += 1
    _apply_due_disturbances(s)
    _update_metrics(s, before, s.ee_position, budget)
    return s


def _swept_travel(state: WorldState, obj: SceneObject, direction: np.ndarray, distance: float) -> tuple[float, bool]:
    """Max travel of an axis-aligned body before hitting another or a bound."""
    lo, hi = obj.aabb()
    allowed = distance
    ws_lo = np.asarray(state.spec.world_min)
    ws_hi = np.asarray(state.spec.world_max)
    for ax in range(3):
        d = direction[ax]
        if d > 1e-12:
            allowed = min(allowed, (ws_hi[ax] - hi[ax]) / d)
        elif d < -1e-12:
            allowed = min(allowed, (lo[ax] - ws_lo[ax]) / -d)
    for other in state.objects:
        if other.name == obj.name or not other.interactable:
            continue
        olo, ohi = other.aabb()
        # Entry time of the swept AABB against the static AABB per axis.
        t_entry, t_exit = -np.inf, np.inf
        for ax in range(3):
            d = direction[ax]
            if abs(d) < 1e-12:
                if hi[ax] <= olo[ax] or lo[ax] >= ohi[ax]:
                    t_entry = np.inf
                    break
                continue
            t1 = (olo[ax] - hi[ax]) / d
            t2 = (ohi[ax] - lo[ax]) / d
            t_entry = max(t_entry, min(t1, t2))
            t_exit = min(t_exit, max(t1, t2))
        if np.isfinite(t_entry) and t_entry < t_exit and t_entry >= 0:
            allowed = min(allowed, t_entry)
    allowed = max(0.0, allowed)
    return allowed, allowed < distance - 1e-12


def apply_push(state: WorldState, contact, direction, distance: float) -> WorldState:
    """Execute the scripted planar push primitive: approach, push, retreat."""
    contact = np.asarray(contact, dtype=float)
    d = np.asarray(direction, dtype=float)
    dn = np.linalg.norm(d)
    if dn == 0 or abs(d[2]) > 1e-9 * max(1.0, dn):
        raise InvalidInputError("push direction must be a nonzero horizontal vector")
    d = d / dn
    if distance < 0:
        raise InvalidInputError("push distance must be >= 0")

    target_obj = None
    best = np.inf
    for obj in state.objects:
        if not obj.interactable or obj.articulation.kind is not JointKind.RIGID:
            continue
        dd = float(np.linalg.norm(obj.world_points() - contact, axis=1).min())
        if dd < best:
            best, target_obj = dd, obj
    if target_obj is None or best > PUSH_RANGE:
        s = state.copy()
        s.flags.append(f"tick{s.tick}:contact-miss")
        return s

    s = state.copy()
    obj = s.find(target_obj.name)
    travel, truncated = _swept_travel(s, obj, d, distance)
    if truncated:
        s.flags.append(f"tick{s.tick}:push-collision")
    start_pos = obj.position.copy()

    approach = contact - d * 0.04
    push_end = contact + d * (travel + 0.001)
    retreat = push_end + np.array([0.0, 0.0, 0.08])
    phases = [("approach", approach), ("push", push_end), ("retreat", retreat)]
    for phase, point in phases:
        guard = 0
        while guard < 40:
            wp = Waypoint(
                position=point,
                rotation=s.ee_quaternion.copy(),
                velocity_scale=1.0,
                gripper=s.gripper,
            )
            s = step_waypoint(s, wp)
            if phase == "push":
                progress = float(np.dot(s.ee_position - contact, d))
                slide = float(np.clip(progress, 0.0, travel))
                o = s.find(obj.name)
                o.position = start_pos + d * slide
            if float(np.linalg.norm(s.ee_position - _clamp_workspace(s, point)[0])) <= ARRIVE_TOL:
                break
            guard += 1
    final = s.find(obj.name)
    final.position = start_pos + d * travel
    return s


def _apply_disturbance(state: WorldState, ev: DisturbanceEvent) -> None:
    if ev.kind is DisturbanceKind.ROBOT_FORCE:
        force = np.asarray(ev.params.get("force", (0.0, 0.0, 0.0)), dtype=float)
        n = float(np.linalg.norm(force))
        if n > FORCE_CAP:
            force = force * (FORCE_CAP / n)
        moved, _ = _clamp_workspace(state, state.ee_position + force)
        state.ee_position = moved
        state.flags.append(f"tick{state.tick}:robot-force")
    elif ev.kind is DisturbanceKind.OBJECT_DISPLACEMENT:
        name = ev.params["object"]
        try:
            obj = state.find(name)
        except InvalidInputError:
            state.flags.append(f"tick{state.tick}:displacement-rejected")
            return
        pos = _displacement_target(state, obj, ev.params)
        lo = np.asarray(state.spec.world_min) + obj.half_extents
        hi = np.asarray(state.spec.world_max) - obj.half_extents
        if np.any(pos < lo) or np.any(pos > hi):
            state.flags.append(f"tick{state.tick}:displacement-rejected")
            return
        obj.position = pos
        state.flags.append(f"tick{state.tick}:object-displaced:{name}")
    else:
        name = ev.params["object"]
        obj = state.find(name)
        if obj.articulation.kind is JointKind.RIGID:
            raise InvalidInputError("progress_reversal needs an articulated object")
        target = ev.params.get("target", "initial")
        if target == "initial":
            value = obj.initial_joint
        else:
            value = float(target)
        delta = ev.params.get("max_delta")
        if delta is not None:
            value = min(value, obj.joint + float(delta))
        obj.joint = value
        obj.clamp_joints()
        state.flags.append(f"tick{state.tick}:progress-reversal:{name}")


def _displacement_target(state: WorldState, obj: SceneObject, params: dict) -> np.ndarray:
    if "position" in params:
        return np.asarray(params["position"], dtype=float)
    # "toward_path": drop the object near the midpoint between the hand and
    # the task goal, offset laterally, but never closer to the hand than
    # min_clear meters.
    goal = np.asarray(params.get("goal", (0.5, 0.5, 0.0)), dtype=float)
    lateral_m = float(params.get("lateral_cm", 6.0)) / 100.0
    min_clear = float(params.get("min_clear_cm", 8.0)) / 100.0
    mid = 0.5 * (state.ee_position + goal)
    axis = goal[:2] - state.ee_position[:2]
    an = np.linalg.norm(axis)
    perp = np.array([-axis[1], axis[0]]) / an if an > 1e-9 else np.array([1.0, 0.0])
    pos = np.array([mid[0] + perp[0] * lateral_m, mid[1] + perp[1] * lateral_m, obj.position[2]])
    away = pos[:2] - state.ee_position[:2]
    dist = float(np.linalg.norm(away))
    if dist < min_clear and dist > 1e-9:
        pos[:2] = state.ee_position[:2] + away * (min_clear / dist)
    return pos


def inject_disturbance(state: WorldState, ev: DisturbanceEvent) -> WorldState:
    """Apply one disturbance event immediately; the tick is unchanged."""
    if ev.trigger_joint_below is None and ev.schedule != state.tick:
        raise InvalidInputError("event schedule does not match the current tick")
    s = state.copy()
    _apply_disturbance(s, ev)
    return s


def observe(state: WorldState) -> np.ndarray:
    """Flatten the task-declared observation layout into a vector."""
    task = state.task
    layout = getattr(task, "observation_layout", None) or ["ee_pos", "ee_quat", "gripper"]
    parts = []
    for item in layout:
        if item == "ee_pos":
            parts.append(state.ee_position)
        elif item == "ee_quat":
            parts.append(state.ee_quaternion)
        elif item == "gripper":
            parts.append([state.gripper])
        elif item.startswith("joint:"):
            parts.append([state.find(item.split(":", 1)[1]).joint])
        elif item.startswith("handle_joint:"):
            parts.append([state.find(item.split(":", 1)[1]).handle_joint])
        elif item.startswith("objpos:"):
            parts.append(state.find(item.split(":", 1)[1]).position)
        else:
            raise InvalidInputError(f"unknown observation field {item!r}")
    return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])

"""Trajectory synthesis from value maps.

Planning pipeline per replan: extract a strictly-descending greedy path on
the composed cost map, sample noise-perturbed variants repaired back into
the strictly-descending class, score every candidate with the task cost
plus control terms, and keep the argmin. The MPC loop executes the chosen
polyline for one replan interval, then re-evaluates the value maps against
the latest world state and replans. Object-entity tasks instead optimize a
planar push action against the predicted object path.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import (
    InfeasibleStartError,
    PerceptionFailure,
    PlanningInfeasibleError,
)
from .geometry import quat_angle, rotate_towards
from .trajectory import Entity, MapSet, PushAction, Trajectory, Waypoint
from .voxels import CostMap, minmax_normalize, voxel_to_world, world_to_voxel
from .sim.world import ARRIVE_TOL, V_MAX, WorldState, detect, occupancy_grid, step_waypoint

# 26-connected neighborhood in lexicographic offset order (tie-break order).
NEIGHBOR_OFFSETS = np.array(
    [off for off in itertools.product((-1, 0, 1), repeat=3) if off != (0, 0, 0)]
)

ROT_SMOOTH_STEP = 0.3  # max rotation change between consecutive waypoints


@dataclass(frozen=True)
class PlannerConfig:
    weights: tuple[float, float] = (2.0, 1.0)
    replan_interval: int = 4  # ticks between replans: 5 Hz at the 20 Hz sim rate
    horizon: int = 200  # max waypoints per plan
    samples: int = 256  # candidate count for random shooting
    noise_sigma: float = 1.0  # voxels of waypoint position noise
    lambda_len: float = 0.1  # control cost per meter of path length
    lambda_rot: float = 0.01  # control cost per radian of rotation change
    collision_threshold: float = 0.95  # on normalized avoidance
    tick_budget: int = 600
    min_candidate_len: int = 8
    push_budget: int = 15
    stall_limit: int = 3


DEFAULT_PLANNER = PlannerConfig()


def collision_mask(maps: MapSet, occupancy: np.ndarray | None, config: PlannerConfig) -> np.ndarray:
    """Voxels the end-effector may not enter: object surfaces and hot avoidance."""
    spec = maps.require_affordance().spec
    blocked = np.zeros(spec.dims, dtype=bool) if occupancy is None else occupancy.copy()
    if maps.avoidance is not None:
        blocked |= minmax_normalize(maps.avoidance.data) >= config.collision_threshold
    return blocked


def greedy_path(
    cost: CostMap,
    start,
    config: PlannerConfig = DEFAULT_PLANNER,
    blocked: np.ndarray | None = None,
) -> np.ndarray:
    """Steepest-descent walk over the cost grid.

    Each step moves to the 26-neighbor with the strictly lowest cost that is
    collision-free; ties break on the lexicographically smallest offset. The
    walk ends at a local minimum or after `horizon` voxels, so returned
    costs are strictly decreasing.
    """
    dims = np.asarray(cost.spec.dims)
    start = np.asarray(start, dtype=int)
    if blocked is None:
        blocked = np.zeros(cost.spec.dims, dtype=bool)
    if blocked[tuple(start)]:
        raise InfeasibleStartError(f"start voxel {tuple(start)} is in collision")
    data = cost.data
    path = [start]
    current = start
    c_cur = data[tuple(start)]
    for _ in range(config.horizon - 1):
        nbs = current + NEIGHBOR_OFFSETS
        inside = np.all((nbs >= 0) & (nbs < dims), axis=1)
        nbs = nbs[inside]
        free = ~blocked[nbs[:, 0], nbs[:, 1], nbs[:, 2]]
        nbs = nbs[free]
        if len(nbs) == 0:
            break
        costs = data[nbs[:, 0], nbs[:, 1], nbs[:, 2]]
        c_min = costs.min()
        if not c_min < c_cur:
            break
        nxt = nbs[int(np.argmax(costs == c_min))]  # first == lexicographic smallest offset
        path.append(nxt)
        current = nxt
        c_cur = c_min
    return np.asarray(path)


def parametrize(path, maps: MapSet, current_pose: Waypoint, entity: Entity | None = None) -> Trajectory:
    """Attach rotation, velocity, and gripper parametrization to a voxel path."""
    path = np.asarray(path, dtype=int)
    if len(path) == 0:
        raise PlanningInfeasibleError("cannot parametrize an empty path")
    spec = maps.require_affordance().spec
    ix, iy, iz = path[:, 0], path[:, 1], path[:, 2]
    if maps.rotation is not None:
        rotations = maps.rotation.data[ix, iy, iz]
    else:
        rotations = np.tile(current_pose.rotation, (len(path), 1))
    if maps.velocity is not None:
        scales = maps.velocity.data[ix, iy, iz]
    else:
        scales = np.ones(len(path))
    if maps.gripper is not None:
        grips = np.rint(maps.gripper.data[ix, iy, iz])
    else:
        grips = np.full(len(path), current_pose.gripper)

    waypoints = []
    prev_rot = current_pose.rotation
    for i in range(len(path)):
        rot = rotate_towards(prev_rot, rotations[i], ROT_SMOOTH_STEP)
        prev_rot = rot
        waypoints.append(
            Waypoint(
                position=voxel_to_world(path[i], spec),
                rotation=rot,
                velocity_scale=float(scales[i]),
                gripper=float(grips[i]),
            )
        )
    return Trajectory(waypoints=waypoints, entity=entity or maps.entity)


def _path_metrics(path: np.ndarray, spec) -> tuple[np.ndarray, float]:
    pos = np.asarray(spec.world_min) + (path + 0.5) * spec.voxel_size
    if len(pos) < 2:
        return pos, 0.0
    return pos, float(np.linalg.norm(np.diff(pos, axis=0), axis=1).sum())


def _score_voxel_path(path: np.ndarray, maps: MapSet, config: PlannerConfig) -> float:
    """Selection objective for candidate voxel paths (rotation from raw maps)."""
    cost = maps.cost_map().data
    task_cost = float(cost[path[:, 0], path[:, 1], path[:, 2]].sum())
    _, length = _path_metrics(path, maps.require_affordance().spec)
    rot_cost = 0.0
    if maps.rotation is not None and len(path) > 1:
        quats = maps.rotation.data[path[:, 0], path[:, 1], path[:, 2]]
        dots = np.abs(np.clip((quats[:-1] * quats[1:]).sum(axis=1), -1.0, 1.0))
        rot_cost = float((2.0 * np.arccos(dots)).sum())
    return task_cost + config.lambda_len * length + config.lambda_rot * rot_cost


def score_trajectory(traj: Trajectory, maps: MapSet, config: PlannerConfig = DEFAULT_PLANNER) -> float:
    """Task cost accumulated along the trajectory plus control costs; lower is better."""
    spec = maps.require_affordance().spec
    voxels = np.array([world_to_voxel(w.position, spec) for w in traj.waypoints])
    cost = maps.cost_map().data
    task_cost = float(cost[voxels[:, 0], voxels[:, 1], voxels[:, 2]].sum())
    positions = traj.positions()
    length = 0.0
    if len(positions) > 1:
        length = float(np.linalg.norm(np.diff(positions, axis=0), axis=1).sum())
    rot_cost = 0.0
    for a, b in zip(traj.waypoints[:-1], traj.waypoints[1:]):
        rot_cost += quat_angle(a.rotation, b.rotation)
    return task_cost + config.lambda_len * length + config.lambda_rot * rot_cost


def _perturbed_candidate(
    greedy: np.ndarray,
    noise: np.ndarray,
    cost: np.ndarray,
    blocked: np.ndarray,
    dims: np.ndarray,
) -> np.ndarray:
    """Noise the greedy path, then repair to a strictly-descending free path.

    Proposals that would collide or raise the cost fall back to the greedy
    voxel; if that fails too, the candidate is truncated, which keeps every
    candidate inside the class the exhaustive-search bound covers.
    """
    out = [greedy[0]]
    c_cur = cost[tuple(greedy[0])]
    T = len(noise) + 1
    for j in range(1, T):
        base = greedy[min(j, len(greedy) - 1)]
        accepted = False
        for prop in (base + noise[j - 1], base):
            prop = np.clip(prop, out[-1] - 2, out[-1] + 2)
            prop = np.clip(prop, 0, dims - 1)
            if np.array_equal(prop, out[-1]):
                continue
            c = cost[tuple(prop)]
            if not blocked[tuple(prop)] and c < c_cur:
                out.append(prop)
                c_cur = c
                accepted = True
                break
        if not accepted:
            break
    return np.asarray(out)


def sample_and_score(
    maps: MapSet,
    start,
    config: PlannerConfig = DEFAULT_PLANNER,
    seed: int = 0,
    blocked: np.ndarray | None = None,
    current_pose: Waypoint | None = None,
) -> Trajectory:
    """Zeroth-order trajectory search: greedy path plus noisy variants, argmin score."""
    spec = maps.require_affordance().spec
    dims = np.asarray(spec.dims)
    if blocked is None:
        blocked = np.zeros(spec.dims, dtype=bool)
    if current_pose is None:
        current_pose = Waypoint(position=voxel_to_world(start, spec))
    greedy = greedy_path(maps.cost_map(), start, config, blocked)
    cost = maps.cost_map().data

    candidates = [greedy]
    rng = np.random.default_rng(seed)
    T = max(len(greedy), config.min_candidate_len)
    if config.noise_sigma > 0:
        for _ in range(config.samples - 1):
            noise = np.rint(rng.normal(0.0, config.noise_sigma, size=(T - 1, 3))).astype(int)
            cand = _perturbed_candidate(greedy, noise, cost, blocked, dims)
            candidates.append(cand)

    best_idx = 0
    best_score = np.inf
    for i, cand in enumerate(candidates):
        s = _score_voxel_path(cand, maps, config)
        if s < best_score:
            best_score = s
            best_idx = i
    return parametrize(candidates[best_idx], maps, current_pose)


def _escape_path(blocked: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Shortest deterministic route out of a blocked region (BFS, lexicographic)."""
    dims = np.asarray(blocked.shape)
    start_t = tuple(int(v) for v in start)
    prev: dict[tuple, tuple | None] = {start_t: None}
    queue = deque([start_t])
    found = None
    while queue:
        cur = queue.popleft()
        if not blocked[cur]:
            found = cur
            break
        for off in NEIGHBOR_OFFSETS:
            nb = (cur[0] + off[0], cur[1] + off[1], cur[2] + off[2])
            if any(c < 0 or c >= d for c, d in zip(nb, dims)):
                continue
            if nb not in prev:
                prev[nb] = cur
                queue.append(nb)
    if found is None:
        return np.asarray([start])
    path = []
    node = found
    while node is not None:
        path.append(node)
        node = prev[node]
    return np.asarray(path[::-1])


class SceneCache:
    """Re-evaluates map closures against the latest state, memoized per scene pose."""

    def __init__(self, source, config: PlannerConfig = DEFAULT_PLANNER):
        self.source = source
        self.config = config
        self._key = None
        self._value = None

    def evaluate(self, state: WorldState) -> tuple[MapSet, np.ndarray]:
        key = (state.scene_signature(), state.grasped)
        if key != self._key:
            maps = self.source(state)
            # A grasped object travels with the hand and cannot collide with it.
            occ = occupancy_grid(state, exclude=state.grasped)
            blocked = collision_mask(maps, occ, self.config)
            self._key = key
            self._value = (maps, blocked)
        return self._value


def follow_trajectory(state: WorldState, traj: Trajectory, ticks: int, trace=None) -> WorldState:
    """Track a planned polyline for a tick budget at each segment's speed."""
    wps = traj.waypoints
    j = 0
    for _ in range(ticks):
        while (
            j < len(wps) - 1
            and float(np.linalg.norm(wps[j].position - state.ee_position)) <= ARRIVE_TOL
        ):
            j += 1
        seg = wps[j]
        budget = V_MAX * seg.velocity_scale
        remaining = budget
        p = state.ee_position
        k = j
        while True:
            d = float(np.linalg.norm(wps[k].position - p))
            if d >= remaining or k == len(wps) - 1:
                if d > 1e-12:
                    target = p + (wps[k].position - p) * min(1.0, remaining / d)
                else:
                    target = wps[k].position.copy()
                break
            remaining -= d
            p = wps[k].position
            k += 1
        reached_k = float(np.linalg.norm(target - wps[k].position)) <= 1e-12
        passed = k if reached_k else k - 1
        gripper = wps[passed].gripper if passed >= 0 else state.gripper
        wp = Waypoint(
            position=target,
            rotation=wps[k].rotation,
            velocity_scale=seg.velocity_scale,
            gripper=gripper,
        )
        state = step_waypoint(state, wp)
        if trace is not None:
            trace.log_tick(state)
    return state


def mpc_step(
    state: WorldState,
    cache: SceneCache,
    config: PlannerConfig = DEFAULT_PLANNER,
    seed: int = 0,
    trace=None,
) -> tuple[Waypoint, WorldState]:
    """One replan cycle: evaluate maps, plan, execute one replan interval."""
    maps, blocked = cache.evaluate(state)
    start = world_to_voxel(state.ee_position, maps.require_affordance().spec)
    if blocked[tuple(start)]:
        path = _escape_path(blocked, start)
        traj = parametrize(path, maps, state.ee_pose())
    else:
        traj = sample_and_score(
            maps, start, config, seed=seed, blocked=blocked, current_pose=state.ee_pose()
        )
    if trace is not None:
        trace.add(
            "replan",
            tick=state.tick,
            length=len(traj),
            score=score_trajectory(traj, maps, config),
            terminal=traj.waypoints[-1].position,
        )
    new_state = follow_trajectory(state, traj, config.replan_interval, trace)
    executed = traj.waypoints[min(1, len(traj) - 1)]
    return executed, new_state


def at_affordance_peak(state: WorldState, maps: MapSet) -> bool:
    aff = maps.require_affordance()
    vox = world_to_voxel(state.ee_position, aff.spec)
    peak = aff.data.max()
    return bool(aff.data[tuple(vox)] >= peak - 1e-9)


def run_mpc(
    state: WorldState,
    source,
    config: PlannerConfig = DEFAULT_PLANNER,
    seed: int = 0,
    trace=None,
    task=None,
    tick_budget: int | None = None,
) -> tuple[WorldState, dict]:
    """Closed-loop end-effector control until success, arrival, stall, or budget."""
    from .sim.tasks import success_check

    cache = SceneCache(source, config)
    budget = tick_budget if tick_budget is not None else config.tick_budget
    start_tick = state.tick
    stall = 0
    reason = "budget"
    replan = 0
    while state.tick - start_tick < budget:
        maps, _ = cache.evaluate(state)
        if task is not None and success_check(task, state):
            reason = "success"
            break
        if at_affordance_peak(state, maps):
            reason = "arrived"
            break
        before = state.ee_position.copy()
        _, state = mpc_step(state, cache, config, seed=seed + replan, trace=trace)
        replan += 1
        if float(np.linalg.norm(state.ee_position - before)) < 1e-9:
            stall += 1
            if stall >= config.stall_limit:
                reason = "stalled"
                break
        else:
            stall = 0
    success = success_check(task, state) if task is not None else reason == "arrived"
    return state, {"reason": reason, "success": bool(success), "replans": replan}


# -- object-entity (push) planning ---------------------------------------


def optimize_push(
    maps: MapSet,
    state: WorldState,
    model,
    config: PlannerConfig = DEFAULT_PLANNER,
    seed: int = 0,
) -> PushAction:
    """Random shooting over planar push parameters scored on the predicted path."""
    records = detect(state, maps.entity.query)
    if not records:
        raise PerceptionFailure(f"no detection for {maps.entity.query!r}")
    rec = records[0]
    center = rec.center
    points = rec.points
    cost = maps.cost_map().data
    spec = maps.require_affordance().spec
    # Planar pushes keep the object on the table, so bound xy only.
    ws_lo = np.asarray(spec.world_min)[:2] + 0.03
    ws_hi = np.asarray(spec.world_max)[:2] - 0.03

    rng = np.random.default_rng(seed)
    best = None
    best_score = np.inf
    for _ in range(config.samples):
        theta = rng.uniform(0.0, 2.0 * np.pi)
        direction = np.array([np.cos(theta), np.sin(theta), 0.0])
        distance = float(rng.uniform(0.005, 0.2))
        rear = points[(points - center) @ direction <= 0.0]
        if len(rear) == 0:
            rear = points
        sp = rear[int(rng.integers(len(rear)))]
        contact = np.array([sp[0], sp[1], center[2]])

        predicted = model.predict_cloud(points, PushAction(contact, direction, distance))
        final_center = predicted.mean(axis=0)
        if np.any(final_center[:2] < ws_lo) or np.any(final_center[:2] > ws_hi):
            continue
        n = max(2, int(distance / 0.01) + 1)
        path_pts = center[None, :] + np.linspace(0.0, distance, n)[:, None] * direction[None, :]
        vox = np.array([world_to_voxel(p, spec) for p in path_pts])
        path_cost = cost[vox[:, 0], vox[:, 1], vox[:, 2]]
        score = float(path_cost[-1]) + 0.5 * float(path_cost.mean()) + config.lambda_len * distance
        if score < best_score:
            best_score = score
            best = PushAction(contact, direction, distance)
    if best is None:
        raise PlanningInfeasibleError("no valid push candidate")
    return best


def run_push_mpc(
    state: WorldState,
    source,
    model,
    config: PlannerConfig = DEFAULT_PLANNER,
    seed: int = 0,
    trace=None,
    task=None,
) -> tuple[WorldState, dict]:
    """Closed-loop push control: optimize a push, execute the primitive, replan."""
    from .sim.tasks import success_check
    from .sim.world import apply_push

    cache = SceneCache(source, config)
    reason = "budget"
    divergence = 0.0
    pushes = 0
    for i in range(config.push_budget):
        maps, _ = cache.evaluate(state)
        if task is not None and success_check(task, state):
            reason = "success"
            break
        records = detect(state, maps.entity.query)
        if not records:
            raise PerceptionFailure(f"no detection for {maps.entity.query!r}")
        aff = maps.require_affordance()
        vox = world_to_voxel(records[0].center, aff.spec)
        if aff.data[tuple(vox)] >= aff.data.max() - 1e-9:
            reason = "arrived"
            break
        action = optimize_push(maps, state, model, config, seed=seed + i)
        predicted_center = records[0].center + action.direction * action.distance
        state = apply_push(state, action.contact, action.direction, action.distance)
        pushes += 1
        actual = detect(state, maps.entity.query)[0].center
        divergence = max(divergence, float(np.linalg.norm(actual - predicted_center)))
        if trace is not None:
            trace.add(
                "push",
                tick=state.tick,
                contact=action.contact,
                direction=action.direction,
                distance=action.distance,
                divergence=divergence,
            )
    success = success_check(task, state) if task is not None else reason == "arrived"
    return state, {
        "reason": reason,
        "success": bool(success),
        "pushes": pushes,
        "divergence": divergence,
    }

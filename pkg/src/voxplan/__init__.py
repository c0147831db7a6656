"""Language-conditioned voxel value maps with closed-loop trajectory synthesis."""

__version__ = "0.1.0"

from .voxels import (
    DEFAULT_SPEC,
    CostMap,
    GridSpec,
    MapKind,
    ValueMap,
    accumulate_task_cost,
    cm2index,
    compose_cost,
    densify_affordance,
    empty_map,
    index2cm,
    set_voxel_by_radius,
    smooth_avoidance,
    voxel_to_world,
    world_to_voxel,
)
from .trajectory import Entity, MapSet, PushAction, Trajectory, Waypoint
from .planning import PlannerConfig, greedy_path, mpc_step, optimize_push, parametrize, sample_and_score, score_trajectory

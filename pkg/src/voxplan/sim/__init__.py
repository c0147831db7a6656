from .objects import Articulation, JointKind, SceneObject
from .world import (
    DetectionRecord,
    DisturbanceEvent,
    DisturbanceKind,
    WorldState,
    apply_push,
    detect,
    inject_disturbance,
    observe,
    occupancy_grid,
    step_waypoint,
)
from .tasks import EPISODE_SEEDS, SUITE_TEMPLATES, TEMPLATES, TaskSpec, make_task, reset, success_check
from .trace import EpisodeTrace

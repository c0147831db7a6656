"""Waypoints, trajectories, entities of interest, and assembled map sets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CompositionError, InvalidInputError
from .voxels import CostMap, MapKind, ValueMap, compose_cost


@dataclass
class Waypoint:
    """One 6-DoF setpoint with velocity scale and gripper action."""

    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    velocity_scale: float = 1.0
    gripper: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.rotation = np.asarray(self.rotation, dtype=float)
        if self.velocity_scale <= 0:
            raise InvalidInputError("velocity_scale must be > 0")
        if abs(np.linalg.norm(self.rotation) - 1.0) >= 1e-6:
            raise InvalidInputError("waypoint rotation must be a unit quaternion")
        if self.gripper not in (0.0, 1.0):
            raise InvalidInputError("gripper action must be 0 or 1")


@dataclass(frozen=True)
class Entity:
    """What the value maps steer: the end-effector or a detected object."""

    kind: str  # "ee" | "object"
    query: str = ""

    @staticmethod
    def ee() -> "Entity":
        return Entity(kind="ee")

    @staticmethod
    def obj(query: str) -> "Entity":
        return Entity(kind="object", query=query)


@dataclass
class Trajectory:
    waypoints: list[Waypoint]
    entity: Entity = field(default_factory=Entity.ee)

    def positions(self) -> np.ndarray:
        return np.array([w.position for w in self.waypoints])

    def __len__(self) -> int:
        return len(self.waypoints)


@dataclass
class PushAction:
    """A planar push: where to touch, which way, how far."""

    contact: np.ndarray
    direction: np.ndarray
    distance: float

    def __post_init__(self):
        self.contact = np.asarray(self.contact, dtype=float)
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if n == 0:
            raise InvalidInputError("push direction must be nonzero")
        d = d / n
        if abs(d[2]) > 1e-9:
            raise InvalidInputError("push direction must be horizontal")
        self.direction = d
        if not (0.0 <= self.distance <= 0.2):
            raise InvalidInputError("push distance must lie in [0, 0.2] m")

    def flat(self) -> np.ndarray:
        return np.concatenate([self.contact, self.direction[:2], [self.distance]])


@dataclass
class MapSet:
    """The per-kind value maps steering one sub-task, plus the entity."""

    affordance: ValueMap | None = None
    avoidance: ValueMap | None = None
    rotation: ValueMap | None = None
    velocity: ValueMap | None = None
    gripper: ValueMap | None = None
    entity: Entity = field(default_factory=Entity.ee)
    reset_first: bool = False
    _cost: CostMap | None = field(default=None, repr=False)

    def require_affordance(self) -> ValueMap:
        if self.affordance is None:
            raise CompositionError("map set has no affordance map")
        return self.affordance

    def cost_map(self) -> CostMap:
        if self._cost is None:
            self._cost = compose_cost(self.require_affordance(), self.avoidance)
        return self._cost

    def get(self, kind: MapKind) -> ValueMap | None:
        return getattr(self, kind.value)

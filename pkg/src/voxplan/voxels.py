"""Voxel grid geometry, value-map storage, densification, and cost composition.

Value maps live on a fixed-resolution grid over the workspace. Scalar map
kinds (affordance, avoidance, velocity, gripper) store a (w, h, d) float
array; the rotation kind stores (w, h, d, 4) unit quaternions. All
operations here are pure: they return new maps and never mutate inputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError
from .geometry import normalize

GRID_DIMS = (100, 100, 100)

# Cost composition weights for affordance vs avoidance.
W_AFFORDANCE = 2.0
W_AVOIDANCE = 1.0

# Avoidance smoothing parameters (voxel units).
SMOOTH_SIGMA = 2.0
SMOOTH_TRUNCATE = 3.0


class MapKind(enum.Enum):
    AFFORDANCE = "affordance"
    AVOIDANCE = "avoidance"
    ROTATION = "rotation"
    VELOCITY = "velocity"
    GRIPPER = "gripper"

    @property
    def channels(self) -> int:
        return 4 if self is MapKind.ROTATION else 1


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the voxel grid: dimensions and workspace bounds in meters."""

    dims: tuple[int, int, int] = GRID_DIMS
    world_min: tuple[float, float, float] = (0.0, 0.0, 0.0)
    world_max: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if any(d <= 0 for d in self.dims):
            raise InvalidInputError(f"grid dims must be positive, got {self.dims}")
        lo = np.asarray(self.world_min, dtype=float)
        hi = np.asarray(self.world_max, dtype=float)
        if not np.all(hi > lo):
            raise InvalidInputError("world_max must exceed world_min on every axis")

    @property
    def voxel_size(self) -> np.ndarray:
        lo = np.asarray(self.world_min, dtype=float)
        hi = np.asarray(self.world_max, dtype=float)
        return (hi - lo) / np.asarray(self.dims, dtype=float)


DEFAULT_SPEC = GridSpec()


@dataclass
class ValueMap:
    """One voxel field of a single kind, on a grid spec."""

    kind: MapKind
    data: np.ndarray
    spec: GridSpec = DEFAULT_SPEC
    name: str = ""
    notes: tuple[str, ...] = ()

    def validate(self) -> None:
        expected = self.spec.dims + ((4,) if self.kind is MapKind.ROTATION else ())
        if self.data.shape != expected:
            raise InvalidInputError(
                f"{self.kind.value} map shape {self.data.shape} != {expected}"
            )
        if self.kind in (MapKind.AFFORDANCE, MapKind.AVOIDANCE):
            if not np.all(np.isfinite(self.data)) or np.any(self.data < 0):
                raise InvalidInputError(f"{self.kind.value} entries must be finite and >= 0")
        elif self.kind is MapKind.GRIPPER:
            if not np.all((self.data == 0.0) | (self.data == 1.0)):
                raise InvalidInputError("gripper entries must be 0 or 1")
        elif self.kind is MapKind.VELOCITY:
            if not np.all(self.data > 0):
                raise InvalidInputError("velocity entries must be > 0")
        else:
            norms = np.linalg.norm(self.data, axis=-1)
            if np.any(np.abs(norms - 1.0) >= 1e-6):
                raise InvalidInputError("rotation entries must be unit quaternions")

    def copy(self) -> "ValueMap":
        return replace(self, data=self.data.copy())


@dataclass
class CostMap:
    """Composed planner cost; lower is more desirable."""

    data: np.ndarray
    spec: GridSpec = DEFAULT_SPEC
    provenance: tuple[str, ...] = ()


def world_to_voxel(p, spec: GridSpec = DEFAULT_SPEC) -> np.ndarray:
    """World point (m) to voxel index, clamped into the grid."""
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise InvalidInputError(f"non-finite world point {p}")
    idx = np.floor((p - np.asarray(spec.world_min)) / spec.voxel_size).astype(int)
    return np.clip(idx, 0, np.asarray(spec.dims) - 1)


def voxel_to_world(v, spec: GridSpec = DEFAULT_SPEC) -> np.ndarray:
    """Center of voxel v in world coordinates (m)."""
    v = np.asarray(v, dtype=int)
    if np.any(v < 0) or np.any(v >= np.asarray(spec.dims)):
        raise InvalidInputError(f"voxel index {v} out of bounds for dims {spec.dims}")
    return np.asarray(spec.world_min) + (v + 0.5) * spec.voxel_size


def cm2index(cm: float, direction, spec: GridSpec = DEFAULT_SPEC) -> np.ndarray:
    """Voxel-coordinate displacement for an offset of `cm` along `direction`."""
    if cm < 0:
        raise InvalidInputError("offset must be >= 0 cm")
    d = normalize(direction)
    return np.rint((cm / 100.0) * d / spec.voxel_size).astype(int)


def index2cm(index: float, direction, spec: GridSpec = DEFAULT_SPEC) -> float:
    """Centimeters of world displacement for moving `index` voxels along `direction`."""
    d = normalize(direction)
    delta_world = float(index) * d * spec.voxel_size
    return 100.0 * float(np.linalg.norm(delta_world))


def empty_map(kind: MapKind, spec: GridSpec = DEFAULT_SPEC, current_pose=None) -> ValueMap:
    """Default map of the given kind.

    Affordance and avoidance start at zero, velocity at one, rotation at
    the current end-effector quaternion, gripper at the current gripper
    action; the latter two require `current_pose`.
    """
    if kind in (MapKind.AFFORDANCE, MapKind.AVOIDANCE):
        data = np.zeros(spec.dims)
    elif kind is MapKind.VELOCITY:
        data = np.ones(spec.dims)
    elif kind is MapKind.ROTATION:
        if current_pose is None:
            raise InvalidInputError("rotation map needs the current pose")
        q = np.asarray(current_pose.rotation, dtype=float)
        data = np.broadcast_to(q, spec.dims + (4,)).copy()
    else:
        if current_pose is None:
            raise InvalidInputError("gripper map needs the current pose")
        data = np.full(spec.dims, float(current_pose.gripper))
    return ValueMap(kind=kind, data=data, spec=spec)


def _check_kind_value(kind: MapKind, value) -> np.ndarray | float:
    if kind is MapKind.ROTATION:
        q = np.asarray(value, dtype=float)
        if q.shape != (4,) or abs(np.linalg.norm(q) - 1.0) >= 1e-6:
            raise InvalidInputError("rotation value must be a unit quaternion")
        return q
    v = float(value)
    if kind in (MapKind.AFFORDANCE, MapKind.AVOIDANCE) and (v < 0 or not np.isfinite(v)):
        raise InvalidInputError(f"{kind.value} value must be finite and >= 0")
    if kind is MapKind.GRIPPER and v not in (0.0, 1.0):
        raise InvalidInputError("gripper value must be 0 or 1")
    if kind is MapKind.VELOCITY and v <= 0:
        raise InvalidInputError("velocity value must be > 0")
    return v


def sphere_mask(spec: GridSpec, center, radius_cm: float) -> np.ndarray:
    """Boolean grid of voxels whose centers lie within radius_cm of center's center."""
    center = np.asarray(center, dtype=int)
    if np.any(center < 0) or np.any(center >= np.asarray(spec.dims)):
        raise InvalidInputError(f"center voxel {center} out of bounds")
    if radius_cm < 0:
        raise InvalidInputError("radius must be >= 0 cm")
    radius_m = radius_cm / 100.0
    vs = spec.voxel_size
    # Bounding box of candidate offsets, clipped at the grid edge.
    reach = np.ceil(radius_m / vs).astype(int)
    lo = np.maximum(center - reach, 0)
    hi = np.minimum(center + reach, np.asarray(spec.dims) - 1)
    axes = [np.arange(lo[i], hi[i] + 1) for i in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    dx = (gx - center[0]) * vs[0]
    dy = (gy - center[1]) * vs[1]
    dz = (gz - center[2]) * vs[2]
    within = dx * dx + dy * dy + dz * dz <= radius_m * radius_m + 1e-12
    mask = np.zeros(spec.dims, dtype=bool)
    mask[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1] = within
    return mask


def set_voxel_by_radius(vmap: ValueMap, center, radius_cm: float, value) -> ValueMap:
    """Assign `value` to all voxels within radius_cm of the center voxel."""
    val = _check_kind_value(vmap.kind, value)
    mask = sphere_mask(vmap.spec, center, radius_cm)
    out = vmap.copy()
    out.data[mask] = val
    return out


def set_voxel_by_box(vmap: ValueMap, lo, hi, value) -> ValueMap:
    """Assign `value` to the inclusive voxel box [lo, hi], clipped to the grid."""
    val = _check_kind_value(vmap.kind, value)
    dims = np.asarray(vmap.spec.dims)
    lo = np.clip(np.asarray(lo, dtype=int), 0, dims - 1)
    hi = np.clip(np.asarray(hi, dtype=int), 0, dims - 1)
    out = vmap.copy()
    out.data[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1] = val
    return out


def set_voxel_by_halfspace(vmap: ValueMap, origin, normal, value) -> ValueMap:
    """Assign `value` to all voxels v with (v - origin) . normal > 0."""
    val = _check_kind_value(vmap.kind, value)
    n = normalize(normal)
    origin = np.asarray(origin, dtype=float)
    axes = [np.arange(d) for d in vmap.spec.dims]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    side = (gx - origin[0]) * n[0] + (gy - origin[1]) * n[1] + (gz - origin[2]) * n[2]
    out = vmap.copy()
    out.data[side > 0] = val
    return out


def densify_affordance(vmap: ValueMap) -> ValueMap:
    """Spread a sparse affordance map into a dense attraction field.

    Targets are voxels with raw value > 0. Each voxel gets
    1 - d/d_max where d is the exact Euclidean distance (in voxels) to the
    nearest target, so output is in [0, 1] and equals 1 exactly on targets.
    An all-zero input yields an all-zero output tagged "empty-targets".
    """
    if vmap.kind is not MapKind.AFFORDANCE:
        raise InvalidInputError("densify_affordance requires an affordance map")
    targets = vmap.data > 0
    if not targets.any():
        out = vmap.copy()
        out.data[:] = 0.0
        out.notes = out.notes + ("empty-targets",)
        return out
    dist = ndimage.distance_transform_edt(~targets)
    dmax = dist.max()
    out = vmap.copy()
    if dmax == 0.0:
        out.data = np.ones(vmap.spec.dims)
    else:
        out.data = 1.0 - dist / dmax
    return out


def smooth_avoidance(vmap: ValueMap) -> ValueMap:
    """Gaussian-smooth an avoidance map, preserving the peak amplitude.

    sigma = 2 voxels, truncated at 3 sigma, zero-padded boundaries; the
    result is rescaled so its maximum equals the input maximum.
    """
    if vmap.kind is not MapKind.AVOIDANCE:
        raise InvalidInputError("smooth_avoidance requires an avoidance map")
    peak = vmap.data.max()
    out = vmap.copy()
    if peak <= 0.0:
        out.data[:] = 0.0
        return out
    smoothed = ndimage.gaussian_filter(
        vmap.data, sigma=SMOOTH_SIGMA, truncate=SMOOTH_TRUNCATE, mode="constant", cval=0.0
    )
    out.data = smoothed * (peak / smoothed.max())
    return out


def minmax_normalize(data: np.ndarray) -> np.ndarray:
    """Min-max normalize to [0, 1]; a degenerate range maps to all zeros."""
    lo = data.min()
    hi = data.max()
    if hi == lo:
        return np.zeros_like(data)
    return (data - lo) / (hi - lo)


def compose_cost(affordance: ValueMap, avoidance: ValueMap | None) -> CostMap:
    """Weighted cost from normalized affordance (attracts) and avoidance (repulses).

    cost(v) = -(W_AFFORDANCE * aff_norm(v) - W_AVOIDANCE * avoid_norm(v)).
    """
    if affordance.kind is not MapKind.AFFORDANCE:
        raise InvalidInputError("first argument must be an affordance map")
    provenance = [f"affordance:{affordance.name or 'anon'}"]
    aff_n = minmax_normalize(affordance.data)
    if avoidance is not None:
        if avoidance.kind is not MapKind.AVOIDANCE:
            raise InvalidInputError("second argument must be an avoidance map")
        if avoidance.spec != affordance.spec:
            raise InvalidInputError("maps must share a grid spec")
        avoid_n = minmax_normalize(avoidance.data)
        provenance.append(f"avoidance:{avoidance.name or 'anon'}")
    else:
        avoid_n = 0.0
    cost = -(W_AFFORDANCE * aff_n - W_AVOIDANCE * avoid_n)
    return CostMap(data=np.asarray(cost), spec=affordance.spec, provenance=tuple(provenance))


def accumulate_task_cost(path, vmap: ValueMap) -> float:
    """Negated sum of map values along a voxel path."""
    if len(path) == 0:
        return 0.0
    idx = np.asarray(path, dtype=int)
    dims = np.asarray(vmap.spec.dims)
    if np.any(idx < 0) or np.any(idx >= dims):
        raise InvalidInputError("path index out of bounds")
    return -float(vmap.data[idx[:, 0], idx[:, 1], idx[:, 2]].sum())

"""Scene object geometry: rigid bodies, prismatic drawers, latched articulations.

Objects carry surface point sets (with per-point outward normals) in their
local frame. Articulated objects move their points along joint-dependent
offsets rather than through full kinematic chains: a prismatic joint
translates the whole point set along its axis, and a latched joint stacks a
handle-press displacement and a main opening displacement, gated by the
latch threshold. Blocks never rotate, so world-frame points are locals plus
the object position (plus joint offsets).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InvalidInputError


class JointKind(enum.Enum):
    RIGID = "rigid"
    PRISMATIC = "prismatic"
    REVOLUTE_LATCHED = "revolute_latched"


@dataclass(frozen=True)
class Articulation:
    kind: JointKind = JointKind.RIGID
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)  # main motion axis (world)
    limits: tuple[float, float] = (0.0, 0.0)
    # Latched-joint extras: the handle moves along handle_axis when pressed,
    # by handle_lever meters per radian; the main joint is released once the
    # handle angle passes latch_threshold within one grasp episode.
    handle_axis: tuple[float, float, float] = (0.0, 0.0, -1.0)
    handle_lever: float = 0.08
    handle_limit: float = 1.0
    latch_threshold: float = 0.0
    main_lever: float = 1.0  # meters of handle travel per unit of main joint

    def __post_init__(self):
        if self.kind is JointKind.REVOLUTE_LATCHED:
            if not (0.0 < self.latch_threshold < np.pi / 2):
                raise InvalidInputError("latch threshold must lie in (0, pi/2)")


@dataclass
class SceneObject:
    """A named body with surface points, normals, optional parts and a joint."""

    name: str
    position: np.ndarray
    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    normals: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    parts: dict[str, np.ndarray] = field(default_factory=dict)  # part -> point row indices
    articulation: Articulation = field(default_factory=Articulation)
    interactable: bool = True
    graspable_parts: tuple[str, ...] = ()
    half_extents: np.ndarray = field(default_factory=lambda: np.zeros(3))
    joint: float = 0.0
    handle_joint: float = 0.0
    initial_joint: float = 0.0
    unlatched: bool = False  # latch released within the current grasp episode

    def __post_init__(self):
        if len(self.points) == 0:
            raise InvalidInputError(f"object {self.name!r} has no surface points")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))

    def copy(self) -> "SceneObject":
        return replace(
            self,
            position=self.position.copy(),
            quaternion=self.quaternion.copy(),
        )

    # -- kinematics -----------------------------------------------------

    def joint_offset(self) -> np.ndarray:
        """World-frame displacement of the body due to the main joint."""
        art = self.articulation
        if art.kind is JointKind.PRISMATIC:
            return self.joint * np.asarray(art.axis)
        if art.kind is JointKind.REVOLUTE_LATCHED:
            return self.joint * art.main_lever * np.asarray(art.axis)
        return np.zeros(3)

    def handle_offset(self) -> np.ndarray:
        """Extra displacement of the handle part from pressing its lever."""
        art = self.articulation
        if art.kind is JointKind.REVOLUTE_LATCHED:
            return self.handle_joint * art.handle_lever * np.asarray(art.handle_axis)
        return np.zeros(3)

    def world_points(self, rows: np.ndarray | None = None) -> np.ndarray:
        if rows is None:
            rows = np.arange(len(self.points))
        pts = self.points[rows] + self.position + self.joint_offset()
        h_off = self.handle_offset()
        if np.any(h_off != 0.0) and "handle" in self.parts:
            handle_set = np.isin(rows, self.parts["handle"])
            pts = pts + handle_set[:, None] * h_off
        return pts

    def part_rows(self, part: str) -> np.ndarray:
        if part not in self.parts:
            raise InvalidInputError(f"object {self.name!r} has no part {part!r}")
        return self.parts[part]

    def clamp_joints(self) -> None:
        lo, hi = self.articulation.limits
        self.joint = float(np.clip(self.joint, lo, hi))
        self.handle_joint = float(np.clip(self.handle_joint, 0.0, self.articulation.handle_limit))

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        pts = self.world_points()
        return pts.min(axis=0), pts.max(axis=0)


# -- geometry generators ------------------------------------------------


def _box_surface(half: np.ndarray, step: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
    """Point/normal samples of an axis-aligned box surface centered at origin."""
    pts, nms = [], []
    hx, hy, hz = half
    for axis, h in enumerate(half):
        others = [i for i in range(3) if i != axis]
        n0 = max(2, int(round(2 * half[others[0]] / step)) + 1)
        n1 = max(2, int(round(2 * half[others[1]] / step)) + 1)
        u = np.linspace(-half[others[0]], half[others[0]], n0)
        v = np.linspace(-half[others[1]], half[others[1]], n1)
        uu, vv = np.meshgrid(u, v, indexing="ij")
        for sign in (-1.0, 1.0):
            face = np.zeros((uu.size, 3))
            face[:, axis] = sign * h
            face[:, others[0]] = uu.ravel()
            face[:, others[1]] = vv.ravel()
            nrm = np.zeros((uu.size, 3))
            nrm[:, axis] = sign
            pts.append(face)
            nms.append(nrm)
    return np.vstack(pts), np.vstack(nms)


def make_block(name: str, position, size: float = 0.04) -> SceneObject:
    half = np.full(3, size / 2.0)
    pts, nms = _box_surface(half)
    rows = np.arange(len(pts))
    return SceneObject(
        name=name,
        position=np.asarray(position, dtype=float),
        points=pts,
        normals=nms,
        parts={"body": rows},
        graspable_parts=("body",),
        half_extents=half,
    )


def make_line(name: str, position, direction, length: float = 0.20) -> SceneObject:
    """A thin visual landmark strip; not interactable."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    n = max(2, int(round(length / 0.01)) + 1)
    ts = np.linspace(-length / 2.0, length / 2.0, n)
    pts = ts[:, None] * d[None, :]
    pts[:, 2] = 0.002
    nms = np.tile(np.array([0.0, 0.0, 1.0]), (n, 1))
    parts = {
        "end a": np.array([0]),
        "end b": np.array([n - 1]),
    }
    return SceneObject(
        name=name,
        position=np.asarray(position, dtype=float),
        points=pts,
        normals=nms,
        parts=parts,
        interactable=False,
        half_extents=np.array([length / 2.0, 0.005, 0.002]),
    )


# Cabinet/drawer geometry constants (meters). The cabinet body is a solid
# box; each drawer is modeled as its front slab plus handle plus a solid
# body box that trails back to the cabinet face while the drawer is open.
CABINET_HALF = np.array([0.18, 0.10, 0.18])
DRAWER_W = 0.14  # half-width in x
DRAWER_H = 0.035  # half-height in z
DRAWER_SLAB = 0.01  # front slab half-thickness in y
DRAWER_RANGE = 0.15
HANDLE_PROTRUSION = 0.03
HANDLE_HALF = 0.03  # handle bar half-length in x


def make_cabinet(position) -> SceneObject:
    pts, nms = _box_surface(CABINET_HALF, step=0.02)
    rows = np.arange(len(pts))
    return SceneObject(
        name="cabinet",
        position=np.asarray(position, dtype=float),
        points=pts,
        normals=nms,
        parts={"body": rows},
        interactable=False,
        half_extents=CABINET_HALF.copy(),
    )


def make_drawer(name: str, cabinet_pos, z_offset: float, joint: float) -> SceneObject:
    """A drawer sliding along -y out of the cabinet front face.

    Local frame origin sits at the drawer's closed front-slab center. The
    body points (used for occupancy while open) are generated to span from
    the slab back toward the cabinet face; while closed they coincide with
    the cabinet footprint and are harmless.
    """
    cabinet_pos = np.asarray(cabinet_pos, dtype=float)
    front_y = cabinet_pos[1] - CABINET_HALF[1]
    origin = np.array([cabinet_pos[0], front_y - DRAWER_SLAB, cabinet_pos[2] + z_offset])

    slab_pts, slab_nms = _box_surface(np.array([DRAWER_W, DRAWER_SLAB, DRAWER_H]))
    # Handle: a bar protruding toward the robot (-y) from the slab center.
    hp = []
    for x in np.linspace(-HANDLE_HALF, HANDLE_HALF, 7):
        for y in np.linspace(-DRAWER_SLAB - HANDLE_PROTRUSION, -DRAWER_SLAB, 4):
            hp.append([x, y, 0.0])
    handle_pts = np.asarray(hp)
    handle_nms = np.tile(np.array([0.0, -1.0, 0.0]), (len(handle_pts), 1))
    # Body: fills the volume between the slab and the cabinet face so the
    # interior of an open drawer is occupied, not hollow.
    bp = []
    for x in np.linspace(-DRAWER_W, DRAWER_W, 8):
        for y in np.linspace(DRAWER_SLAB, DRAWER_SLAB + DRAWER_RANGE, 9):
            for z in np.linspace(-DRAWER_H, DRAWER_H, 4):
                bp.append([x, y, z])
    body_pts = np.asarray(bp)
    body_nms = np.tile(np.array([0.0, 0.0, 1.0]), (len(body_pts), 1))

    pts = np.vstack([slab_pts, handle_pts, body_pts])
    nms = np.vstack([slab_nms, handle_nms, body_nms])
    n_slab, n_handle = len(slab_pts), len(handle_pts)
    parts = {
        "front": np.arange(n_slab),
        "handle": np.arange(n_slab, n_slab + n_handle),
        "body": np.arange(n_slab + n_handle, len(pts)),
    }
    art = Articulation(
        kind=JointKind.PRISMATIC, axis=(0.0, -1.0, 0.0), limits=(0.0, DRAWER_RANGE)
    )
    return SceneObject(
        name=name,
        position=origin,
        points=pts,
        normals=nms,
        parts=parts,
        articulation=art,
        graspable_parts=("handle",),
        half_extents=np.array([DRAWER_W, DRAWER_SLAB + DRAWER_RANGE / 2, DRAWER_H]),
        joint=joint,
        initial_joint=joint,
    )


def make_latched(
    name: str,
    position,
    open_axis,
    latch_threshold: float,
    handle_lever: float,
    main_limit: float = 0.8,
) -> SceneObject:
    """A door/window/fridge panel with a press-to-release lever handle."""
    panel_half = np.array([0.12, 0.01, 0.15])
    panel_pts, panel_nms = _box_surface(panel_half, step=0.02)
    hp = []
    for x in np.linspace(-0.04, 0.04, 6):
        for y in np.linspace(-0.04, -0.01, 3):
            hp.append([x, y, -0.02])
    handle_pts = np.asarray(hp)
    handle_nms = np.tile(np.array([0.0, -1.0, 0.0]), (len(handle_pts), 1))
    pts = np.vstack([panel_pts, handle_pts])
    nms = np.vstack([panel_nms, handle_nms])
    parts = {
        "panel": np.arange(len(panel_pts)),
        "handle": np.arange(len(panel_pts), len(pts)),
    }
    art = Articulation(
        kind=JointKind.REVOLUTE_LATCHED,
        axis=tuple(np.asarray(open_axis, dtype=float)),
        limits=(0.0, main_limit),
        handle_axis=(0.0, 0.0, -1.0),
        handle_lever=handle_lever,
        handle_limit=1.2,
        latch_threshold=latch_threshold,
        main_lever=0.25,
    )
    return SceneObject(
        name=name,
        position=np.asarray(position, dtype=float),
        points=pts,
        normals=nms,
        parts=parts,
        articulation=art,
        graspable_parts=("handle",),
        half_extents=panel_half.copy(),
    )

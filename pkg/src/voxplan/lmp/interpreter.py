"""Evaluator for parsed map-composition programs.

Interpretation is sandboxed: programs see a read-only world through
`detect`, may mutate only the value maps they created, and run under a hard
step budget. The value a program must produce depends on its kind: planners
return sub-task lists, map programs return one value map, and composers are
judged by the `execute(...)` call they make, which is captured rather than
run.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..errors import (
    PerceptionFailure,
    ProgramTypeError,
    SandboxViolation,
    StepBudgetExceeded,
)
from ..geometry import normalize as vec_normalize
from ..geometry import pointat2quat
from ..trajectory import Entity, Waypoint
from ..voxels import (
    GridSpec,
    MapKind,
    ValueMap,
    _check_kind_value,
    cm2index,
    empty_map,
    index2cm,
    sphere_mask,
    world_to_voxel,
)
from ..sim.world import WorldState, detect
from . import parser as ast

STEP_BUDGET = 10**6


class LmpKind(enum.Enum):
    PLANNER = "planner"
    COMPOSER = "composer"
    PARSE_QUERY_OBJ = "parse_query_obj"
    AFFORDANCE = "affordance"
    AVOIDANCE = "avoidance"
    ROTATION = "rotation"
    VELOCITY = "velocity"
    GRIPPER = "gripper"


MAP_KINDS = {
    LmpKind.AFFORDANCE: MapKind.AFFORDANCE,
    LmpKind.AVOIDANCE: MapKind.AVOIDANCE,
    LmpKind.ROTATION: MapKind.ROTATION,
    LmpKind.VELOCITY: MapKind.VELOCITY,
    LmpKind.GRIPPER: MapKind.GRIPPER,
}


class DetectionList(list):
    """Detection results; indexing an empty one is a perception failure."""

    def __init__(self, items, query: str):
        super().__init__(items)
        self.query = query


class DetectionView:
    """Read-only record exposed to programs."""

    def __init__(self, record):
        self._record = record

    @property
    def fields(self):
        return {
            "name": self._record.name,
            "center": self._record.center.copy(),
            "normal": self._record.normal.copy(),
            "occupancy": OccupancyView(self._record.occupancy),
        }


class OccupancyView:
    def __init__(self, grid):
        self._grid = grid


class EndEffectorHandle:
    """Marker for `ee()`: the entity of interest is the robot hand."""


class MapHandle:
    """A value map under construction; the only thing programs may mutate."""

    def __init__(self, vmap: ValueMap):
        self.vmap = vmap


@dataclass
class ExecuteCapture:
    entity: Entity
    maps: dict[str, ValueMap]
    reset_first: bool = False


@dataclass
class InterpreterContext:
    """Environment handles for one program run."""

    kind: LmpKind
    state: WorldState | None = None
    spec: GridSpec | None = None
    current_pose: Waypoint | None = None
    submap: object | None = None  # composer hook: (LmpKind, query) -> ValueMap
    capture: ExecuteCapture | None = None
    reset_requested: bool = False

    def pose(self) -> Waypoint:
        if self.current_pose is not None:
            return self.current_pose
        if self.state is not None:
            return self.state.ee_pose()
        return Waypoint(position=np.zeros(3))

    def grid(self) -> GridSpec:
        if self.spec is not None:
            return self.spec
        if self.state is not None:
            return self.state.spec
        raise ProgramTypeError("no grid spec available to the program")


class _Return(Exception):
    def __init__(self, value):
        self.value = value


class Interpreter:
    def __init__(self, ctx: InterpreterContext, budget: int = STEP_BUDGET):
        self.ctx = ctx
        self.budget = budget
        self.steps = 0
        self.builtins = self._bind_builtins()

    # -- plumbing ---------------------------------------------------------

    def _tick(self, node) -> None:
        self.steps += 1
        if self.steps > self.budget:
            raise StepBudgetExceeded(
                f"evaluation exceeded {self.budget} steps", getattr(node, "line", 0)
            )

    def run(self, program: ast.Program):
        try:
            self._exec_block(program.body, {})
        except _Return as r:
            return r.value
        return None

    def _exec_block(self, body, env) -> None:
        for stmt in body:
            self._exec_stmt(stmt, env)

    def _exec_stmt(self, stmt, env) -> None:
        self._tick(stmt)
        if isinstance(stmt, ast.Assign):
            env[stmt.target] = self._eval(stmt.value, env)
        elif isinstance(stmt, ast.ExprStmt):
            self._eval(stmt.value, env)
        elif isinstance(stmt, ast.Return):
            raise _Return(None if stmt.value is None else self._eval(stmt.value, env))
        elif isinstance(stmt, ast.For):
            seq = self._eval(stmt.iterable, env)
            if not isinstance(seq, list):
                raise ProgramTypeError("for loops iterate over lists only", stmt.line)
            for item in list(seq):
                env[stmt.var] = item
                self._exec_block(stmt.body, env)
        elif isinstance(stmt, ast.If):
            cond = self._eval(stmt.cond, env)
            if not isinstance(cond, bool):
                raise ProgramTypeError("if condition must be a boolean", stmt.line)
            self._exec_block(stmt.body if cond else stmt.orelse, env)
        else:
            raise ProgramTypeError(f"unknown statement {stmt!r}", getattr(stmt, "line", 0))

    # -- expressions --------------------------------------------------------

    def _eval(self, node, env):
        self._tick(node)
        if isinstance(node, ast.Num):
            return node.value
        if isinstance(node, ast.Str):
            return node.value
        if isinstance(node, ast.Bool):
            return node.value
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            raise ProgramTypeError(f"unbound variable {node.id!r}", node.line)
        if isinstance(node, ast.ListLit):
            return [self._eval(i, env) for i in node.items]
        if isinstance(node, ast.UnaryOp):
            val = self._eval(node.operand, env)
            if node.op == "not":
                if not isinstance(val, bool):
                    raise ProgramTypeError("'not' needs a boolean", node.line)
                return not val
            if isinstance(val, (int, float)) and not isinstance(val, bool):
                return -val
            if isinstance(val, np.ndarray):
                return -val
            raise ProgramTypeError("unary minus needs a number or vector", node.line)
        if isinstance(node, ast.BinOp):
            return self._binop(node, env)
        if isinstance(node, ast.Compare):
            return self._compare(node, env)
        if isinstance(node, ast.BoolOp):
            left = self._eval(node.left, env)
            if not isinstance(left, bool):
                raise ProgramTypeError(f"'{node.op}' needs booleans", node.line)
            if node.op == "and" and not left:
                return False
            if node.op == "or" and left:
                return True
            right = self._eval(node.right, env)
            if not isinstance(right, bool):
                raise ProgramTypeError(f"'{node.op}' needs booleans", node.line)
            return right
        if isinstance(node, ast.Call):
            fn = self.builtins.get(node.func)
            if fn is None:
                raise SandboxViolation(
                    f"{node.func!r} is not available to {self.ctx.kind.value} programs",
                    node.line,
                )
            args = [self._eval(a, env) for a in node.args]
            kwargs = {k: self._eval(v, env) for k, v in node.kwargs}
            return fn(node, *args, **kwargs)
        if isinstance(node, ast.Index):
            obj = self._eval(node.obj, env)
            idx = self._eval(node.index, env)
            if not isinstance(obj, list):
                raise ProgramTypeError("only lists can be indexed", node.line)
            if not isinstance(idx, (int, float)) or idx != int(idx):
                raise ProgramTypeError("list index must be an integer", node.line)
            i = int(idx)
            if i < 0 or i >= len(obj):
                if isinstance(obj, DetectionList) and len(obj) == 0:
                    raise PerceptionFailure(f"no detections for {obj.query!r}")
                raise ProgramTypeError(f"list index {i} out of range", node.line)
            return obj[i]
        if isinstance(node, ast.Attr):
            obj = self._eval(node.obj, env)
            return self._attr(obj, node)
        raise ProgramTypeError(f"unknown expression {node!r}", getattr(node, "line", 0))

    def _binop(self, node, env):
        a = self._eval(node.left, env)
        b = self._eval(node.right, env)
        num_a = isinstance(a, (int, float)) and not isinstance(a, bool)
        num_b = isinstance(b, (int, float)) and not isinstance(b, bool)
        vec_a = isinstance(a, np.ndarray)
        vec_b = isinstance(b, np.ndarray)
        op = node.op
        if num_a and num_b:
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if b == 0:
                raise ProgramTypeError("division by zero", node.line)
            return a / b
        if vec_a and vec_b and op in ("+", "-"):
            if a.shape != b.shape:
                raise ProgramTypeError("vector size mismatch", node.line)
            return a + b if op == "+" else a - b
        if op == "*" and (vec_a and num_b or num_a and vec_b):
            return a * b
        if op == "/" and vec_a and num_b:
            if b == 0:
                raise ProgramTypeError("division by zero", node.line)
            return a / b
        raise ProgramTypeError(f"unsupported operands for {op!r}", node.line)

    def _compare(self, node, env):
        a = self._eval(node.left, env)
        b = self._eval(node.right, env)
        op = node.op
        if isinstance(a, str) and isinstance(b, str):
            if op == "==":
                return a == b
            if op == "!=":
                return a != b
            raise ProgramTypeError("strings support only == and !=", node.line)
        num_a = isinstance(a, (int, float)) and not isinstance(a, bool)
        num_b = isinstance(b, (int, float)) and not isinstance(b, bool)
        if not (num_a and num_b):
            raise ProgramTypeError("comparison needs two numbers or two strings", node.line)
        return {
            "==": a == b,
            "!=": a != b,
            "<": a < b,
            "<=": a <= b,
            ">": a > b,
            ">=": a >= b,
        }[op]

    def _attr(self, obj, node):
        name = node.name
        if isinstance(obj, DetectionView):
            fields = obj.fields
            if name in fields:
                return fields[name]
            raise ProgramTypeError(f"detection has no field {name!r}", node.line)
        if isinstance(obj, np.ndarray):
            axes = {"x": 0, "y": 1, "z": 2, "w": 3}
            if name in axes and axes[name] < obj.shape[0]:
                return float(obj[axes[name]])
            raise ProgramTypeError(f"vector has no component {name!r}", node.line)
        raise ProgramTypeError(f"value has no attribute {name!r}", node.line)

    # -- builtins ----------------------------------------------------------

    def _require_vec(self, value, node, size=3):
        if isinstance(value, np.ndarray) and value.shape == (size,):
            return value
        raise ProgramTypeError(f"expected a {size}-vector", node.line)

    def _require_map(self, value, node) -> MapHandle:
        if isinstance(value, MapHandle):
            return value
        raise ProgramTypeError("expected a value map", node.line)

    def _require_num(self, value, node) -> float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ProgramTypeError("expected a number", node.line)

    def _bind_builtins(self) -> dict:
        ctx = self.ctx
        built: dict = {}

        def b_vec(node, *args):
            if len(args) not in (3, 4):
                raise ProgramTypeError("vec takes 3 or 4 numbers", node.line)
            return np.array([self._require_num(a, node) for a in args], dtype=float)

        def b_detect(node, query):
            if not isinstance(query, str):
                raise ProgramTypeError("detect takes an object name string", node.line)
            if ctx.state is None:
                raise SandboxViolation("no world is attached to this program", node.line)
            records = detect(ctx.state, query)
            return DetectionList([DetectionView(r) for r in records], query)

        def b_world_to_voxel(node, point):
            return world_to_voxel(self._require_vec(point, node), ctx.grid()).astype(float)

        def b_cm2index(node, cm, direction):
            return cm2index(
                self._require_num(cm, node), self._require_vec(direction, node), ctx.grid()
            ).astype(float)

        def b_index2cm(node, index, direction):
            return index2cm(
                self._require_num(index, node), self._require_vec(direction, node), ctx.grid()
            )

        def b_pointat2quat(node, vector):
            return pointat2quat(self._require_vec(vector, node))

        def b_normalize(node, v):
            return vec_normalize(self._require_vec(v, node))

        def b_norm(node, v):
            return float(np.linalg.norm(self._require_vec(v, node)))

        def b_dist(node, a, b):
            return float(
                np.linalg.norm(self._require_vec(a, node) - self._require_vec(b, node))
            )

        def b_len(node, seq):
            if isinstance(seq, (list, str)):
                return float(len(seq))
            raise ProgramTypeError("len takes a list or string", node.line)

        def b_min(node, *args):
            return min(self._require_num(a, node) for a in args)

        def b_max(node, *args):
            return max(self._require_num(a, node) for a in args)

        def b_abs(node, v):
            return abs(self._require_num(v, node))

        built.update(
            vec=b_vec,
            detect=b_detect,
            world_to_voxel=b_world_to_voxel,
            cm2index=b_cm2index,
            index2cm=b_index2cm,
            pointat2quat=b_pointat2quat,
            normalize=b_normalize,
            norm=b_norm,
            dist=b_dist,
            len=b_len,
            min=b_min,
            max=b_max,
            abs=b_abs,
            ee=lambda node: EndEffectorHandle(),
        )

        def _vox(value, node):
            v = self._require_vec(value, node)
            if np.any(v != np.rint(v)):
                raise ProgramTypeError("voxel coordinates must be integers", node.line)
            return np.rint(v).astype(int)

        def b_set_radius(node, vmap, voxel_xyz, radius_cm, value):
            handle = self._require_map(vmap, node)
            center = np.clip(_vox(voxel_xyz, node), 0, np.asarray(handle.vmap.spec.dims) - 1)
            val = _check_kind_value(handle.vmap.kind, value)
            mask = sphere_mask(handle.vmap.spec, center, self._require_num(radius_cm, node))
            handle.vmap.data[mask] = val
            return handle

        def b_set_box(node, vmap, lo, hi, value):
            handle = self._require_map(vmap, node)
            dims = np.asarray(handle.vmap.spec.dims)
            lo_v = np.clip(_vox(lo, node), 0, dims - 1)
            hi_v = np.clip(_vox(hi, node), 0, dims - 1)
            val = _check_kind_value(handle.vmap.kind, value)
            handle.vmap.data[
                lo_v[0] : hi_v[0] + 1, lo_v[1] : hi_v[1] + 1, lo_v[2] : hi_v[2] + 1
            ] = val
            return handle

        def b_set_halfspace(node, vmap, origin, normal, value):
            from ..voxels import set_voxel_by_halfspace

            handle = self._require_map(vmap, node)
            out = set_voxel_by_halfspace(
                handle.vmap, _vox(origin, node), self._require_vec(normal, node), value
            )
            handle.vmap.data[:] = out.data
            return handle

        def _empty(kind: MapKind):
            def make(node):
                return MapHandle(empty_map(kind, ctx.grid(), ctx.pose()))

            return make

        built.update(
            set_voxel_by_radius=b_set_radius,
            set_voxel_by_box=b_set_box,
            set_voxel_by_halfspace=b_set_halfspace,
            get_empty_affordance_map=_empty(MapKind.AFFORDANCE),
            get_empty_avoidance_map=_empty(MapKind.AVOIDANCE),
            get_empty_rotation_map=_empty(MapKind.ROTATION),
            get_empty_gripper_map=_empty(MapKind.GRIPPER),
            get_empty_velocity_map=_empty(MapKind.VELOCITY),
        )

        if ctx.kind is LmpKind.COMPOSER:

            def _submap(kind: LmpKind):
                def call(node, query):
                    if not isinstance(query, str):
                        raise ProgramTypeError("map queries are strings", node.line)
                    if ctx.submap is None:
                        raise SandboxViolation("no map generator attached", node.line)
                    return MapHandle(ctx.submap(kind, query))

                return call

            def b_execute(node, movable, **kwargs):
                allowed = {
                    "affordance_map",
                    "avoidance_map",
                    "rotation_map",
                    "velocity_map",
                    "gripper_map",
                }
                bad = set(kwargs) - allowed
                if bad:
                    raise ProgramTypeError(f"unknown execute arguments {sorted(bad)}", node.line)
                if isinstance(movable, EndEffectorHandle):
                    entity = Entity.ee()
                elif isinstance(movable, DetectionView):
                    entity = Entity.obj(movable._record.query)
                else:
                    raise ProgramTypeError(
                        "movable must be ee() or a detection record", node.line
                    )
                maps = {}
                for key, value in kwargs.items():
                    maps[key.removesuffix("_map")] = self._require_map(value, node).vmap
                if ctx.capture is not None:
                    raise ProgramTypeError("execute may be called only once", node.line)
                ctx.capture = ExecuteCapture(
                    entity=entity, maps=maps, reset_first=ctx.reset_requested
                )
                return None

            def b_reset(node):
                ctx.reset_requested = True
                return None

            built.update(
                get_affordance_map=_submap(LmpKind.AFFORDANCE),
                get_avoidance_map=_submap(LmpKind.AVOIDANCE),
                get_rotation_map=_submap(LmpKind.ROTATION),
                get_velocity_map=_submap(LmpKind.VELOCITY),
                get_gripper_map=_submap(LmpKind.GRIPPER),
                execute=b_execute,
                reset_to_default_pose=b_reset,
            )
        return built


def interpret(program: ast.Program, ctx: InterpreterContext):
    """Run a program and shape its result by the kind contract."""
    interp = Interpreter(ctx)
    result = interp.run(program)
    kind = ctx.kind
    if kind is LmpKind.PLANNER:
        if not isinstance(result, list) or not all(isinstance(s, str) for s in result):
            raise ProgramTypeError("planner programs must return a list of sub-task strings")
        return result
    if kind is LmpKind.PARSE_QUERY_OBJ:
        if not isinstance(result, list) or not all(
            isinstance(v, DetectionView) for v in result
        ):
            raise ProgramTypeError("parse_query_obj programs must return detections")
        return [v._record for v in result]
    if kind is LmpKind.COMPOSER:
        if ctx.capture is None:
            raise ProgramTypeError("composer programs must call execute(...)")
        return ctx.capture
    if not isinstance(result, MapHandle):
        raise ProgramTypeError(f"{kind.value} programs must return a value map")
    expected = MAP_KINDS[kind]
    if result.vmap.kind is not expected:
        raise ProgramTypeError(
            f"{kind.value} program returned a {result.vmap.kind.value} map"
        )
    result.vmap.validate()
    return result.vmap

"""Program generation and orchestration: planner -> composer -> map programs.

Programs come from an HTTP endpoint or from the canned fixture corpus; both
paths go through the cache so one (kind, query, scene) triple costs at most
one generation per episode. A composed map set is wrapped in a source
closure that re-interprets the cached programs against the latest world
state, which is what makes closed-loop MPC see moved objects.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import (
    CompositionError,
    FixtureMissingError,
    GenerationError,
    ProgramError,
)
from ..planning import DEFAULT_PLANNER, PlannerConfig, run_mpc, run_push_mpc
from ..sim.tasks import (
    LATCHED_SPECS,
    POSITIONS,
    PREPOSITIONS,
    REGIONS,
    TaskSpec,
    VELOCITY_SCALES,
    match_template,
)
from ..sim.trace import EpisodeTrace
from ..sim.world import WorldState, _resolve_query
from ..trajectory import MapSet, Waypoint
from ..voxels import MapKind, ValueMap, densify_affordance, smooth_avoidance, world_to_voxel
from .cache import ProgramCache
from .client import ChatCompletionsClient, extract_code_block
from .interpreter import InterpreterContext, LmpKind, interpret
from .parser import Program, parse_program, program_source

FIXTURE_ROOT = Path(__file__).parent / "fixtures"
PROMPT_ROOT = Path(__file__).parent / "prompts"
GENERATION_ATTEMPTS = 3

# Map-program fixtures shared across templates with the same geometry.
FIXTURE_ALIASES = {
    ("affordance", "move_pos_min_dist"): "move_pos",
    ("affordance", "move_pos_stay_prep"): "move_pos",
    ("affordance", "move_pos_vel_near"): "move_pos",
    ("affordance", "move_pos_vel_region"): "move_pos",
    ("affordance", "push_pos_avoid"): "push_to_pos",
    ("velocity", "grasp_at_vel"): "move_pos_vel_near",
}

# Sub-task phrasings produced by multi-phase planner programs.
SUBTASK_PATTERNS = [
    (re.compile(r"grasp the (?P<owner>.+) handle"), "grasp_handle"),
    (re.compile(r"press down the (?P<owner>.+) handle"), "press_handle"),
    (re.compile(r"pull open the (?P<owner>.+)"), "pull_open"),
]


@dataclass
class PromptBundle:
    kind: LmpKind
    preamble: str
    examples: list[tuple[str, str]]

    def messages(self, query: str) -> list[dict]:
        shots = "\n\n".join(
            f"## query: {q}\n{p.rstrip()}" for q, p in self.examples
        )
        system = self.preamble.rstrip() + "\n\n" + shots if shots else self.preamble
        return [
            {"role": "system", "content": system},
            {"role": "user", "content": query},
        ]


def load_bundle(kind: LmpKind) -> PromptBundle:
    root = PROMPT_ROOT / kind.value
    preamble = (root / "preamble.txt").read_text()
    examples: list[tuple[str, str]] = []
    examples_file = root / "examples.txt"
    if examples_file.exists():
        current_query = None
        current_lines: list[str] = []
        for line in examples_file.read_text().splitlines():
            if line.startswith("## query:"):
                if current_query is not None:
                    examples.append((current_query, "\n".join(current_lines) + "\n"))
                current_query = line.removeprefix("## query:").strip()
                current_lines = []
            elif current_query is not None:
                current_lines.append(line)
        if current_query is not None:
            examples.append((current_query, "\n".join(current_lines) + "\n"))
    if not preamble.strip():
        raise GenerationError(f"empty preamble for {kind.value}")
    return PromptBundle(kind=kind, preamble=preamble, examples=examples)


@dataclass
class LmpSession:
    """Shared context for one episode: mode, cache, task, planner settings."""

    mode: str  # "fixture" | "endpoint"
    task: TaskSpec | None = None
    cache: ProgramCache = field(default_factory=ProgramCache)
    client: ChatCompletionsClient | None = None
    planner_config: PlannerConfig = DEFAULT_PLANNER
    _parsed: dict[str, Program] = field(default_factory=dict)

    @staticmethod
    def fixture_mode(task: TaskSpec | None = None, planner_config: PlannerConfig = DEFAULT_PLANNER):
        return LmpSession(mode="fixture", task=task, planner_config=planner_config)

    @staticmethod
    def endpoint_mode(
        client: ChatCompletionsClient,
        task: TaskSpec | None = None,
        planner_config: PlannerConfig = DEFAULT_PLANNER,
    ):
        return LmpSession(mode="endpoint", task=task, client=client, planner_config=planner_config)

    def parse(self, text: str) -> Program:
        prog = self._parsed.get(text)
        if prog is None:
            prog = parse_program(text)
            self._parsed[text] = prog
        return prog


# -- fixture engine ---------------------------------------------------------


def _owner_detect_name(owner: str, task: TaskSpec | None) -> str:
    canonical = _resolve_query(f"{owner} handle").removesuffix(" handle")
    if canonical == "drawer" and task is not None and "drawer" in task.goal:
        return task.goal["drawer"]
    return canonical


def _open_axis(owner_detect: str) -> tuple[float, float, float]:
    if "drawer" in owner_detect:
        return (0.0, -1.0, 0.0)
    if owner_detect in LATCHED_SPECS:
        return LATCHED_SPECS[owner_detect][0]
    return (0.0, -1.0, 0.0)


def fixture_id_for(query: str, task: TaskSpec | None):
    """Resolve a fixture id and extra parameters for an instruction or sub-task."""
    template, bindings = match_template(query)
    if template is not None:
        return template, dict(bindings)
    q = " ".join(query.lower().split())
    for pattern, fid in SUBTASK_PATTERNS:
        m = pattern.fullmatch(q)
        if m:
            return fid, {"owner": m.group("owner")}
    raise FixtureMissingError(f"no fixture template matches {query!r}")


def fixture_params(task: TaskSpec | None, extra: dict) -> dict:
    """Substitution values for fixture program templates."""
    p: dict = {"rest_z": "0.02"}
    b = dict(task.bindings) if task is not None else {}
    g = dict(task.goal) if task is not None else {}
    b.update({k: v for k, v in extra.items() if k != "owner"})

    if task is not None:
        p["instruction"] = task.instruction
    for key, value in b.items():
        p.setdefault(key, value)
    if "preposition" in b:
        d = PREPOSITIONS[b["preposition"]]
        p.update(prep_x=d[0], prep_y=d[1], prep_z=d[2])
        p.update(neg_prep_x=-d[0], neg_prep_y=-d[1], neg_prep_z=-d[2])
    if "pos" in b:
        x, y = POSITIONS[b["pos"]]
        p.update(pos_x=x, pos_y=y)
    if "region" in b:
        (lx, ly), (hx, hy) = REGIONS[b["region"]]
        p.update(
            region_lo_x=lx, region_lo_y=ly, region_hi_x=hx, region_hi_y=hy,
            region_cx=(lx + hx) / 2, region_cy=(ly + hy) / 2,
        )
    if "dist" in b:
        p["dist_cm"] = int(b["dist"])
    else:
        p["dist_cm"] = 10  # grasp-at-velocity reuses the slow-zone fixture
    if "velocity" in b:
        p["vel"] = VELOCITY_SCALES[b["velocity"]]
    if "drawer" in g:
        p["drawer"] = g["drawer"]
        p["closed_y_off"] = 0.125
    owner = extra.get("owner")
    if owner is None and "latched" in g:
        owner = g["latched"]
    if owner is not None:
        detect_name = _owner_detect_name(owner, task)
        ax = _open_axis(detect_name)
        p.update(owner=detect_name, open_x=ax[0], open_y=ax[1], open_z=ax[2])
    return p


def fixture_program(
    kind: LmpKind, query: str, task: TaskSpec | None, hint: tuple[str, dict] | None = None
) -> str:
    if kind is LmpKind.PARSE_QUERY_OBJ:
        path = FIXTURE_ROOT / kind.value / "generic.lmp"
        return path.read_text().format_map({"obj": query})
    fid, extra = hint if hint is not None else fixture_id_for(query, task)
    fid = FIXTURE_ALIASES.get((kind.value, fid), fid)
    path = FIXTURE_ROOT / kind.value / f"{fid}.lmp"
    if not path.exists():
        if kind is LmpKind.PLANNER:
            path = FIXTURE_ROOT / "planner" / "passthrough.lmp"
            if not path.exists():
                raise FixtureMissingError(f"no planner fixture for {query!r}")
        else:
            raise FixtureMissingError(f"no {kind.value} fixture {fid!r}")
    params = fixture_params(task, extra)
    try:
        return path.read_text().format_map(params)
    except KeyError as exc:
        raise FixtureMissingError(f"fixture {fid!r} needs parameter {exc}") from exc


# -- generation --------------------------------------------------------------


def llm_generate(
    kind: LmpKind,
    query: str,
    session: LmpSession,
    state: WorldState,
    fixture_hint: tuple[str, dict] | None = None,
) -> str:
    """Produce program text for (kind, query), via cache, fixtures, or the endpoint."""
    key = session.cache.key(kind, query, state)
    cached = session.cache.get(key)
    if cached is not None:
        return cached
    if session.mode == "fixture":
        text = fixture_program(kind, query, session.task, hint=fixture_hint)
        session.parse(text)  # fixtures must parse; fail loudly here if not
    else:
        if session.client is None:
            raise GenerationError("endpoint mode requires a client")
        bundle = load_bundle(kind)
        last: Exception | None = None
        text = None
        for _ in range(GENERATION_ATTEMPTS):
            raw = session.client.complete(bundle.messages(query))
            candidate = extract_code_block(raw)
            try:
                session.parse(candidate)
            except ProgramError as exc:
                last = exc
                continue
            text = candidate
            break
        if text is None:
            raise GenerationError(f"no parsable program after {GENERATION_ATTEMPTS} attempts: {last}")
    session.cache.put(key, text)
    return text


def plan_subtasks(instruction: str, session: LmpSession, state: WorldState) -> list[str]:
    """Decompose an instruction into ordered sub-tasks via a planner program."""
    if not instruction.strip():
        raise GenerationError("empty instruction")
    text = llm_generate(LmpKind.PLANNER, instruction, session, state)
    ctx = InterpreterContext(kind=LmpKind.PLANNER, state=state)
    return interpret(session.parse(text), ctx)


class _TransformCache:
    """Content-addressed memo for the densify/smooth post-processing.

    Raw maps are frequently bitwise-identical between replans even when the
    scene pose changed (static targets while a joint moves), and the
    distance transform dominates replan cost, so keying on the raw payload
    is worth the hash.
    """

    def __init__(self, fn, cap: int = 8):
        self.fn = fn
        self.cap = cap
        self._memo: dict[bytes, ValueMap] = {}

    def __call__(self, vmap: ValueMap) -> ValueMap:
        import hashlib

        digest = hashlib.blake2b(vmap.data.tobytes(), digest_size=16).digest()
        hit = self._memo.get(digest)
        if hit is None:
            if len(self._memo) >= self.cap:
                self._memo.clear()
            hit = self.fn(vmap)
            self._memo[digest] = hit
        return hit


class MapSource:
    """Re-evaluates the composed map set against any world state."""

    def __init__(self, session: LmpSession, subtask: str):
        self.session = session
        self.subtask = subtask
        self._densify = _TransformCache(densify_affordance)
        self._smooth = _TransformCache(smooth_avoidance)

    def __call__(self, state: WorldState) -> MapSet:
        session = self.session
        text = llm_generate(LmpKind.COMPOSER, self.subtask, session, state)
        hint = None
        if session.mode == "fixture":
            hint = fixture_id_for(self.subtask, session.task)

        def submap(kind: LmpKind, query: str) -> ValueMap:
            sub_text = llm_generate(kind, query, session, state, fixture_hint=hint)
            sub_ctx = InterpreterContext(kind=kind, state=state)
            return interpret(session.parse(sub_text), sub_ctx)

        ctx = InterpreterContext(kind=LmpKind.COMPOSER, state=state, submap=submap)
        capture = interpret(session.parse(text), ctx)
        maps = capture.maps
        if "affordance" not in maps:
            raise CompositionError(f"sub-task {self.subtask!r} produced no affordance map")
        mapset = MapSet(
            affordance=self._densify(maps["affordance"]),
            avoidance=self._smooth(maps["avoidance"]) if "avoidance" in maps else None,
            rotation=maps.get("rotation"),
            velocity=maps.get("velocity"),
            gripper=maps.get("gripper"),
            entity=capture.entity,
            reset_first=capture.reset_first,
        )
        return mapset


def compose(subtask: str, session: LmpSession, state: WorldState) -> tuple[MapSet, MapSource]:
    """Build the map set for one sub-task plus its re-evaluable source."""
    if not subtask.strip():
        raise CompositionError("empty sub-task")
    source = MapSource(session, subtask)
    return source(state), source


def _rest_pose_source(state: WorldState):
    from ..voxels import empty_map, set_voxel_by_radius

    rest = state.ee_position.copy()

    def source(st: WorldState) -> MapSet:
        aff = empty_map(MapKind.AFFORDANCE, st.spec)
        aff = set_voxel_by_radius(aff, world_to_voxel(rest, st.spec), 2, 1.0)
        return MapSet(affordance=densify_affordance(aff))

    return source


def execute(
    source: MapSource,
    session: LmpSession,
    state: WorldState,
    seed: int = 0,
    trace: EpisodeTrace | None = None,
    task: TaskSpec | None = None,
    tick_budget: int | None = None,
) -> tuple[WorldState, dict]:
    """Run the planner loop for a composed map set (MPC or push mode)."""
    from ..dynamics import PlanarPushModel

    maps = source(state)
    if maps.reset_first:
        state, _ = run_mpc(
            state,
            _rest_pose_source(state),
            session.planner_config,
            seed=seed,
            trace=trace,
            tick_budget=60,
        )
    if maps.entity.kind == "ee":
        return run_mpc(
            state, source, session.planner_config, seed=seed, trace=trace, task=task,
            tick_budget=tick_budget,
        )
    return run_push_mpc(
        state, source, PlanarPushModel(), session.planner_config, seed=seed,
        trace=trace, task=task,
    )


@dataclass
class InstructionOutcome:
    state: WorldState
    success: bool
    trace: EpisodeTrace
    subtasks: list[str]
    infos: list[dict]
    divergence: float = 0.0


def run_instruction(
    session: LmpSession,
    state: WorldState,
    instruction: str,
    seed: int = 0,
    task: TaskSpec | None = None,
) -> InstructionOutcome:
    """Full pipeline for one instruction: plan, then compose+execute each phase."""
    from ..sim.tasks import success_check

    task = task or session.task
    trace = EpisodeTrace()
    subtasks = plan_subtasks(instruction, session, state)
    trace.add("plan", instruction=instruction, subtasks=subtasks)
    infos: list[dict] = []
    divergence = 0.0
    for i, subtask in enumerate(subtasks):
        _, source = compose(subtask, session, state)
        state, info = execute(
            source, session, state, seed=seed + 101 * i, trace=trace, task=task
        )
        infos.append(info)
        divergence = max(divergence, info.get("divergence", 0.0))
        if task is not None and success_check(task, state):
            break
    success = success_check(task, state) if task is not None else all(
        i.get("success") for i in infos
    )
    trace.add("outcome", success=success, ticks=state.tick)
    return InstructionOutcome(
        state=state,
        success=bool(success),
        trace=trace,
        subtasks=subtasks,
        infos=infos,
        divergence=divergence,
    )

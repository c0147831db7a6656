"""Episode runner and suite driver with failure attribution."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..errors import (
    CompositionError,
    GenerationError,
    PerceptionFailure,
    ProgramError,
    SetupError,
    VoxplanError,
)
from ..lmp.pipeline import LmpSession, run_instruction
from ..planning import DEFAULT_PLANNER, PlannerConfig
from ..sim.tasks import EPISODE_SEEDS, SUITE_TEMPLATES, TaskSpec, make_task, reset

# Predicted-vs-actual object displacement beyond this marks a dynamics failure.
PUSH_DIVERGENCE_M = 0.10


@dataclass
class EpisodeResult:
    task: TaskSpec
    seed: int
    success: bool
    ticks: int
    failure_category: str  # perception | specification | dynamics | other | none
    trace_path: str = ""

    def row(self) -> dict:
        return {
            "template": self.task.template,
            "split": self.task.split,
            "category": self.task.category,
            "seed": self.seed,
            "success": int(self.success),
            "ticks": self.ticks,
            "failure": self.failure_category,
        }


def _attribute_failure(exc: VoxplanError | None, divergence: float) -> str:
    if exc is None:
        if divergence > PUSH_DIVERGENCE_M:
            return "dynamics"
        return "other"
    if isinstance(exc, PerceptionFailure):
        return "perception"
    if isinstance(exc, (ProgramError, GenerationError, CompositionError)):
        return "specification"
    return "other"


def run_episode(
    task: TaskSpec,
    seed: int,
    mode: str = "fixture",
    config: PlannerConfig = DEFAULT_PLANNER,
    client=None,
    out_dir: str | Path | None = None,
) -> EpisodeResult:
    """Reset, plan, compose, execute; every failure is captured and categorized."""
    if mode == "fixture":
        session = LmpSession.fixture_mode(task, planner_config=config)
    else:
        session = LmpSession.endpoint_mode(client, task=task, planner_config=config)
    try:
        state = reset(task, seed)
    except SetupError:
        return EpisodeResult(task, seed, False, 0, "other")
    exc: VoxplanError | None = None
    outcome = None
    try:
        outcome = run_instruction(session, state, task.instruction, seed=seed, task=task)
    except VoxplanError as caught:
        exc = caught
    if outcome is not None and outcome.success:
        result = EpisodeResult(task, seed, True, outcome.state.tick, "none")
    else:
        ticks = outcome.state.tick if outcome is not None else state.tick
        divergence = outcome.divergence if outcome is not None else 0.0
        result = EpisodeResult(task, seed, False, ticks, _attribute_failure(exc, divergence))
    if out_dir is not None and outcome is not None:
        path = Path(out_dir) / f"{task.template}_{task.split}_{seed}.jsonl"
        outcome.trace.write_jsonl(path)
        result.trace_path = str(path)
    return result


@dataclass
class Report:
    rows: list[dict] = field(default_factory=list)

    def add(self, result: EpisodeResult) -> None:
        self.rows.append(result.row())

    def cells(self) -> dict[tuple[str, str], list[dict]]:
        out: dict[tuple[str, str], list[dict]] = {}
        for row in self.rows:
            out.setdefault((row["template"], row["split"]), []).append(row)
        return out

    def success_rate(self, template: str | None = None, split: str | None = None) -> float:
        rows = [
            r
            for r in self.rows
            if (template is None or r["template"] == template)
            and (split is None or r["split"] == split)
        ]
        if not rows:
            return 0.0
        return sum(r["success"] for r in rows) / len(rows)

    def category_rate(self, category: str, split: str | None = None) -> float:
        rows = [
            r
            for r in self.rows
            if r["category"] == category and (split is None or r["split"] == split)
        ]
        if not rows:
            return 0.0
        return sum(r["success"] for r in rows) / len(rows)

    def failure_histogram(self) -> dict[str, int]:
        hist: dict[str, int] = {}
        for row in self.rows:
            if row["failure"] != "none":
                hist[row["failure"]] = hist.get(row["failure"], 0) + 1
        return hist


def run_suite(
    templates=None,
    splits=("seen", "unseen"),
    seeds=EPISODE_SEEDS,
    mode: str = "fixture",
    config: PlannerConfig = DEFAULT_PLANNER,
    client=None,
    out_dir=None,
    disturb: bool = False,
) -> Report:
    """Run every (template x split) cell over the seed list."""
    report = Report()
    templates = list(templates) if templates is not None else list(SUITE_TEMPLATES)
    for template in templates:
        for split in splits:
            for seed in seeds:
                task = make_task(template, split=split, seed=seed, disturb=disturb)
                result = run_episode(
                    task, seed, mode=mode, config=config, client=client, out_dir=out_dir
                )
                report.add(result)
    return report

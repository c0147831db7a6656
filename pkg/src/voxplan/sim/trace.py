"""Append-only episode record stream for replay and plotting."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return [round(float(v), 9) for v in value.ravel()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


@dataclass
class EpisodeTrace:
    """Ordered event records: ticks, replans, disturbances, outcomes."""

    records: list[dict] = field(default_factory=list)

    def add(self, kind: str, **payload) -> None:
        rec = {"kind": kind}
        rec.update({k: _jsonable(v) for k, v in payload.items()})
        self.records.append(rec)

    def ticks(self) -> list[dict]:
        return [r for r in self.records if r["kind"] == "tick"]

    def replans(self) -> list[dict]:
        return [r for r in self.records if r["kind"] == "replan"]

    def write_jsonl(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @staticmethod
    def read_jsonl(path) -> "EpisodeTrace":
        trace = EpisodeTrace()
        for line in Path(path).read_text().splitlines():
            if line.strip():
                trace.records.append(json.loads(line))
        return trace

    def log_tick(self, state) -> None:
        self.add(
            "tick",
            tick=state.tick,
            ee=state.ee_position,
            gripper=state.gripper,
        )

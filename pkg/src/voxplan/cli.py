"""Command-line entry point: run, suite, learn, dump-maps."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import emit, run_episode, run_suite
from .lmp.client import ChatCompletionsClient, EndpointConfig
from .planning import DEFAULT_PLANNER
from .sim.tasks import EPISODE_SEEDS, SUITE_TEMPLATES, TaskSpec, make_task


def _client_for(mode: str):
    if mode != "endpoint":
        return None
    return ChatCompletionsClient(EndpointConfig.from_env())


def _load_task(args) -> TaskSpec:
    if args.task:
        return TaskSpec.load(args.task)
    if not args.template:
        raise SystemExit("provide --task FILE or --template ID")
    return make_task(args.template, split=args.split, seed=args.seed, disturb=args.disturb)


def cmd_run(args) -> int:
    task = _load_task(args)
    result = run_episode(
        task,
        args.seed,
        mode=args.mode,
        client=_client_for(args.mode),
        out_dir=args.out,
    )
    print(
        f"{task.template} [{task.split}] seed={args.seed} -> "
        f"{'success' if result.success else 'FAIL (' + result.failure_category + ')'} "
        f"in {result.ticks} ticks"
    )
    return 0 if result.success else 1


def cmd_suite(args) -> int:
    seeds = EPISODE_SEEDS[: args.episodes]
    templates = args.templates.split(",") if args.templates else None
    splits = args.splits.split(",")
    report = run_suite(
        templates=templates,
        splits=splits,
        seeds=seeds,
        mode=args.mode,
        client=_client_for(args.mode),
        out_dir=Path(args.out) / "traces" if args.traces else None,
        disturb=args.disturb,
    )
    csv_path, txt_path = emit(report, args.out)
    print(Path(txt_path).read_text())
    print(f"wrote {csv_path} and {txt_path}")
    return 0


def cmd_learn(args) -> int:
    from .dynamics import online_loop, synthesize_priors, write_curve_csv

    task = make_task(args.template, seed=args.seed)
    priors = None
    if not args.no_prior:
        priors = synthesize_priors(task, base_seed=args.seed)
    result = online_loop(
        task,
        priors,
        transition_budget=args.budget,
        target_success=args.target,
        seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.model.save(out / "model.bin")
    write_curve_csv(result, out / "curve.csv")
    print(
        f"{args.template}: success={result.success_rate:.1%} "
        f"transitions={result.transitions} "
        f"sim_time={result.interaction_seconds:.1f}s "
        f"{'(budget exceeded)' if result.exceeded else ''}"
    )
    return 0


def cmd_dump_maps(args) -> int:
    from .lmp.pipeline import LmpSession, compose
    from .map_io import dump_map, slice_text
    from .sim.tasks import reset

    task = _load_task(args)
    state = reset(task, args.seed)
    session = LmpSession.fixture_mode(task)
    mapset, _ = compose(task.instruction, session, state)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for kind in ("affordance", "avoidance", "rotation", "velocity", "gripper"):
        vmap = getattr(mapset, kind)
        if vmap is None:
            continue
        dump_map(vmap, out / f"{kind}.vxmp")
        if kind != "rotation":
            (out / f"{kind}_z{args.z}.txt").write_text(slice_text(vmap, args.z))
        print(f"wrote {kind} map")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="voxplan")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--task", help="task spec JSON file")
    common.add_argument("--template", choices=sorted(SUITE_TEMPLATES) + [
        "open_door", "open_window", "open_fridge", "open_drawer"
    ])
    common.add_argument("--split", default="seen", choices=["seen", "unseen"])
    common.add_argument("--seed", type=int, default=EPISODE_SEEDS[0])
    common.add_argument("--mode", default="fixture", choices=["fixture", "endpoint"])
    common.add_argument("--disturb", action="store_true")
    common.add_argument("--out", default="out")

    p_run = sub.add_parser("run", parents=[common], help="run one episode")
    p_run.set_defaults(func=cmd_run)

    p_suite = sub.add_parser("suite", parents=[common], help="run the task suite")
    p_suite.add_argument("--templates", help="comma-separated template ids")
    p_suite.add_argument("--splits", default="seen,unseen")
    p_suite.add_argument("--episodes", type=int, default=20)
    p_suite.add_argument("--traces", action="store_true")
    p_suite.set_defaults(func=cmd_suite)

    p_learn = sub.add_parser("learn", parents=[common], help="online dynamics learning")
    p_learn.add_argument("--budget", type=int, default=300)
    p_learn.add_argument("--target", type=float, default=0.8)
    p_learn.add_argument("--no-prior", action="store_true")
    p_learn.set_defaults(func=cmd_learn)

    p_dump = sub.add_parser("dump-maps", parents=[common], help="dump composed value maps")
    p_dump.add_argument("--z", type=int, default=15)
    p_dump.set_defaults(func=cmd_dump_maps)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

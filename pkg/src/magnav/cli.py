"""Command-line interface: episode runs, suites, ablations and debug dumps."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import bench
from .errors import MagnavError
from .gridworld import corner_points
from .nav import fmm_field
from .viewplan import objective


def _oracle_cfg_from_flag(value: str) -> dict:
    if value == "perfect":
        return {"kind": "perfect"}
    if value == "quality":
        return {"kind": "quality"}
    if value == "remote":
        return {"kind": "remote"}
    if value.startswith("scripted:"):
        return {"kind": "scripted", "file": value.split(":", 1)[1]}
    raise MagnavError(
        f"unknown oracle {value!r}; expected perfect|quality|scripted:FILE|remote")


def _cmd_run(args) -> int:
    spec = bench.load_scenario(args.scenario)
    if args.oracle:
        spec.oracle_cfg = _oracle_cfg_from_flag(args.oracle)
    result = bench.run_episode(spec, arm=args.arm, seed_override=args.seed)
    print(f"scenario={result.scenario} arm={result.arm} "
          f"success={int(result.success)} steps={result.steps} "
          f"spl={result.spl:.3f} dtg={result.dtg:.3f} "
          f"phase={result.phase_reached}")
    if args.trace:
        doc = {
            "scenario": result.scenario,
            "arm": result.arm,
            "seed": result.seed,
            "success": result.success,
            "steps": result.steps,
            "path_length": result.path_length,
            "shortest_length": (None if math.isinf(result.shortest_length)
                                else result.shortest_length),
            "spl": result.spl,
            "dtg": result.dtg,
            "phase_reached": result.phase_reached,
            "trace": result.trace,
        }
        Path(args.trace).write_text(json.dumps(doc, indent=2, sort_keys=True))
        print(f"trace written to {args.trace}")
    return 0


def _run_suite(args, arms: list[str]) -> int:
    paths = bench.scenario_paths(args.directory)
    oracle_cfg = _oracle_cfg_from_flag(args.oracle) if args.oracle else None
    report = bench.run_suite(paths, arms, suite_seed=args.seed,
                             oracle_cfg_override=oracle_cfg)
    if args.out:
        Path(args.out).write_text(report.to_csv())
        print(f"report written to {args.out}")
    print(report.summary_table())
    return 0


def _cmd_suite(args) -> int:
    arms = [a.strip() for a in args.arms.split(",") if a.strip()]
    for arm in arms:
        if arm not in bench.ARMS:
            raise MagnavError(f"unknown arm {arm!r}; expected one of "
                              f"{sorted(bench.ARMS)}")
    return _run_suite(args, arms)


def _cmd_ablate(args) -> int:
    return _run_suite(args, list(bench.ARMS))


def _cmd_viewplan(args) -> int:
    spec = bench.load_scenario(args.scenario)
    target = next((o for o in spec.objects if o.id == args.target), None)
    if target is None:
        raise MagnavError(f"no object with id {args.target!r} in scenario")
    points = corner_points(target.footprint)
    grid = spec.truth  # debug dump scores the fully known map
    lines = ["x,y,r_visible,r_fov,p_distance,p_feasibility,total"]
    for y in range(grid.height):
        for x in range(grid.width):
            s = objective(grid, (x, y), points, spec.controller.viewplan)
            lines.append(f"{x},{y},{s.r_visible:.6f},{s.r_fov:.6f},"
                         f"{s.p_distance:.6f},{s.p_feasibility:.6f},"
                         f"{s.total:.6f}")
    Path(args.dump).write_text("\n".join(lines) + "\n")
    print(f"score field written to {args.dump}")
    return 0


def _cmd_nav(args) -> int:
    spec = bench.load_scenario(args.scenario)
    if args.goal:
        gx, gy = (int(v) for v in args.goal.split(","))
    else:
        gx, gy = spec.start.position
    dfield = fmm_field(spec.truth, (gx, gy), unknown_speed=0.5)
    lines = ["x,y,distance"]
    for y in range(spec.truth.height):
        for x in range(spec.truth.width):
            v = dfield.values[y, x]
            lines.append(f"{x},{y},{'inf' if math.isinf(v) else f'{v:.6f}'}")
    Path(args.dump).write_text("\n".join(lines) + "\n")
    print(f"distance field written to {args.dump}")
    return 0


def _cmd_serve_oracle(args) -> int:
    import uvicorn

    from .oracle_server import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="magnav",
        description="2D grid-world navigation benchmark with three-stage "
                    "grounding, viewpoint optimization and frontier exploration")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("scenario")
    p.add_argument("--arm", default="full", choices=sorted(bench.ARMS))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--oracle", default=None,
                   help="perfect|quality|scripted:FILE|remote")
    p.add_argument("--trace", default=None, help="write a JSON trace here")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("suite", help="run a scenario directory over chosen arms")
    p.add_argument("directory")
    p.add_argument("--arms", default=",".join(bench.ARMS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle", default=None)
    p.add_argument("--out", default=None, help="write the CSV report here")
    p.set_defaults(func=_cmd_suite)

    p = sub.add_parser("ablate", help="suite preset over all ablation arms")
    p.add_argument("directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("viewplan", help="dump the per-cell viewpoint score field")
    p.add_argument("scenario")
    p.add_argument("--target", required=True, help="object id to score against")
    p.add_argument("--dump", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_viewplan)

    p = sub.add_parser("nav", help="dump a fast-marching distance field")
    p.add_argument("scenario")
    p.add_argument("--goal", default=None, help="X,Y goal cell (default: start)")
    p.add_argument("--dump", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_nav)

    p = sub.add_parser("serve-oracle",
                       help="serve the reference grounding oracle over HTTP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.set_defaults(func=_cmd_serve_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MagnavError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

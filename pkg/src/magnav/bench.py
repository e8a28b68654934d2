"""Scenario loading, episode and suite execution, metrics and reporting.

Scenario files are YAML trees whose field names mirror the episode spec.
Grids are given as row strings ('.' free, '#' obstacle, '?' free but
initially unknown); object footprints are stamped into the ground truth as
obstacles. Suites run every (scenario, arm) pair with seeds derived from the
suite seed, and reports are byte-identical across repeated runs.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .controller import ControllerConfig, ControllerResult, World, run_controller
from .errors import InputError, ScenarioError
from .gridworld import (FREE, OBSTACLE, UNKNOWN, AgentPose, Cell,
                        OccupancyGrid, SceneObject)
from .grounding import (GroundingOracle, GroundingResult, Instruction,
                        PerfectOracle, QualityDependentOracle, RemoteOracle,
                        ScriptedOracle, parse_instruction)
from .memory import MemoryStore
from .nav import ExploreWeights, dijkstra_field
from .viewplan import GAConfig, ViewplanConfig

ORACLE_URL_ENV = "MAGNAV_ORACLE_URL"

# Ablation arms: which controller features each arm switches off.
ARMS: dict[str, dict] = {
    "full": {},
    "no-ag": {"enable_active": False},
    "no-mg": {"enable_reserved": False},
    "no-amg": {"enable_active": False, "enable_reserved": False},
    "no-amg-noraw": {"enable_active": False, "enable_reserved": False,
                     "include_raw_context": False},
}


@dataclass
class EpisodeSpec:
    """One scenario: world, instruction, start pose, truth and config."""

    name: str
    truth: OccupancyGrid
    known0: OccupancyGrid
    objects: tuple[SceneObject, ...]
    instruction: Instruction
    start: AgentPose
    truth_target_id: str
    seed: int
    delta_sim: float
    controller: ControllerConfig
    oracle_cfg: dict
    base_dir: Optional[Path] = None


@dataclass
class EpisodeResult:
    scenario: str
    arm: str
    success: bool
    steps: int
    path_length: float      # p, meters of executed forward motion
    shortest_length: float  # l, meters (inf when unreachable)
    spl: float
    dtg: float              # meters
    phase_reached: str
    seed: int
    trace: dict


@dataclass
class SuiteReport:
    rows: list[EpisodeResult]
    arms: list[str]

    def aggregates(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for arm in self.arms:
            rows = [r for r in self.rows if r.arm == arm]
            n = len(rows)
            out[arm] = {
                "episodes": n,
                "sr": sum(1 for r in rows if r.success) / n if n else 0.0,
                "spl": sum(r.spl for r in rows) / n if n else 0.0,
                "dtg": sum(r.dtg for r in rows) / n if n else 0.0,
            }
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scenario", "arm", "success", "steps", "path_length",
                         "shortest_length", "spl", "dtg", "phase"])
        for r in self.rows:
            writer.writerow([
                r.scenario, r.arm, int(r.success), r.steps,
                _fmt(r.path_length), _fmt(r.shortest_length),
                _fmt(r.spl), _fmt(r.dtg), r.phase_reached,
            ])
        return buf.getvalue()

    def summary_table(self) -> str:
        lines = [f"{'arm':<14} {'episodes':>8} {'SR':>8} {'SPL':>8} {'DTG':>8}"]
        for arm, agg in self.aggregates().items():
            lines.append(f"{arm:<14} {agg['episodes']:>8d} {agg['sr']:>8.3f} "
                         f"{agg['spl']:>8.3f} {agg['dtg']:>8.3f}")
        return "\n".join(lines)


def _fmt(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:.6f}"


def derive_feature(class_name: str, attributes: Sequence[str],
                   dim: int = 8) -> np.ndarray:
    """Deterministic unit descriptor from class and attributes.

    Identical class+attributes yield identical vectors, so look-alike objects
    associate strongly while differently described ones stay apart.
    """
    key = f"{class_name}|{','.join(attributes)}"
    seed = int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big")
    rng = np.random.default_rng(seed)
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def derive_episode_seed(suite_seed: int, scenario: str) -> int:
    """Episode seed from (suite seed, scenario name).

    Deliberately arm-independent: every ablation arm replays a scenario with
    common random numbers, so arm differences are flag effects rather than
    reshuffled luck.
    """
    digest = hashlib.sha256(f"{suite_seed}|{scenario}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


# ---------------------------------------------------------------------------
# Scenario parsing

def _parse_instruction_field(value) -> Instruction:
    if isinstance(value, str):
        return parse_instruction(value)
    if isinstance(value, dict):
        target = value.get("target", "")
        landmarks = tuple(value.get("landmarks", ()))
        attributes = tuple(value.get("attributes", ()))
        relations = tuple(
            (lm, rel) for lm, rel in value.get("relations",
                                               [(lm, "near") for lm in landmarks]))
        raw = value.get("text")
        if raw is None:
            raw = "find the " + " ".join((*attributes, target))
            for lm, rel in relations:
                raw += f" {rel} the {lm}"
        return Instruction(raw_text=raw, target_class=target,
                           landmark_classes=landmarks,
                           target_attributes=attributes,
                           landmark_relations=relations)
    raise ScenarioError(f"instruction must be text or a mapping, got {value!r}")


def _parse_objects(doc_objects, truth: OccupancyGrid,
                   feature_dim: int) -> tuple[SceneObject, ...]:
    objects = []
    seen_ids = set()
    for entry in doc_objects:
        oid = str(entry["id"])
        if oid in seen_ids:
            raise ScenarioError(f"duplicate object id {oid!r}")
        seen_ids.add(oid)
        cls = str(entry["class"])
        attributes = tuple(str(a) for a in entry.get("attributes", ()))
        if "rect" in entry:
            x0, y0, w, h = entry["rect"]
            cells = {(x0 + dx, y0 + dy) for dy in range(h) for dx in range(w)}
        elif "cells" in entry:
            cells = {(int(c[0]), int(c[1])) for c in entry["cells"]}
        else:
            raise ScenarioError(f"object {oid!r} needs a rect or cells field")
        for (x, y) in cells:
            if not truth.in_bounds(x, y):
                raise ScenarioError(f"object {oid!r} cell ({x},{y}) out of bounds")
        if "feature" in entry:
            feat = np.asarray(entry["feature"], dtype=float)
            feat = feat / np.linalg.norm(feat)
        else:
            feat = derive_feature(cls, attributes, feature_dim)
        objects.append(SceneObject(id=oid, class_name=cls,
                                   attributes=attributes, feature=feat,
                                   footprint=frozenset(cells)))
    return tuple(objects)


def _build_controller_config(cfg: dict) -> ControllerConfig:
    vp_doc = dict(cfg.get("viewplan", {}))
    ga_doc = dict(vp_doc.pop("ga", {}))
    viewplan = ViewplanConfig(**vp_doc, ga=GAConfig(**ga_doc))
    explore = ExploreWeights(**cfg.get("explore", {}))
    ablation = cfg.get("ablation", {})
    return ControllerConfig(
        step_budget=int(cfg.get("step_budget", 500)),
        stop_radius=float(cfg.get("stop_radius", 0.3)),
        enable_active=bool(ablation.get("active", True)),
        enable_reserved=bool(ablation.get("reserved", True)),
        include_raw_context=bool(ablation.get("raw_context", True)),
        m_max=int(cfg.get("m_max", 13)),
        n_samples=cfg.get("n_samples"),
        viewplan=viewplan,
        explore=explore,
    )


def build_spec(doc: dict, name: str = "scenario",
               base_dir: Optional[Path] = None) -> EpisodeSpec:
    """Validate a parsed scenario document and build the episode spec."""
    try:
        grid_doc = doc["grid"]
        rows = grid_doc["rows"]
        if isinstance(rows, str):
            rows = [r for r in rows.splitlines() if r]
        resolution = float(grid_doc.get("resolution", 0.25))
        truth = OccupancyGrid.from_rows(rows, resolution)
        forced_unknown = {(x, y) for y, row in enumerate(rows)
                          for x, ch in enumerate(row) if ch == "?"}
        for (x, y) in forced_unknown:
            truth.set(x, y, FREE)  # '?' means free ground truth, unknown map

        config = dict(doc.get("config", {}))
        feature_dim = int(config.get("feature_dim", 8))
        objects = _parse_objects(doc.get("objects", ()), truth, feature_dim)
        for obj in objects:
            for (x, y) in obj.footprint:
                truth.set(x, y, OBSTACLE)

        mask_rows = grid_doc.get("unknown")
        if mask_rows is not None:
            if isinstance(mask_rows, str):
                mask_rows = [r for r in mask_rows.splitlines() if r]
            if len(mask_rows) != truth.height or any(
                    len(r) != truth.width for r in mask_rows):
                raise ScenarioError("unknown mask shape does not match grid")
            known_cells = truth.cells.copy()
            for y, row in enumerate(mask_rows):
                for x, ch in enumerate(row):
                    if ch == "?":
                        known_cells[y, x] = UNKNOWN
        else:
            known_cells = np.full((truth.height, truth.width), UNKNOWN,
                                  dtype=np.uint8)
        for (x, y) in forced_unknown:
            known_cells[y, x] = UNKNOWN
        known0 = OccupancyGrid(truth.width, truth.height, resolution, known_cells)

        instruction = _parse_instruction_field(doc["instruction"])

        start_doc = doc["start"]
        heading = start_doc.get("heading")
        if heading is None:
            heading = math.radians(float(start_doc.get("heading_deg", 0.0)))
        start = AgentPose(
            position=(int(start_doc["x"]), int(start_doc["y"])),
            heading=float(heading),
            fov=float(start_doc.get("fov", math.pi / 2.0)),
            sense_range=float(start_doc.get("sense_range", 2.0)),
        )
        if not truth.in_bounds(*start.position):
            raise ScenarioError(f"start {start.position} out of bounds")
        if not truth.is_free(*start.position):
            raise ScenarioError(f"start cell {start.position} is not free")

        truth_target_id = str(doc["truth_target_id"])
        target = next((o for o in objects if o.id == truth_target_id), None)
        if target is None:
            raise ScenarioError(f"truth_target_id {truth_target_id!r} not among objects")
        if target.class_name != instruction.target_class:
            raise ScenarioError(
                f"target object class {target.class_name!r} does not match "
                f"instruction target {instruction.target_class!r}")

        controller = _build_controller_config(config)
        return EpisodeSpec(
            name=str(doc.get("name", name)),
            truth=truth,
            known0=known0,
            objects=objects,
            instruction=instruction,
            start=start,
            truth_target_id=truth_target_id,
            seed=int(doc.get("seed", 0)),
            delta_sim=float(config.get("delta_sim", 0.75)),
            controller=controller,
            oracle_cfg=dict(config.get("oracle", {"kind": "perfect"})),
            base_dir=base_dir,
        )
    except (KeyError, TypeError, ValueError, InputError) as exc:
        raise ScenarioError(f"invalid scenario {name!r}: {exc}") from exc


def load_scenario(path) -> EpisodeSpec:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ScenarioError(f"cannot load {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: scenario must be a mapping")
    return build_spec(doc, name=path.stem, base_dir=path.parent)


def scenario_paths(directory) -> list[Path]:
    paths = sorted(Path(directory).glob("*.yaml"))
    if not paths:
        raise ScenarioError(f"no scenario files in {directory}")
    return paths


# ---------------------------------------------------------------------------
# Oracles from configuration

def _playback_from_docs(docs) -> list[GroundingResult]:
    out = []
    for d in docs:
        out.append(GroundingResult(
            success=bool(d.get("success", False)),
            identifier=d.get("identifier"),
            keyframe_index=d.get("keyframe_index"),
            confidence=float(d.get("confidence", 1.0)),
        ))
    return out


def make_oracle(cfg: dict, seed: int, d_desired: float,
                base_dir: Optional[Path] = None) -> GroundingOracle:
    kind = cfg.get("kind", "perfect")
    if kind == "perfect":
        return PerfectOracle()
    if kind == "quality":
        return QualityDependentOracle(
            a=float(cfg.get("a", -1.0)),
            b=float(cfg.get("b", 3.0)),
            c=float(cfg.get("c", 1.0)),
            raw_weight=float(cfg.get("raw_weight", 1.5)),
            d_desired=d_desired,
            seed=seed,
        )
    if kind == "scripted":
        if "playback" in cfg:
            return ScriptedOracle(_playback_from_docs(cfg["playback"]))
        file = cfg.get("file")
        if not file:
            raise ScenarioError("scripted oracle needs playback or file")
        path = Path(file)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        try:
            docs = yaml.safe_load(path.read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ScenarioError(f"cannot load playback {path}: {exc}") from exc
        return ScriptedOracle(_playback_from_docs(docs))
    if kind == "remote":
        url = cfg.get("remote_url") or os.environ.get(ORACLE_URL_ENV)
        if not url:
            raise ScenarioError(
                f"remote oracle needs oracle.remote_url or ${ORACLE_URL_ENV}")
        return RemoteOracle(url, timeout=float(cfg.get("timeout", 10.0)))
    raise ScenarioError(f"unknown oracle kind {kind!r}")


# ---------------------------------------------------------------------------
# Metrics

def compute_dtg(final_position: Cell, footprint, resolution: float) -> float:
    """Euclidean meters from the final cell to the nearest footprint cell."""
    fx, fy = final_position
    return min(math.hypot(px - fx, py - fy) for (px, py) in footprint) * resolution


def shortest_path_length(grid: OccupancyGrid, start: Cell, footprint,
                         radius: float = 0.3) -> float:
    """Shortest traversable path from start to the goal cell near the target.

    The goal is the free cell nearest the target's footprint centroid among
    cells within ``radius`` meters of it (row-major tie-break). Objects larger
    than one cell may leave no free cell that close to the centroid; the
    qualifying set then falls back to free cells within ``radius`` of the
    footprint itself, mirroring the success rule. The path metric is
    8-connected Dijkstra with sqrt(2)-cost diagonals, matching the agent's
    motion model. Returns +inf when no goal cell is reachable.
    """
    pts = sorted(footprint)
    cx = sum(p[0] for p in pts) / len(pts)
    cy = sum(p[1] for p in pts) / len(pts)
    res = grid.resolution
    candidates = []
    fallback = []
    for y in range(grid.height):
        for x in range(grid.width):
            if grid.cells[y, x] != FREE:
                continue
            d_centroid = math.hypot(x - cx, y - cy)
            if d_centroid * res <= radius + 1e-9:
                candidates.append((d_centroid, y, x))
            d_foot = min(math.hypot(x - px, y - py) for (px, py) in pts)
            if d_foot * res <= radius + 1e-9:
                fallback.append((d_centroid, y, x))
    if not candidates:
        candidates = fallback
    if not candidates:
        return math.inf
    _, gy, gx = min(candidates)
    dist = dijkstra_field(grid, start, corner_cutting=True)
    return float(dist[gy, gx])


def episode_spl(success: bool, p: float, l: float) -> float:
    """Per-episode success weighted by path length."""
    if not success:
        return 0.0
    if math.isinf(l):
        return 0.0
    if max(p, l) == 0.0:
        return 1.0
    return l / max(p, l)


def compute_spl(results: Sequence[EpisodeResult]) -> float:
    """Mean per-episode SPL over a result set."""
    if not results:
        return 0.0
    return sum(r.spl for r in results) / len(results)


# ---------------------------------------------------------------------------
# Episode and suite runners

def run_episode(spec: EpisodeSpec, arm: str = "full",
                seed_override: Optional[int] = None,
                oracle_override: Optional[GroundingOracle] = None) -> EpisodeResult:
    """Run one scenario under one ablation arm, deterministically."""
    if arm not in ARMS:
        raise ScenarioError(f"unknown arm {arm!r}; expected one of {sorted(ARMS)}")
    seed = spec.seed if seed_override is None else seed_override
    cfg = replace(spec.controller, **ARMS[arm])
    cfg = replace(cfg, viewplan=replace(
        cfg.viewplan, ga=replace(cfg.viewplan.ga, seed=seed & 0xFFFFFFFF)))
    oracle = oracle_override if oracle_override is not None else make_oracle(
        spec.oracle_cfg, seed, cfg.viewplan.d_desired, spec.base_dir)
    store = MemoryStore(delta_sim=spec.delta_sim)
    known = spec.known0.copy()
    world = World(grid=spec.truth, objects=spec.objects)
    ctrl: ControllerResult = run_controller(
        world, known, spec.start, spec.instruction, store, cfg, oracle,
        spec.truth_target_id)
    target = next(o for o in spec.objects if o.id == spec.truth_target_id)
    dtg = compute_dtg(ctrl.final_pose.position, target.footprint,
                      spec.truth.resolution)
    l = shortest_path_length(spec.truth, spec.start.position, target.footprint,
                             radius=cfg.stop_radius)
    success = (ctrl.stop_issued and dtg <= cfg.stop_radius + 1e-9
               and ctrl.steps <= cfg.step_budget)
    spl = episode_spl(success, ctrl.path_length, l)
    return EpisodeResult(
        scenario=spec.name,
        arm=arm,
        success=success,
        steps=ctrl.steps,
        path_length=ctrl.path_length,
        shortest_length=l,
        spl=spl,
        dtg=dtg,
        phase_reached=ctrl.phase_reached,
        seed=seed,
        trace=ctrl.trace,
    )


def run_suite(paths: Sequence, arms: Sequence[str], suite_seed: int = 0,
              oracle_cfg_override: Optional[dict] = None) -> SuiteReport:
    """Run every (scenario, arm) pair with per-pair derived seeds."""
    specs = []
    for p in paths:
        spec = load_scenario(p)
        if oracle_cfg_override is not None:
            spec = replace(spec, oracle_cfg=dict(oracle_cfg_override))
        specs.append(spec)
    specs.sort(key=lambda s: s.name)
    rows: list[EpisodeResult] = []
    for spec in specs:
        seed = derive_episode_seed(suite_seed, spec.name)
        for arm in arms:
            rows.append(run_episode(spec, arm=arm, seed_override=seed))
    return SuiteReport(rows=rows, arms=list(arms))

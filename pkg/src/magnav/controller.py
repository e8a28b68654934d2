"""Episode controller: three-stage grounding over exploration and navigation.

One controller instance drives one episode. While exploring, every keyframe
triggers an initial grounding query; a hit leads to viewpoint optimization,
navigation to the optimized viewpoint and a second (active) query that must
resolve to the same memory entry. When exploration ends without a confirmed
target, a single reserved query over the sampled keyframe memory gets the
last word. Mapping is isotropic (lidar-like) within sense range while
detection is restricted to the camera field of view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from . import memory as mem
from .errors import (GroundingIntegrityError, InputError,
                     NoFeasibleViewpointError, OracleUnavailableError)
from .gridworld import (FREE, OBSTACLE, Action, AgentPose, Cell, Observation,
                        OccupancyGrid, SceneObject, compass_direction,
                        corner_points, observe, step_agent, visible_cells,
                        wrap_angle)
from .grounding import (CandidateSummary, GroundingOracle, GroundingQuery,
                        GroundingResult, Instruction, KeyframeSummary, Phase,
                        TruthChannel, ground)
from .nav import ExploreWeights, detect_frontiers, fmm_field, greedy_action, select_frontier
from .viewplan import ViewplanConfig, optimize_ga

_PHASE_ORDER = {"None": 0, "Initial": 1, "Active": 2, "Reserved": 3}


@dataclass(frozen=True)
class World:
    """Ground-truth grid plus the objects living in it."""

    grid: OccupancyGrid
    objects: tuple[SceneObject, ...]

    def by_id(self, object_id: str) -> SceneObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise InputError(f"unknown object id {object_id!r}")


@dataclass
class ControllerConfig:
    step_budget: int = 500
    stop_radius: float = 0.3        # meters, matches the success criterion
    enable_active: bool = True
    enable_reserved: bool = True
    include_raw_context: bool = True
    m_max: int = 13
    n_samples: Optional[int] = None  # defaults to m_max
    viewplan: ViewplanConfig = field(default_factory=ViewplanConfig)
    explore: ExploreWeights = field(default_factory=ExploreWeights)


@dataclass
class ControllerResult:
    p_goal: Optional[Cell]
    goal_entry_key: Optional[int]
    phase_reached: str
    stop_issued: bool
    steps: int
    path_length: float
    final_pose: AgentPose
    trace: dict


class EpisodeController:
    def __init__(self, world: World, known: OccupancyGrid, agent: AgentPose,
                 instruction: Instruction, store: mem.MemoryStore,
                 cfg: ControllerConfig, oracle: GroundingOracle,
                 truth_target_id: str):
        self.world = world
        self.known = known
        self.agent = agent
        self.instruction = instruction
        self.store = store
        self.cfg = cfg
        self.oracle = oracle
        self.truth_target_id = truth_target_id
        self.classes = {instruction.target_class, *instruction.landmark_classes}
        self.objects_by_id = {o.id: o for o in world.objects}

        self.step_count = 0
        self.path_length = 0.0
        self.stop_issued = False
        self.p_goal: Optional[Cell] = None
        self.goal_entry_key: Optional[int] = None
        self.phase_reached = "None"
        self.last_obs: Optional[Observation] = None
        self.last_entry_map: dict[int, int] = {}
        self.pending_keyframe: Optional[tuple[mem.VisualMemoryUnit,
                                              dict[int, int], Observation]] = None
        self._vis_cache: dict[Cell, list[Cell]] = {}
        # Frontier cells already stood upon: their residual unknown neighbors
        # are unobservable from there, so they never resolve and would spin
        # the selection loop forever.
        self._spent_frontiers: set[Cell] = set()
        self.trace: dict = {"actions": [], "queries": [], "viewpoints": [],
                            "events": [], "goal": None}

    # -- perception -------------------------------------------------------

    def _reveal(self) -> None:
        pos = self.agent.position
        vis = self._vis_cache.get(pos)
        if vis is None:
            vis = visible_cells(self.world.grid, pos, self.agent.sense_range)
            self._vis_cache[pos] = vis
        known = self.known.cells
        truth = self.world.grid.cells
        for (x, y) in vis:
            known[y, x] = truth[y, x]

    def observe_now(self) -> Observation:
        obs = observe(self.world.grid, self.world.objects, self.agent,
                      self.classes, self.step_count)
        self._reveal()
        entry_map, new_keys = mem.associate_and_update(self.store, obs)
        self.last_obs = obs
        self.last_entry_map = entry_map
        if mem.is_keyframe(self.store, new_keys, self.instruction.target_class):
            unit = mem.make_keyframe(self.store, obs, entry_map)
            self.pending_keyframe = (unit, entry_map, obs)
        return obs

    # -- bookkeeping ------------------------------------------------------

    def event(self, kind: str, detail: str = "") -> None:
        self.trace["events"].append(
            {"step": self.step_count, "kind": kind, "detail": detail})

    def budget_left(self) -> bool:
        return self.step_count < self.cfg.step_budget

    def execute(self, action: Action) -> bool:
        """Run one action, record it, and take the follow-up observation."""
        self.step_count += 1
        old = self.agent.position
        self.agent, blocked = step_agent(self.agent, action, self.world.grid)
        if action is Action.MOVE_FORWARD:
            if blocked:
                # Contact sensing: the cell we bumped into is occupied even
                # when no ray can reach it (e.g. behind a double-wall corner).
                dx, dy = compass_direction(self.agent.heading)
                bx, by = old[0] + dx, old[1] + dy
                if self.known.in_bounds(bx, by):
                    self.known.set(bx, by, OBSTACLE)
            else:
                dx = self.agent.position[0] - old[0]
                dy = self.agent.position[1] - old[1]
                self.path_length += math.hypot(dx, dy) * self.world.grid.resolution
        self.trace["actions"].append({
            "step": self.step_count,
            "action": action.value,
            "position": list(self.agent.position),
            "heading": self.agent.heading,
            "blocked": blocked,
        })
        if action is Action.STOP:
            self.stop_issued = True
        else:
            self.observe_now()
        return blocked

    def _bump_phase(self, phase: str) -> None:
        if _PHASE_ORDER[phase] > _PHASE_ORDER[self.phase_reached]:
            self.phase_reached = phase

    # -- queries ----------------------------------------------------------

    def _co_visible(self, raw_context) -> tuple[str, ...]:
        """Landmark classes present in the raw context (empty when ablated)."""
        if not self.cfg.include_raw_context:
            return ()
        seen = {d.class_name for d in raw_context
                if d.class_name in self.instruction.landmark_classes}
        return tuple(sorted(seen))

    def _summaries(self, detections,
                   co_visible: tuple[str, ...]) -> tuple[CandidateSummary, ...]:
        return tuple(
            CandidateSummary(
                identifier=d.identifier,
                class_name=d.class_name,
                attributes=self.objects_by_id[d.object_id].attributes,
                visible_fraction=d.visible_fraction,
                distance_m=d.distance,
                co_visible_landmarks=co_visible,
            )
            for d in detections)

    def build_query(self, obs: Observation, phase: Phase) -> GroundingQuery:
        co_visible = self._co_visible(obs.raw_context)
        annotated = self._summaries(obs.annotated, co_visible)
        raw = (self._summaries(obs.raw_context, co_visible)
               if self.cfg.include_raw_context else ())
        return GroundingQuery(phase=phase, step=obs.step,
                              instruction=self.instruction,
                              annotated=annotated, raw_context=raw)

    def _truth_for(self, obs: Observation) -> TruthChannel:
        true_det = next((d for d in obs.annotated
                         if d.object_id == self.truth_target_id), None)
        if true_det is not None:
            return TruthChannel(true_identifier=true_det.identifier,
                                quality=(true_det.visible_fraction,
                                         true_det.distance))
        same = [d for d in obs.annotated
                if d.class_name == self.instruction.target_class]
        if same:
            best = max(same, key=lambda d: d.visible_fraction)
            return TruthChannel(quality=(best.visible_fraction, best.distance))
        return TruthChannel()

    def _ask(self, query: GroundingQuery, truth: TruthChannel) -> GroundingResult:
        try:
            result = ground(self.oracle, query, truth)
        except OracleUnavailableError as exc:
            self.event("oracle_unavailable", str(exc))
            result = GroundingResult(False)
        self._bump_phase(query.phase.value)
        record = {
            "phase": query.phase.value,
            "step": query.step,
            "candidates": [{"identifier": c.identifier, "class": c.class_name}
                           for c in query.annotated],
            "result": {
                "success": result.success,
                "identifier": result.identifier,
                "keyframe_index": result.keyframe_index,
                "confidence": result.confidence,
            },
        }
        if query.phase is Phase.RESERVED:
            record["keyframes"] = len(query.keyframes)
        self.trace["queries"].append(record)
        return result

    # -- navigation -------------------------------------------------------

    def navigate_to(self, goal: Cell, *, unknown_speed: Optional[float],
                    stop_radius: float = 0.0) -> bool:
        """Greedy-descend a replanned field toward goal; True once arrived."""
        while self.budget_left():
            if self.agent.position == goal:
                return True
            try:
                dfield = fmm_field(self.known, goal, unknown_speed)
            except InputError:
                return False  # goal cell not free on the known map
            act = greedy_action(dfield, self.agent, stop_radius)
            if act is Action.STOP:
                return True
            if act is None:
                return False
            self.execute(act)
        return False

    def turn_to_face(self, target: Cell) -> None:
        """Rotate until the target bearing is near the heading (within pi/12)."""
        tx, ty = target
        while self.budget_left():
            x, y = self.agent.position
            if (tx, ty) == (x, y):
                return
            diff = wrap_angle(math.atan2(ty - y, tx - x) - self.agent.heading)
            if abs(diff) <= math.pi / 12.0 + 1e-9:
                return
            self.execute(Action.TURN_LEFT if diff >= 0 else Action.TURN_RIGHT)

    # -- grounding stages --------------------------------------------------

    def _set_goal(self, p_goal: Cell, phase: Phase, entry_key: int) -> None:
        self.p_goal = p_goal
        self.goal_entry_key = entry_key
        self.trace["goal"] = {"step": self.step_count, "phase": phase.value,
                              "entry_key": entry_key, "p_goal": list(p_goal)}
        self.event("goal_set", f"{phase.value} entry={entry_key} at {p_goal}")

    def grounding_cascade(self, unit: mem.VisualMemoryUnit,
                          entry_map: dict[int, int], obs: Observation) -> None:
        result = self._ask(self.build_query(obs, Phase.INITIAL),
                           self._truth_for(obs))
        if not result.success:
            return
        if result.identifier not in entry_map:
            self.event("invalid_identifier",
                       f"initial grounding named {result.identifier}")
            return
        initial_key = entry_map[result.identifier]
        self.trace["queries"][-1]["entry_key"] = initial_key
        entry = self.store.objects[initial_key]
        p_obj = entry.centroid()
        if not self.cfg.enable_active:
            self._set_goal(p_obj, Phase.INITIAL, initial_key)
            return
        target_corners = corner_points(entry.points)
        obs2 = entry_map2 = None
        # The viewpoint is planned on the partial map; if the spot turns out
        # blind (an unseen obstacle blocked the view), replan once with
        # whatever the approach revealed.
        for attempt in range(2):
            try:
                p_view, score = optimize_ga(self.known, target_corners,
                                            self.cfg.viewplan)
            except NoFeasibleViewpointError as exc:
                self.event("no_feasible_viewpoint", str(exc))
                return
            self.trace["viewpoints"].append({
                "step": self.step_count, "entry_key": initial_key,
                "p_obj": list(p_obj), "p_view": list(p_view),
                "total": score.total,
            })
            if not self.navigate_to(p_view, unknown_speed=None):
                self.event("viewpoint_unreachable", f"p_view={p_view}")
                return
            self.turn_to_face(p_obj)
            if not self.budget_left():
                return
            obs2, entry_map2 = self.last_obs, self.last_entry_map
            if obs2.annotated:
                break
            self.event("active_view_empty", f"from {self.agent.position}")
        if not obs2 or not obs2.annotated:
            return
        result2 = self._ask(self.build_query(obs2, Phase.ACTIVE),
                            self._truth_for(obs2))
        if not result2.success:
            self.event("active_rejected", f"entry={initial_key}")
            return
        key2 = entry_map2.get(result2.identifier)
        if key2 is None:
            self.event("invalid_identifier",
                       f"active grounding named {result2.identifier}")
            return
        self.trace["queries"][-1]["entry_key"] = key2
        if key2 != initial_key:
            self.event("active_mismatch", f"initial={initial_key} active={key2}")
            return
        self._set_goal(self.store.objects[initial_key].centroid(),
                       Phase.ACTIVE, initial_key)

    def reserved_phase(self) -> None:
        n = self.cfg.n_samples or self.cfg.m_max
        units = mem.sample_keyframes(self.store, n)
        if not units:
            self.event("reserved_empty_memory")
            return
        keyframes = []
        pairs = []  # (visible_fraction, number, identifier, distance)
        for number, unit in enumerate(units, start=1):
            co_visible = self._co_visible(unit.raw_context)
            candidates = self._summaries(unit.annotated, co_visible)
            raw = (self._summaries(unit.raw_context, co_visible)
                   if self.cfg.include_raw_context else ())
            keyframes.append(KeyframeSummary(number=number, step=unit.step,
                                             candidates=candidates,
                                             raw_context=raw))
            for d in unit.annotated:
                if d.object_id == self.truth_target_id:
                    pairs.append((d.visible_fraction, number, d.identifier,
                                  d.distance))
        pairs.sort(key=lambda p: (-p[0], p[1]))
        if pairs:
            truth = TruthChannel(
                keyframe_pairs=tuple((n_, i_) for _, n_, i_, _ in pairs),
                quality=(pairs[0][0], pairs[0][3]))
        else:
            best = None
            for unit in units:
                for d in unit.annotated:
                    if (d.class_name == self.instruction.target_class
                            and (best is None or d.visible_fraction > best[0])):
                        best = (d.visible_fraction, d.distance)
            truth = TruthChannel(quality=best)
        query = GroundingQuery(phase=Phase.RESERVED, step=self.step_count,
                               instruction=self.instruction,
                               keyframes=tuple(keyframes))
        result = self._ask(query, truth)
        if not result.success:
            return
        j = result.keyframe_index
        if j is None or not (1 <= j <= len(units)):
            self.event("reserved_invalid", f"keyframe_index={j}")
            return
        unit = units[j - 1]
        try:
            p_goal = mem.index_position(unit, result.identifier, self.store)
        except GroundingIntegrityError as exc:
            self.event("reserved_invalid", str(exc))
            return
        self._set_goal(p_goal, Phase.RESERVED,
                       unit.entry_keys[result.identifier])

    # -- final approach ----------------------------------------------------

    def _believed_distance(self) -> float:
        points = self.store.objects[self.goal_entry_key].points
        x, y = self.agent.position
        return min(math.hypot(px - x, py - y) for (px, py) in points) \
            * self.world.grid.resolution

    def _nearest_free_to_goal(self) -> Optional[Cell]:
        points = sorted(self.store.objects[self.goal_entry_key].points)
        known = self.known.cells
        best = None
        best_d = math.inf
        for y in range(self.known.height):
            for x in range(self.known.width):
                if known[y, x] != FREE:
                    continue
                d = min(math.hypot(px - x, py - y) for (px, py) in points)
                if d < best_d:
                    best_d = d
                    best = (x, y)
        return best

    def final_approach(self) -> None:
        goal_cell = self._nearest_free_to_goal()
        if goal_cell is None:
            self.event("final_unreachable", "no free cell near goal")
            return
        while self.budget_left():
            if self._believed_distance() <= self.cfg.stop_radius:
                self.execute(Action.STOP)
                return
            if self.agent.position == goal_cell:
                # As close as the map allows; declare arrival.
                self.execute(Action.STOP)
                return
            try:
                dfield = fmm_field(self.known, goal_cell, 0.5)
            except InputError:
                self.event("final_unreachable", f"goal cell {goal_cell}")
                return
            act = greedy_action(dfield, self.agent, 0.0)
            if act is None:
                self.event("final_unreachable", f"no progress to {goal_cell}")
                return
            if act is Action.STOP:
                self.execute(Action.STOP)
                return
            self.execute(act)
        self.event("budget_exhausted", "during final approach")

    # -- main loop ---------------------------------------------------------

    def run(self) -> ControllerResult:
        self.observe_now()
        while self.budget_left() and self.p_goal is None:
            pending = self.pending_keyframe
            self.pending_keyframe = None
            if pending is not None:
                self.grounding_cascade(*pending)
                continue
            frontiers = [f for f in detect_frontiers(self.known)
                         if f.cell not in self._spent_frontiers]
            if not frontiers:
                self.event("exploration_complete", "no frontiers remain")
                break
            landmark_centroids = [
                e.centroid() for _, e in sorted(self.store.objects.items())
                if e.class_name in self.instruction.landmark_classes
            ]
            agent_field = fmm_field(self.known, self.agent.position, 0.5)
            frontier = select_frontier(frontiers, landmark_centroids,
                                       agent_field, self.cfg.explore)
            if frontier is None:
                self.event("exploration_complete", "no reachable frontier")
                break
            goal_field = fmm_field(self.known, frontier.cell, 0.5)
            act = greedy_action(goal_field, self.agent, 0.0)
            if act is None or act is Action.STOP:
                # Arrived (or cannot progress): whatever stays unknown around
                # this frontier is not observable from it; retire the cell.
                self._spent_frontiers.add(frontier.cell)
                continue
            self.execute(act)
        if self.p_goal is None and not self.budget_left():
            self.event("budget_exhausted", "during exploration")
        if self.p_goal is None and self.cfg.enable_reserved:
            self.reserved_phase()
        if self.p_goal is not None:
            self.final_approach()
        self.trace["memory"] = mem.dump(self.store)
        self.trace["phase_reached"] = self.phase_reached
        return ControllerResult(
            p_goal=self.p_goal,
            goal_entry_key=self.goal_entry_key,
            phase_reached=self.phase_reached,
            stop_issued=self.stop_issued,
            steps=self.step_count,
            path_length=self.path_length,
            final_pose=self.agent,
            trace=self.trace,
        )


def run_controller(world: World, known: OccupancyGrid, agent: AgentPose,
                   instruction: Instruction, store: mem.MemoryStore,
                   cfg: ControllerConfig, oracle: GroundingOracle,
                   truth_target_id: str) -> ControllerResult:
    """Run one episode start to finish (wrapper around EpisodeController)."""
    return EpisodeController(world, known, agent, instruction, store, cfg,
                             oracle, truth_target_id).run()


def reserved_grounding(store: mem.MemoryStore, instruction: Instruction,
                       oracle: GroundingOracle, n_samples: int,
                       truth_pairs: tuple[tuple[int, int], ...] = (),
                       quality: Optional[tuple[float, float]] = None,
                       step: int = 0) -> Optional[Cell]:
    """Standalone reserved grounding over a memory store.

    Samples keyframes, numbers them from 1, issues one reserved query and maps
    a successful (keyframe, identifier) answer to the entry centroid. Returns
    None on empty memory or an unsuccessful/invalid answer.
    """
    units = mem.sample_keyframes(store, n_samples)
    if not units:
        return None
    keyframes = tuple(
        KeyframeSummary(
            number=number,
            step=unit.step,
            candidates=tuple(
                CandidateSummary(identifier=d.identifier,
                                 class_name=d.class_name,
                                 attributes=(),
                                 visible_fraction=d.visible_fraction,
                                 distance_m=d.distance)
                for d in unit.annotated),
        )
        for number, unit in enumerate(units, start=1))
    query = GroundingQuery(phase=Phase.RESERVED, step=step,
                           instruction=instruction, keyframes=keyframes)
    result = ground(oracle, query, TruthChannel(keyframe_pairs=truth_pairs,
                                                quality=quality))
    if not result.success:
        return None
    j = result.keyframe_index
    if j is None or not (1 <= j <= len(units)):
        raise GroundingIntegrityError(f"reserved answer keyframe {j} out of range")
    return mem.index_position(units[j - 1], result.identifier, store)

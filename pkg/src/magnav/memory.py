"""Incremental object memory and keyframe visual memory.

Object memory accumulates per-object point sets and descriptor vectors across
observations; detections are associated to existing entries by a combined
visual/spatial similarity against a threshold. Visual memory stores keyframes:
observations that introduced a new target-class object, together with the
mapping from annotated identifiers to object-memory keys.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import GroundingIntegrityError, InputError
from .gridworld import AgentPose, Cell, Detection, Observation


@dataclass(eq=False)
class ObjectMemoryEntry:
    """One remembered object instance."""

    key: int
    class_name: str
    points: set[Cell]
    feature: np.ndarray          # unit norm, running mean of observed features
    observations: int
    last_seen_step: int
    feature_sum: np.ndarray = None  # unnormalized accumulator behind `feature`

    def __post_init__(self):
        if not self.points:
            raise InputError(f"memory entry {self.key} has no points")
        if self.feature_sum is None:
            self.feature_sum = np.array(self.feature, dtype=float)

    def centroid(self) -> Cell:
        return centroid_cell(self.points)


@dataclass(eq=False)
class VisualMemoryUnit:
    """A keyframe: the observation plus identifier-to-entry mapping."""

    step: int
    pose: AgentPose
    annotated: tuple[Detection, ...]
    raw_context: tuple[Detection, ...]
    entry_keys: dict[int, int]  # identifier -> ObjectMemoryEntry.key

    def __post_init__(self):
        for det in self.annotated:
            if det.identifier not in self.entry_keys:
                raise InputError(
                    f"keyframe at step {self.step}: identifier {det.identifier} "
                    f"has no entry mapping")


@dataclass(eq=False)
class MemoryStore:
    """Object entries plus ordered keyframes and the association threshold."""

    delta_sim: float = 0.75
    feature_weight: float = 0.5
    spatial_weight: float = 0.5
    objects: dict[int, ObjectMemoryEntry] = field(default_factory=dict)
    keyframes: list[VisualMemoryUnit] = field(default_factory=list)
    _next_key: int = 0

    def __post_init__(self):
        if not (0.0 < self.delta_sim < 1.0):
            raise InputError(f"delta_sim must be in (0,1), got {self.delta_sim}")

    def new_key(self) -> int:
        k = self._next_key
        self._next_key += 1
        return k

    def add_keyframe(self, unit: VisualMemoryUnit) -> None:
        if self.keyframes and unit.step <= self.keyframes[-1].step:
            raise InputError(
                f"keyframe steps must strictly increase "
                f"({unit.step} after {self.keyframes[-1].step})")
        self.keyframes.append(unit)


def centroid_cell(points: Iterable[Cell]) -> Cell:
    """Arithmetic centroid of a point set, rounded half-up per axis."""
    pts = list(points)
    if not pts:
        raise InputError("empty point set")
    mx = sum(p[0] for p in pts) / len(pts)
    my = sum(p[1] for p in pts) / len(pts)
    return int(math.floor(mx + 0.5)), int(math.floor(my + 0.5))


def _dilate(points: Iterable[Cell]) -> set[Cell]:
    """Grow a point set by one cell in the 8-neighborhood (cells kept)."""
    out: set[Cell] = set()
    for (x, y) in points:
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                out.add((x + dx, y + dy))
    return out


def spatial_similarity(points_a: Iterable[Cell], points_b: Iterable[Cell]) -> float:
    """Jaccard overlap of the 1-cell-dilated point sets; symmetric, in [0,1]."""
    a = _dilate(points_a)
    b = _dilate(points_b)
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def combined_similarity(entry: ObjectMemoryEntry, points: Iterable[Cell],
                        feature: np.ndarray, *, feature_weight: float = 0.5,
                        spatial_weight: float = 0.5) -> float:
    """Weighted sum of clamped feature cosine and spatial Jaccard overlap."""
    fa = np.asarray(entry.feature, dtype=float)
    fb = np.asarray(feature, dtype=float)
    na = float(np.linalg.norm(fa))
    nb = float(np.linalg.norm(fb))
    if na < 1e-12 or nb < 1e-12:
        raise InputError("zero-norm feature in similarity computation")
    cos = float(np.dot(fa, fb) / (na * nb))
    return feature_weight * max(0.0, cos) + spatial_weight * spatial_similarity(
        entry.points, points)


def associate_and_update(store: MemoryStore, obs: Observation
                         ) -> tuple[dict[int, int], set[int]]:
    """Merge the observation's annotated detections into object memory.

    Each detection is compared against the entries of its own class that
    existed before this call; it merges into the best-scoring entry when the
    score reaches ``delta_sim`` (ties broken by lowest key) and becomes a new
    entry otherwise. Returns (identifier -> entry key, keys of new entries).
    """
    snapshot = {cls: sorted(k for k, e in store.objects.items() if e.class_name == cls)
                for cls in {d.class_name for d in obs.annotated}}
    entry_map: dict[int, int] = {}
    new_keys: set[int] = set()
    for det in sorted(obs.annotated, key=lambda d: d.identifier):
        best_key: Optional[int] = None
        best_score = -1.0
        for key in snapshot.get(det.class_name, ()):
            score = combined_similarity(
                store.objects[key], det.visible_points, det.feature,
                feature_weight=store.feature_weight,
                spatial_weight=store.spatial_weight)
            if score > best_score:  # ascending key order: lowest key wins ties
                best_score = score
                best_key = key
        if best_key is not None and best_score >= store.delta_sim:
            entry = store.objects[best_key]
            entry.points.update(det.visible_points)
            entry.feature_sum = entry.feature_sum + np.asarray(det.feature, dtype=float)
            norm = float(np.linalg.norm(entry.feature_sum))
            if norm > 1e-12:
                entry.feature = entry.feature_sum / norm
            entry.observations += 1
            entry.last_seen_step = obs.step
            entry_map[det.identifier] = best_key
        else:
            key = store.new_key()
            store.objects[key] = ObjectMemoryEntry(
                key=key,
                class_name=det.class_name,
                points=set(det.visible_points),
                feature=np.array(det.feature, dtype=float),
                observations=1,
                last_seen_step=obs.step,
            )
            new_keys.add(key)
            entry_map[det.identifier] = key
    return entry_map, new_keys


def is_keyframe(store: MemoryStore, new_keys: set[int], target_class: str) -> bool:
    """A frame is a keyframe iff it introduced a new target-class entry."""
    return any(store.objects[k].class_name == target_class for k in new_keys)


def make_keyframe(store: MemoryStore, obs: Observation,
                  entry_map: dict[int, int]) -> VisualMemoryUnit:
    """Append the observation to visual memory and return the stored unit."""
    unit = VisualMemoryUnit(
        step=obs.step,
        pose=obs.pose,
        annotated=obs.annotated,
        raw_context=obs.raw_context,
        entry_keys={d.identifier: entry_map[d.identifier] for d in obs.annotated},
    )
    store.add_keyframe(unit)
    return unit


def sample_keyframes(store: MemoryStore, m_max: int) -> list[VisualMemoryUnit]:
    """Uniformly sample up to ``m_max`` keyframes by acquisition order.

    Returns all keyframes when the buffer fits; otherwise the keyframes at
    indices round(i*(n-1)/(m_max-1)) for i in 0..m_max-1 (half-up rounding),
    which always keeps the first and the last one.
    """
    if m_max < 1:
        raise InputError(f"m_max must be >= 1, got {m_max}")
    frames = store.keyframes
    n = len(frames)
    if n <= m_max:
        return list(frames)
    if m_max == 1:
        return [frames[0]]
    idx = [int(math.floor(i * (n - 1) / (m_max - 1) + 0.5)) for i in range(m_max)]
    return [frames[i] for i in idx]


def index_position(unit: VisualMemoryUnit, identifier: int,
                   store: MemoryStore) -> Cell:
    """Spatial position (centroid cell) of the entry an identifier maps to."""
    if not any(d.identifier == identifier for d in unit.annotated):
        raise GroundingIntegrityError(
            f"identifier {identifier} not annotated in keyframe at step {unit.step}")
    key = unit.entry_keys[identifier]
    entry = store.objects.get(key)
    if entry is None:
        raise RuntimeError(f"keyframe entry key {key} is dangling")
    return entry.centroid()


def dump(store: MemoryStore) -> dict:
    """Debug/fixture dump: one record per entry and per keyframe."""
    return {
        "objects": [
            {
                "key": e.key,
                "class": e.class_name,
                "centroid": list(e.centroid()),
                "observations": e.observations,
            }
            for e in sorted(store.objects.values(), key=lambda e: e.key)
        ],
        "keyframes": [
            {
                "step": kf.step,
                "pose": {
                    "x": kf.pose.position[0],
                    "y": kf.pose.position[1],
                    "heading": kf.pose.heading,
                },
                "identifiers": [d.identifier for d in kf.annotated],
            }
            for kf in store.keyframes
        ],
    }

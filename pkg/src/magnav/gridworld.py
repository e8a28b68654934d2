"""Ground-truth world model, agent kinematics and synthetic egocentric perception.

The world is a 2D cell lattice with a metric resolution. Perception is a
detection channel: instead of rendering images, an observation reports which
objects have at least one bounding-box corner that is in range, inside the
camera's field of view and not occluded. All functions here are pure and
deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InputError

# Cell states.
FREE = 0
OBSTACLE = 1
UNKNOWN = 2

_STATE_CHARS = {".": FREE, "#": OBSTACLE, "?": UNKNOWN}

Cell = tuple[int, int]


class OccupancyGrid:
    """Free/obstacle/unknown cell lattice with a metric resolution.

    Cells are indexed ``(x, y)`` with ``0 <= x < width`` and ``0 <= y < height``;
    storage is a ``(height, width)`` uint8 array so ``cells[y, x]`` is the state.
    """

    __slots__ = ("width", "height", "resolution", "cells")

    def __init__(self, width: int, height: int, resolution: float,
                 cells: Optional[np.ndarray] = None):
        if width <= 0 or height <= 0:
            raise InputError(f"grid dimensions must be positive, got {width}x{height}")
        if resolution <= 0:
            raise InputError(f"resolution must be positive, got {resolution}")
        self.width = int(width)
        self.height = int(height)
        self.resolution = float(resolution)
        if cells is None:
            self.cells = np.full((self.height, self.width), FREE, dtype=np.uint8)
        else:
            cells = np.asarray(cells, dtype=np.uint8)
            if cells.shape != (self.height, self.width):
                raise InputError(
                    f"cells shape {cells.shape} does not match {height}x{width}")
            self.cells = cells.copy()

    @classmethod
    def from_rows(cls, rows: Sequence[str], resolution: float) -> "OccupancyGrid":
        """Build a grid from row strings ('.' free, '#' obstacle, '?' unknown).

        ``rows[0]`` is the y=0 row; all rows must have equal length.
        """
        if not rows:
            raise InputError("empty row list")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise InputError("ragged rows in grid definition")
        cells = np.zeros((len(rows), width), dtype=np.uint8)
        for y, row in enumerate(rows):
            for x, ch in enumerate(row):
                try:
                    cells[y, x] = _STATE_CHARS[ch]
                except KeyError:
                    raise InputError(f"unknown grid character {ch!r} at ({x},{y})")
        return cls(width, len(rows), resolution, cells)

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def get(self, x: int, y: int) -> int:
        if not self.in_bounds(x, y):
            raise InputError(f"cell ({x},{y}) out of bounds")
        return int(self.cells[y, x])

    def set(self, x: int, y: int, state: int) -> None:
        if not self.in_bounds(x, y):
            raise InputError(f"cell ({x},{y}) out of bounds")
        self.cells[y, x] = state

    def is_free(self, x: int, y: int) -> bool:
        return self.get(x, y) == FREE

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.width, self.height, self.resolution, self.cells)

    def rows(self) -> list[str]:
        """Inverse of ``from_rows`` (for debugging and fixtures)."""
        chars = {FREE: ".", OBSTACLE: "#", UNKNOWN: "?"}
        return ["".join(chars[int(v)] for v in self.cells[y]) for y in range(self.height)]

    def __eq__(self, other):
        return (isinstance(other, OccupancyGrid)
                and self.width == other.width and self.height == other.height
                and self.resolution == other.resolution
                and np.array_equal(self.cells, other.cells))


class Action(Enum):
    MOVE_FORWARD = "MOVE_FORWARD"
    TURN_LEFT = "TURN_LEFT"
    TURN_RIGHT = "TURN_RIGHT"
    STOP = "STOP"


TURN_INCREMENT = math.pi / 6.0

# Eight compass directions, index k covers headings near k*pi/4.
DIR8: tuple[Cell, ...] = (
    (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1),
)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a > math.pi:
        a -= 2.0 * math.pi
    elif a <= -math.pi:
        a += 2.0 * math.pi
    return a


def normalize_heading(a: float) -> float:
    """Wrap to [0, 2*pi)."""
    a = math.fmod(a, 2.0 * math.pi)
    return a + 2.0 * math.pi if a < 0 else a


def compass_direction(heading: float) -> Cell:
    """Nearest of the 8 compass directions to a heading."""
    k = int(math.floor(heading / (math.pi / 4.0) + 0.5)) % 8
    return DIR8[k]


@dataclass(frozen=True)
class AgentPose:
    """Agent position (cell), heading and camera intrinsics."""

    position: Cell
    heading: float
    fov: float = math.pi / 2.0
    sense_range: float = 2.0  # meters

    def __post_init__(self):
        if not (0.0 < self.fov < 2.0 * math.pi):
            raise InputError(f"fov must be in (0, 2*pi), got {self.fov}")
        object.__setattr__(self, "heading", normalize_heading(self.heading))


@dataclass(frozen=True, eq=False)
class SceneObject:
    """Ground-truth object: a footprint of cells plus a synthetic descriptor."""

    id: str
    class_name: str
    attributes: tuple[str, ...]
    feature: np.ndarray
    footprint: frozenset[Cell]

    def __post_init__(self):
        if not self.footprint:
            raise InputError(f"object {self.id!r} has an empty footprint")
        norm = float(np.linalg.norm(self.feature))
        if abs(norm - 1.0) > 1e-6:
            raise InputError(f"object {self.id!r} feature norm {norm} != 1")


@dataclass(frozen=True, eq=False)
class Detection:
    """One detected object in an observation.

    ``visible_points`` and ``feature`` are what the segmentation/descriptor
    stage of a real detector would emit per box: the observed boundary cells
    and the unit descriptor vector.
    """

    object_id: str
    class_name: str
    identifier: int
    visible_fraction: float
    distance: float  # meters, to the nearest visible boundary point
    bearing: float   # radians relative to heading, in (-pi, pi]
    visible_points: tuple[Cell, ...]
    feature: np.ndarray


@dataclass(frozen=True, eq=False)
class Observation:
    """Detections from one pose: annotated (instruction classes) plus raw context."""

    step: int
    pose: AgentPose
    annotated: tuple[Detection, ...]
    raw_context: tuple[Detection, ...]


def supercover_line(x0: int, y0: int, x1: int, y1: int) -> list[Cell]:
    """All cells the segment between two cell centers touches, in traversal order.

    Conservative (supercover) traversal: when the segment passes exactly
    through a cell corner, all four incident cells are included.
    """
    cells: list[Cell] = [(x0, y0)]
    dx = x1 - x0
    dy = y1 - y0
    xstep = 1 if dx > 0 else -1
    ystep = 1 if dy > 0 else -1
    dx = abs(dx)
    dy = abs(dy)
    ddx = 2 * dx
    ddy = 2 * dy
    x, y = x0, y0
    if ddx >= ddy:
        errorprev = error = dx
        for _ in range(dx):
            x += xstep
            error += ddy
            if error > ddx:
                y += ystep
                error -= ddx
                if error + errorprev < ddx:
                    cells.append((x, y - ystep))
                elif error + errorprev > ddx:
                    cells.append((x - xstep, y))
                else:  # exactly through the corner
                    cells.append((x, y - ystep))
                    cells.append((x - xstep, y))
            cells.append((x, y))
            errorprev = error
    else:
        errorprev = error = dy
        for _ in range(dy):
            y += ystep
            error += ddx
            if error > ddy:
                x += xstep
                error -= ddy
                if error + errorprev < ddy:
                    cells.append((x - xstep, y))
                elif error + errorprev > ddy:
                    cells.append((x, y - ystep))
                else:
                    cells.append((x - xstep, y))
                    cells.append((x, y - ystep))
            cells.append((x, y))
            errorprev = error
    return cells


def raycast_los(grid: OccupancyGrid, a: Cell, b: Cell) -> bool:
    """Line of sight between two cells.

    True iff no strictly intermediate cell on the supercover line is an
    obstacle. Endpoints never block; unknown cells are transparent.
    """
    ax, ay = a
    bx, by = b
    if not grid.in_bounds(ax, ay):
        raise InputError(f"cell {a} out of bounds")
    if not grid.in_bounds(bx, by):
        raise InputError(f"cell {b} out of bounds")
    cells = grid.cells
    for (cx, cy) in supercover_line(ax, ay, bx, by):
        if (cx, cy) == a or (cx, cy) == b:
            continue
        if cells[cy, cx] == OBSTACLE:
            return False
    return True


def corner_points(points: Iterable[Cell]) -> list[Cell]:
    """The four axis-aligned bounding-box corners of a nonempty point set.

    Always four entries (duplicates permitted), in the order
    (min_x,min_y), (max_x,min_y), (min_x,max_y), (max_x,max_y).
    """
    pts = list(points)
    if not pts:
        raise InputError("empty point set")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    return [(x0, y0), (x1, y0), (x0, y1), (x1, y1)]


def boundary_points(obj: SceneObject) -> list[Cell]:
    """The four bounding-box corners of an object's footprint."""
    return corner_points(obj.footprint)


def footprint_boundary_cells(obj: SceneObject) -> list[Cell]:
    """Footprint cells on the object's outline (all of them for thin objects).

    These are what perception accumulates into object memory, the 2D stand-in
    for the surface point cloud a segmentation mask would yield.
    """
    cells = obj.footprint
    out = [c for c in cells
           if not all((c[0] + dx, c[1] + dy) in cells
                      for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)))]
    return sorted(out)


def visible_cells(grid: OccupancyGrid, origin: Cell, sense_range: float) -> list[Cell]:
    """All in-bounds cells within metric range of origin with line of sight.

    Heading-independent; callers apply their own field-of-view filter. The
    origin itself is included.
    """
    ox, oy = origin
    r_cells = sense_range / grid.resolution
    r_int = int(math.floor(r_cells))
    r2 = r_cells * r_cells
    out: list[Cell] = []
    for y in range(max(0, oy - r_int), min(grid.height, oy + r_int + 1)):
        dy2 = (y - oy) * (y - oy)
        for x in range(max(0, ox - r_int), min(grid.width, ox + r_int + 1)):
            if (x - ox) * (x - ox) + dy2 <= r2 and raycast_los(grid, origin, (x, y)):
                out.append((x, y))
    return out


def _point_visible(grid: OccupancyGrid, pose: AgentPose, g: Cell) -> tuple[bool, float, float]:
    """Visibility of one boundary point: (visible, distance_m, bearing)."""
    px, py = pose.position
    gx, gy = g
    dx = gx - px
    dy = gy - py
    dist = math.hypot(dx, dy) * grid.resolution
    if dist > pose.sense_range:
        return False, dist, 0.0
    bearing = wrap_angle(math.atan2(dy, dx) - pose.heading) if (dx or dy) else 0.0
    if abs(bearing) > pose.fov / 2.0:
        return False, dist, bearing
    if not raycast_los(grid, pose.position, g):
        return False, dist, bearing
    return True, dist, bearing


def observe(grid: OccupancyGrid, objects: Sequence[SceneObject], agent: AgentPose,
            instruction_classes: Iterable[str], step: int) -> Observation:
    """Synthetic egocentric observation.

    An object is detected iff at least one of its four boundary points is in
    sense range, inside the field of view and unoccluded. Identifiers are
    assigned in increasing bearing order: 1..N over instruction-class
    (annotated) detections first, then N+1.. over the remaining context
    detections, so annotated identifiers are always exactly {1..N}.
    """
    if not grid.is_free(*agent.position):
        raise InputError(f"agent cell {agent.position} is not free")
    classes = set(instruction_classes)
    annotated_raw: list[tuple[float, str, SceneObject, list[Cell], float, float]] = []
    context_raw: list[tuple[float, str, SceneObject, list[Cell], float, float]] = []
    for obj in objects:
        corners = boundary_points(obj)
        vis_corners: list[Cell] = []
        best: Optional[tuple[float, float]] = None  # (distance, bearing)
        for g in corners:
            ok, dist, bearing = _point_visible(grid, agent, g)
            if ok:
                vis_corners.append(g)
                if best is None or dist < best[0]:
                    best = (dist, bearing)
        if not vis_corners:
            continue
        dist, bearing = best
        # Observed surface for memory: visible outline cells of the footprint
        # (falls back to the visible corners for degenerate shapes).
        vis_cells = [c for c in footprint_boundary_cells(obj)
                     if _point_visible(grid, agent, c)[0]]
        if not vis_cells:
            vis_cells = vis_corners
        entry = (bearing, obj.id, obj, vis_cells, len(vis_corners) / 4.0, dist)
        if obj.class_name in classes:
            annotated_raw.append(entry)
        else:
            context_raw.append(entry)
    annotated_raw.sort(key=lambda e: (e[0], e[1]))
    context_raw.sort(key=lambda e: (e[0], e[1]))

    detections: list[Detection] = []
    for ident, (bearing, _oid, obj, vis, frac, dist) in enumerate(
            annotated_raw + context_raw, start=1):
        detections.append(Detection(
            object_id=obj.id,
            class_name=obj.class_name,
            identifier=ident,
            visible_fraction=frac,
            distance=dist,
            bearing=bearing,
            visible_points=tuple(vis),
            feature=obj.feature,
        ))
    n_annot = len(annotated_raw)
    return Observation(
        step=step,
        pose=agent,
        annotated=tuple(detections[:n_annot]),
        raw_context=tuple(detections),
    )


def step_agent(agent: AgentPose, action: Action, grid: OccupancyGrid
               ) -> tuple[AgentPose, bool]:
    """Apply one discrete action; returns (new pose, blocked flag).

    MOVE_FORWARD advances one cell along the compass direction nearest to the
    heading when that cell is free, and is a silent no-op (blocked=True)
    otherwise. Turns rotate by pi/6. STOP leaves the pose unchanged.
    """
    if action is Action.MOVE_FORWARD:
        dx, dy = compass_direction(agent.heading)
        x, y = agent.position
        nx, ny = x + dx, y + dy
        if grid.in_bounds(nx, ny) and grid.is_free(nx, ny):
            return AgentPose((nx, ny), agent.heading, agent.fov, agent.sense_range), False
        return agent, True
    if action is Action.TURN_LEFT:
        return AgentPose(agent.position, normalize_heading(agent.heading + TURN_INCREMENT),
                         agent.fov, agent.sense_range), False
    if action is Action.TURN_RIGHT:
        return AgentPose(agent.position, normalize_heading(agent.heading - TURN_INCREMENT),
                         agent.fov, agent.sense_range), False
    if action is Action.STOP:
        return agent, False
    raise InputError(f"unknown action {action!r}")

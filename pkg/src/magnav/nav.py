"""Distance fields, greedy action policy and frontier exploration.

The geodesic field is a first-order upwind Eikonal solve (fast marching) on
the 4-neighbor stencil: unit speed on free cells, configurable reduced speed
on unknown cells, obstacles impassable. The greedy policy descends the field
one 8-neighbor at a time; frontiers are known-free cells adjacent to unknown
space, scored by landmark proximity, information gain and travel cost.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InputError
from .gridworld import (FREE, UNKNOWN, Action, AgentPose, Cell, OccupancyGrid,
                        compass_direction, supercover_line, wrap_angle)

INF = math.inf

# 8-neighborhood in row-major order (used for tie-breaking).
_NEIGHBORS8 = [(dx, dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1)
               if (dx, dy) != (0, 0)]

# Radius (cells) of the exact-distance initialization around an FMM source.
_EXACT_INIT_RADIUS = 4


@dataclass(eq=False)
class DistanceField:
    """Geodesic distance to a goal, in meters; +inf where unreachable."""

    goal: Cell
    resolution: float
    values: np.ndarray  # (height, width) float64

    def at(self, cell: Cell) -> float:
        x, y = cell
        return float(self.values[y, x])


def fmm_field(known_grid: OccupancyGrid, goal: Cell,
              unknown_speed: Optional[float] = 0.5) -> DistanceField:
    """Fast-marching distance field from every cell to the goal.

    Solves |grad d| = 1/speed with d(goal) = 0 using the standard two-axis
    quadratic upwind update on the 4-neighbor stencil. Free cells have unit
    speed; unknown cells move at ``unknown_speed`` (``None`` makes them
    impassable, as required when a fully known path is wanted); obstacle
    cells are always impassable.
    """
    gx, gy = goal
    if not known_grid.in_bounds(gx, gy):
        raise InputError(f"goal {goal} out of bounds")
    state = known_grid.cells
    if state[gy, gx] != FREE:
        raise InputError(f"goal {goal} is not a free cell")
    h, w = state.shape
    res = known_grid.resolution
    n = w * h

    # Flat row-major buffers: this solve runs every step of every episode,
    # and plain lists beat per-element numpy indexing several times over.
    buf = state.tobytes()
    unknown_cost = res / unknown_speed if unknown_speed else INF
    cost = [res if v == FREE else (unknown_cost if v == UNKNOWN else INF)
            for v in buf]
    dist = [INF] * n
    done = bytearray(n)
    goal_idx = gy * w + gx
    dist[goal_idx] = 0.0
    heap: list[tuple[float, int]] = [(0.0, goal_idx)]
    # Exact initialization near the point source: the upwind stencil has its
    # largest truncation error at the singularity, so free cells a few steps
    # out whose straight ray to the goal crosses only free cells start from
    # the true Euclidean distance instead of a marched estimate.
    r0 = _EXACT_INIT_RADIUS
    for ny in range(max(0, gy - r0), min(h, gy + r0 + 1)):
        for nx in range(max(0, gx - r0), min(w, gx + r0 + 1)):
            if (nx, ny) == (gx, gy) or buf[ny * w + nx] != FREE:
                continue
            d2 = (nx - gx) ** 2 + (ny - gy) ** 2
            if d2 > r0 * r0:
                continue
            if all(buf[cy * w + cx] == FREE
                   for (cx, cy) in supercover_line(gx, gy, nx, ny)):
                d = math.sqrt(d2) * res
                dist[ny * w + nx] = d
                heapq.heappush(heap, (d, ny * w + nx))
    push = heapq.heappush
    pop = heapq.heappop
    sqrt = math.sqrt
    while heap:
        d, idx = pop(heap)
        if done[idx]:
            continue
        done[idx] = 1
        x = idx % w
        for nidx, nx in ((idx + 1, x + 1), (idx - 1, x - 1),
                         (idx + w, x), (idx - w, x)):
            if nx < 0 or nx >= w or nidx < 0 or nidx >= n or done[nidx]:
                continue
            f = cost[nidx]
            if f == INF:
                continue
            a = min(dist[nidx - 1] if nx > 0 else INF,
                    dist[nidx + 1] if nx + 1 < w else INF)
            b = min(dist[nidx - w] if nidx >= w else INF,
                    dist[nidx + w] if nidx + w < n else INF)
            if a > b:
                a, b = b, a
            if b - a >= f:
                nd = a + f
            else:
                nd = 0.5 * (a + b + sqrt(2.0 * f * f - (a - b) * (a - b)))
            if nd < dist[nidx]:
                dist[nidx] = nd
                push(heap, (nd, nidx))
    values = np.array(dist, dtype=float).reshape(h, w)
    return DistanceField(goal=goal, resolution=res, values=values)


def greedy_action(field: DistanceField, pose: AgentPose,
                  stop_radius: float) -> Optional[Action]:
    """One step of greedy descent on a distance field.

    STOP once the current cell is within ``stop_radius`` of the goal;
    otherwise move toward the 8-neighbor with the lowest field value
    (row-major tie-break), turning by the smaller rotation first when that
    neighbor is not straight ahead. Returns None when no neighbor is
    reachable (caller should replan or abort).
    """
    x, y = pose.position
    values = field.values
    h, w = values.shape
    if float(values[y, x]) <= stop_radius:
        return Action.STOP
    best: Optional[tuple[int, int]] = None
    best_val = INF
    for dx, dy in _NEIGHBORS8:
        nx, ny = x + dx, y + dy
        if 0 <= nx < w and 0 <= ny < h and values[ny, nx] < best_val:
            best_val = float(values[ny, nx])
            best = (dx, dy)
    if best is None or best_val == INF:
        return None
    if compass_direction(pose.heading) == best:
        return Action.MOVE_FORWARD
    diff = wrap_angle(math.atan2(best[1], best[0]) - pose.heading)
    return Action.TURN_LEFT if diff >= 0 else Action.TURN_RIGHT


@dataclass(frozen=True)
class Frontier:
    """A known-free cell bordering unknown space."""

    cell: Cell
    unknown_neighbors: int
    value: float = 0.0


def detect_frontiers(known_grid: OccupancyGrid) -> list[Frontier]:
    """All free cells 8-adjacent to at least one unknown cell, row-major."""
    state = known_grid.cells
    unknown = (state == UNKNOWN).astype(np.int8)
    padded = np.pad(unknown, 1)
    counts = np.zeros_like(unknown, dtype=np.int8)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if (dx, dy) == (0, 0):
                continue
            counts += padded[1 + dy: 1 + dy + state.shape[0],
                             1 + dx: 1 + dx + state.shape[1]]
    mask = (state == FREE) & (counts > 0)
    return [Frontier(cell=(int(x), int(y)), unknown_neighbors=int(counts[y, x]))
            for y, x in np.argwhere(mask)]


@dataclass
class ExploreWeights:
    """Frontier scoring weights (distances measured in cells)."""

    alpha: float = 1.0   # landmark proximity
    beta: float = 0.1    # unknown-neighbor count
    gamma: float = 0.05  # geodesic travel cost
    tau: float = 10.0    # proximity length scale


def select_frontier(frontiers: Sequence[Frontier], landmark_centroids: Sequence[Cell],
                    agent_field: DistanceField,
                    weights: ExploreWeights) -> Optional[Frontier]:
    """Pick the best frontier by the three-term value; None when list is empty.

    value = alpha * max_i exp(-dist(frontier, landmark_i)/tau)
          + beta * unknown_neighbors - gamma * geodesic_cells(agent, frontier).
    ``agent_field`` is a distance field rooted at the agent; unreachable
    frontiers are skipped. Ties are broken by input (row-major) order.
    """
    best: Optional[Frontier] = None
    best_value = -INF
    for f in frontiers:
        travel = agent_field.at(f.cell)
        if travel == INF:
            continue
        proximity = 0.0
        fx, fy = f.cell
        for (cx, cy) in landmark_centroids:
            proximity = max(proximity,
                            math.exp(-math.hypot(fx - cx, fy - cy) / weights.tau))
        value = (weights.alpha * proximity
                 + weights.beta * f.unknown_neighbors
                 - weights.gamma * travel / agent_field.resolution)
        if value > best_value:
            best_value = value
            best = Frontier(cell=f.cell, unknown_neighbors=f.unknown_neighbors,
                            value=value)
    return best


def dijkstra_field(grid: OccupancyGrid, start: Cell, *,
                   corner_cutting: bool) -> np.ndarray:
    """8-connected Dijkstra distances (meters) from start over free cells.

    Diagonal moves cost sqrt(2) * resolution. With ``corner_cutting`` False a
    diagonal move additionally requires both orthogonal neighbors to be free
    (matching the fast-marching connectivity); with True only the destination
    cell must be free (matching the agent's motion model). Non-free cells are
    unreachable (+inf).
    """
    sx, sy = start
    if not grid.in_bounds(sx, sy):
        raise InputError(f"start {start} out of bounds")
    state = grid.cells
    if state[sy, sx] != FREE:
        raise InputError(f"start {start} is not a free cell")
    h, w = state.shape
    res = grid.resolution
    diag = math.sqrt(2.0) * res
    dist = np.full((h, w), INF, dtype=float)
    dist[sy, sx] = 0.0
    heap: list[tuple[float, int, int]] = [(0.0, sx, sy)]
    while heap:
        d, x, y = heapq.heappop(heap)
        if d > dist[y, x]:
            continue
        for dx, dy in _NEIGHBORS8:
            nx, ny = x + dx, y + dy
            if not (0 <= nx < w and 0 <= ny < h) or state[ny, nx] != FREE:
                continue
            if dx != 0 and dy != 0:
                if not corner_cutting and (state[y, nx] != FREE
                                           or state[ny, x] != FREE):
                    continue
                nd = d + diag
            else:
                nd = d + res
            if nd < dist[ny, nx]:
                dist[ny, nx] = nd
                heapq.heappush(heap, (nd, nx, ny))
    return dist

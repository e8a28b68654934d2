"""Viewpoint optimization over grid cells.

Scores candidate observation cells with a four-term objective (visibility,
angular spread, distance, feasibility) and minimizes it either exhaustively
(test oracle) or with a seeded genetic algorithm. Scoring runs on the agent's
known map: obstacles block rays, unknown cells are transparent for line of
sight but are infeasible to stand on.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import InputError, NoFeasibleViewpointError
from .gridworld import FREE, Cell, OccupancyGrid, raycast_los, wrap_angle


@dataclass
class GAConfig:
    population: int = 50
    generations: int = 40
    tournament_size: int = 3
    crossover_rate: float = 0.8
    mutation_rate: float = 0.2
    seed: int = 0


@dataclass
class ViewplanConfig:
    w_visible: float = 15.0
    w_fov: float = 7.0
    w_distance: float = 1.0
    c_infeasible: float = 1000.0
    d_desired: float = 2.0        # meters
    fov: float = math.pi / 2.0    # radians
    ga: GAConfig = field(default_factory=GAConfig)

    def __post_init__(self):
        if min(self.w_visible, self.w_fov, self.w_distance) < 0:
            raise InputError("viewpoint weights must be nonnegative")
        if self.c_infeasible <= 0 or self.d_desired <= 0:
            raise InputError("c_infeasible and d_desired must be positive")


@dataclass(frozen=True)
class ViewpointScore:
    """Per-term breakdown; total = -r_visible - r_fov + p_distance + p_feasibility."""

    r_visible: float
    r_fov: float
    p_distance: float
    p_feasibility: float

    @property
    def total(self) -> float:
        return -self.r_visible - self.r_fov + self.p_distance + self.p_feasibility


def visibility_reward(grid: OccupancyGrid, v: Cell, points: Sequence[Cell],
                      cfg: ViewplanConfig) -> float:
    """Reward for seeing the target's corner points, capped at three of them."""
    if not grid.in_bounds(*v):
        raise InputError(f"viewpoint {v} out of bounds")
    n_visible = sum(1 for g in points if raycast_los(grid, v, g))
    return cfg.w_visible * min(n_visible, 3)


def max_angular_spread(v: Cell, points: Sequence[Cell]) -> float:
    """Largest angle subtended at v by any pair of target points.

    Defined as pi when v coincides with one of the points (degenerate case).
    """
    vx, vy = v
    angles = []
    for (gx, gy) in points:
        if (gx, gy) == (vx, vy):
            return math.pi
        angles.append(math.atan2(gy - vy, gx - vx))
    spread = 0.0
    for i in range(len(angles)):
        for j in range(i + 1, len(angles)):
            spread = max(spread, abs(wrap_angle(angles[i] - angles[j])))
    return spread


def fov_reward_from_spread(theta: float, cfg: ViewplanConfig) -> float:
    """Piecewise field-of-view reward: w_fov * theta while theta < fov, else 0."""
    return cfg.w_fov * theta if theta < cfg.fov else 0.0


def fov_reward(v: Cell, points: Sequence[Cell], cfg: ViewplanConfig) -> float:
    """Reward the angular spread of the target, zero once it exceeds the fov."""
    return fov_reward_from_spread(max_angular_spread(v, points), cfg)


def distance_penalty(v: Cell, points: Sequence[Cell], cfg: ViewplanConfig,
                     resolution: float) -> float:
    """Mean absolute deviation of the point distances from the desired one."""
    vx, vy = v
    total = 0.0
    for (gx, gy) in points:
        total += abs(math.hypot(gx - vx, gy - vy) * resolution - cfg.d_desired)
    return cfg.w_distance * total / len(points)


def feasibility_penalty(known_grid: OccupancyGrid, v: Cell,
                        cfg: ViewplanConfig) -> float:
    """Flat penalty for standing on an obstacle or unexplored cell (known map)."""
    if not known_grid.in_bounds(*v):
        raise InputError(f"viewpoint {v} out of bounds")
    return 0.0 if known_grid.get(*v) == FREE else cfg.c_infeasible


def objective(known_grid: OccupancyGrid, v: Cell, points: Sequence[Cell],
              cfg: ViewplanConfig) -> ViewpointScore:
    """Full score breakdown of one candidate viewpoint (lower total is better)."""
    return ViewpointScore(
        r_visible=visibility_reward(known_grid, v, points, cfg),
        r_fov=fov_reward(v, points, cfg),
        p_distance=distance_penalty(v, points, cfg, known_grid.resolution),
        p_feasibility=feasibility_penalty(known_grid, v, cfg),
    )


def _free_cells(grid: OccupancyGrid) -> list[Cell]:
    cells = grid.cells
    return [(x, y) for y in range(grid.height) for x in range(grid.width)
            if cells[y, x] == FREE]


def optimize_exhaustive(known_grid: OccupancyGrid, points: Sequence[Cell],
                        cfg: ViewplanConfig) -> tuple[Cell, ViewpointScore]:
    """Global minimum over every in-bounds cell; ties broken row-major."""
    if not _free_cells(known_grid):
        raise NoFeasibleViewpointError("known map has no free cell to stand on")
    best: Optional[tuple[Cell, ViewpointScore]] = None
    for y in range(known_grid.height):
        for x in range(known_grid.width):
            score = objective(known_grid, (x, y), points, cfg)
            if best is None or score.total < best[1].total:
                best = ((x, y), score)
    return best


def optimize_ga(known_grid: OccupancyGrid, points: Sequence[Cell],
                cfg: ViewplanConfig) -> tuple[Cell, ViewpointScore]:
    """Seeded genetic search for a low-scoring viewpoint.

    Genomes are cell coordinates; the initial population is drawn uniformly
    from known-free cells, selection is by tournament, crossover swaps one
    coordinate, mutation resamples one coordinate uniformly over the grid,
    and the single best individual survives each generation. Deterministic
    for a fixed seed; returns the best individual seen in any generation.
    """
    ga = cfg.ga
    if ga.population < 2:
        raise InputError(f"GA population must be >= 2, got {ga.population}")
    free = _free_cells(known_grid)
    if not free:
        raise NoFeasibleViewpointError("known map has no free cell to stand on")
    rng = random.Random(ga.seed)

    cache: dict[Cell, ViewpointScore] = {}

    def fitness(cell: Cell) -> float:
        score = cache.get(cell)
        if score is None:
            score = objective(known_grid, cell, points, cfg)
            cache[cell] = score
        return score.total

    population = [free[rng.randrange(len(free))] for _ in range(ga.population)]
    best_cell = population[0]
    best_total = fitness(best_cell)

    def track_best(cells: Sequence[Cell]) -> None:
        nonlocal best_cell, best_total
        for c in cells:
            t = fitness(c)
            if t < best_total:
                best_total = t
                best_cell = c

    track_best(population)
    for _ in range(ga.generations):
        # Elite: best of the current population, first index on ties.
        elite = min(population, key=fitness)
        next_pop = [elite]
        while len(next_pop) < ga.population:
            parents = []
            for _ in range(2):
                contenders = [population[rng.randrange(len(population))]
                              for _ in range(ga.tournament_size)]
                parents.append(min(contenders, key=fitness))
            (x1, y1), (x2, y2) = parents
            if rng.random() < ga.crossover_rate:
                children = [(x1, y2), (x2, y1)]
            else:
                children = [(x1, y1), (x2, y2)]
            for child in children:
                if rng.random() < ga.mutation_rate:
                    x, y = child
                    if rng.randrange(2) == 0:
                        child = (rng.randrange(known_grid.width), y)
                    else:
                        child = (x, rng.randrange(known_grid.height))
                if len(next_pop) < ga.population:
                    next_pop.append(child)
        population = next_pop
        track_best(population)
    return best_cell, cache[best_cell]

"""Occupancy bookkeeping and single-tweezer rearrangement: plan, schedule, execute."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .losses import rearrangement_tweezer_response, vacuum_survival


@dataclass
class OccupancyGrid:
    """Target and reservoir sites. Target ids are row-major; reservoir ids are separate."""

    target_xy: np.ndarray
    target_zone: np.ndarray
    target_occ: np.ndarray
    reservoir_xy: np.ndarray
    reservoir_occ: np.ndarray
    spacing_um: float
    target_rows: int
    target_cols: int

    @classmethod
    def from_config(cls, config) -> "OccupancyGrid":
        rows, cols, a = config.target_rows, config.target_cols, config.target_spacing_um
        r, c = np.divmod(np.arange(rows * cols), cols)
        target = np.column_stack([c * a, r * a]).astype(float)
        # left half of the columns sits in the 459 nm array, the rest in 423 nm
        zone = np.where(c < (cols + 1) // 2, 459, 423)
        n, k = config.reservoir_sites, config.reservoir_columns
        res_rows = -(-n // k)
        rr, rc = np.divmod(np.arange(n), k)
        y0 = 0.5 * (rows - 1) * a - 0.5 * (res_rows - 1) * a
        reservoir = np.column_stack([-config.reservoir_offset_um - rc * a, y0 + rr * a]).astype(float)
        return cls(target, zone, np.zeros(rows * cols, bool), reservoir, np.zeros(n, bool),
                   a, rows, cols)

    def copy(self) -> "OccupancyGrid":
        return replace(self, target_occ=self.target_occ.copy(), reservoir_occ=self.reservoir_occ.copy())

    @property
    def n_targets(self) -> int:
        return len(self.target_occ)

    def fill(self) -> float:
        return float(self.target_occ.mean())


@dataclass(frozen=True)
class Move:
    source: int
    destination: int
    path_length_um: float
    close_passes: int
    duration_ms: float = 0.0


@dataclass(frozen=True)
class MovePlan:
    moves: tuple[Move, ...] = ()
    total_duration_ms: float = 0.0
    compute_overhead_ms: float = 0.0

    def __len__(self):
        return len(self.moves)

    def path_length_um(self) -> float:
        return sum(m.path_length_um for m in self.moves)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"source": m.source, "destination": m.destination,
                             "path_length_um": round(m.path_length_um, 9),
                             "duration_ms": round(m.duration_ms, 9)}, sort_keys=True)
                 for m in self.moves]
        return "".join(line + "\n" for line in lines)


def identify_vacancies(grid: OccupancyGrid, target_calls, reservoir_calls):
    """Vacant target ids and occupied reservoir ids according to the image (not the truth)."""
    target_calls = np.asarray(target_calls, dtype=bool)
    reservoir_calls = np.asarray(reservoir_calls, dtype=bool)
    if target_calls.shape != grid.target_occ.shape or reservoir_calls.shape != grid.reservoir_occ.shape:
        raise ValueError("need one classification per site")
    return np.flatnonzero(~target_calls), np.flatnonzero(reservoir_calls)


def move_path(src_xy, dst_xy, corridor_um: float) -> np.ndarray:
    """Waypoints: up the reservoir column, along the channel above the destination row, down."""
    xs, ys = src_xy
    xd, yd = dst_xy
    yc = yd + corridor_um
    return np.array([[xs, ys], [xs, yc], [xd, yc], [xd, yd]], dtype=float)


def path_length(path: np.ndarray) -> float:
    return float(np.sum(np.hypot(*np.diff(path, axis=0).T)))


def euclidean_cost(src_xy, dst_xy) -> np.ndarray:
    d = src_xy[:, None, :] - dst_xy[None, :, :]
    return np.sqrt(d[..., 0] ** 2 + d[..., 1] ** 2)


def pair_sources(sources, vacancies, source_xy, vacancy_xy, policy: str = "optimal"):
    """Return (source ids, vacancy ids) paired by the chosen policy."""
    sources = np.asarray(sources, dtype=np.intp)
    vacancies = np.asarray(vacancies, dtype=np.intp)
    if sources.size == 0 or vacancies.size == 0:
        e = np.empty(0, dtype=np.intp)
        return e, e.copy()
    cost = euclidean_cost(source_xy, vacancy_xy)
    if policy == "optimal":
        r, c = kernels.solve_assignment(cost)
        return sources[r], vacancies[c]
    if policy != "greedy":
        raise ValueError(f"unknown policy {policy!r}")
    nearest = cost.min(axis=0)
    order = np.lexsort((vacancies, nearest))
    used = np.zeros(sources.size, bool)
    src, dst = [], []
    for j in order:
        if used.all():
            break
        col = np.where(used, np.inf, cost[:, j])
        i = int(np.argmin(col))  # first minimum = lowest id
        used[i] = True
        src.append(sources[i])
        dst.append(vacancies[j])
    return np.array(src, dtype=np.intp), np.array(dst, dtype=np.intp)


def plan_moves(grid: OccupancyGrid, sources, vacancies, policy: str = "optimal",
               corridor_um: float = 1.6, target_calls=None) -> MovePlan:
    """Pair sources with vacancies and order moves farthest destination first.

    ``close_passes`` counts target sites believed occupied (image calls plus
    earlier destinations of this plan) within the corridor distance of the
    path, the destination excluded.
    """
    src, dst = pair_sources(sources, vacancies, grid.reservoir_xy[np.asarray(sources, np.intp)],
                            grid.target_xy[np.asarray(vacancies, np.intp)], policy)
    if src.size == 0:
        return MovePlan()
    order = np.lexsort((dst, -grid.target_xy[dst, 0]))
    believed = (grid.target_occ if target_calls is None else np.asarray(target_calls, bool)).copy()
    xs, ys = grid.target_xy[:, 0], grid.target_xy[:, 1]
    moves = []
    for k in order:
        s, d = int(src[k]), int(dst[k])
        path = move_path(grid.reservoir_xy[s], grid.target_xy[d], corridor_um)
        cand = believed.copy()
        cand[d] = False
        near = kernels.close_sites(path, xs, ys, cand.view(np.uint8), corridor_um)
        moves.append(Move(s, d, path_length(path), int(near.sum())))
        believed[d] = True
    return MovePlan(tuple(moves))


def schedule(plan: MovePlan, planner, compute_overhead_ms: float) -> MovePlan:
    fixed = planner.pickup_ramp_ms + planner.release_ramp_ms
    moves = tuple(replace(m, duration_ms=fixed + m.path_length_um / planner.speed_um_per_ms)
                  for m in plan.moves)
    total = compute_overhead_ms + sum(m.duration_ms for m in moves)
    return MovePlan(moves, total, compute_overhead_ms)


@dataclass
class ExecutionResult:
    transfers_in: int = 0
    pickup_failures: int = 0
    losses: dict = field(default_factory=lambda: {"vacuum": 0, "disturbance": 0, "collision": 0})
    reservoir_vacuum: int = 0


def execute_plan(plan: MovePlan, grid: OccupancyGrid, config, rng: np.random.Generator,
                 corridor_um: float | None = None) -> ExecutionResult:
    """Carry out a scheduled plan on the true occupancy, in place.

    Vacuum loss over the whole plan duration comes first, then each move:
    pickup, disturbance of occupied sites passed closely, placement. Placing
    onto an occupied site loses both atoms.
    """
    lp = config.losses
    c = lp.proximity_distance_um if corridor_um is None else corridor_um
    out = ExecutionResult()
    p_vac = vacuum_survival(plan.total_duration_ms, config.vacuum_lifetime_s)
    if p_vac < 1.0:
        lost = grid.target_occ & (rng.random(grid.n_targets) >= p_vac)
        grid.target_occ &= ~lost
        out.losses["vacuum"] += int(lost.sum())
        rlost = grid.reservoir_occ & (rng.random(grid.reservoir_occ.size) >= p_vac)
        grid.reservoir_occ &= ~rlost
        out.reservoir_vacuum = int(rlost.sum())
    pickup, disturb = rearrangement_tweezer_response(lp.rearr_depth_fraction, lp)
    xs, ys = grid.target_xy[:, 0], grid.target_xy[:, 1]
    for m in plan.moves:
        if not grid.reservoir_occ[m.source]:
            continue
        if rng.random() >= pickup:
            out.pickup_failures += 1
            continue
        grid.reservoir_occ[m.source] = False
        if disturb > 0.0:
            cand = grid.target_occ.copy()
            cand[m.destination] = False
            path = move_path(grid.reservoir_xy[m.source], grid.target_xy[m.destination], c)
            near = np.flatnonzero(kernels.close_sites(path, xs, ys, cand.view(np.uint8), c))
            hit = near[rng.random(near.size) < disturb]
            grid.target_occ[hit] = False
            out.losses["disturbance"] += int(hit.size)
        out.transfers_in += 1
        if grid.target_occ[m.destination]:
            grid.target_occ[m.destination] = False
            out.losses["collision"] += 2
        else:
            grid.target_occ[m.destination] = True
    return out

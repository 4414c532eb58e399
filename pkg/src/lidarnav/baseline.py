"""Classical navigation baseline: global A* on an inflated occupancy grid
rasterized from the static map, with a dynamic-window local controller
that forward-simulates candidate (v, w) pairs against the live scan.

The global layer knows nothing about moving obstacles (it plans on the
static map); the local layer sees them only as instantaneous scan points,
which is precisely the failure mode the learned policies are compared
against.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .robot import (CONTROL_DT, Action, Pose, RobotProfile, integrate_batch,
                    unclamp_action, wrap_angle)
from .world import Box, Circle, LidarConfig, Segment, World, WorldSpec


class NoPathError(RuntimeError):
    """A* could not connect start and goal on the grid."""


@dataclass(frozen=True)
class OccupancyGrid:
    """Boolean grid over the arena; cell [iy, ix] covers
    [origin + i * resolution, origin + (i + 1) * resolution)."""

    resolution: float
    origin: tuple[float, float]
    occupied: np.ndarray          # (H, W) bool

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupied.shape

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        ix = int(math.floor((x - self.origin[0]) / self.resolution))
        iy = int(math.floor((y - self.origin[1]) / self.resolution))
        return ix, iy

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (self.origin[0] + (ix + 0.5) * self.resolution,
                self.origin[1] + (iy + 0.5) * self.resolution)

    def in_bounds(self, ix: int, iy: int) -> bool:
        h, w = self.occupied.shape
        return 0 <= ix < w and 0 <= iy < h

    def is_free(self, ix: int, iy: int) -> bool:
        return self.in_bounds(ix, iy) and not self.occupied[iy, ix]


def rasterize(world: World, resolution: float, inflation: float = 0.0) -> OccupancyGrid:
    """Occupancy grid of the static map (walls + static obstacles only).

    A cell is occupied when its closed rectangle intersects any obstacle;
    inflation then marks every cell whose center is within ``inflation``
    of an occupied cell, turning the grid into configuration space for a
    disc robot.
    """
    e = world.spec.arena_half_extent
    n = max(1, int(round(2.0 * e / resolution)))
    origin = (-e, -e)
    centers = origin[0] + (np.arange(n) + 0.5) * resolution
    cx, cy = np.meshgrid(centers, centers)            # (H, W) world coords
    half = resolution / 2.0
    occ = np.zeros((n, n), dtype=bool)

    # Only positive-area overlap marks a cell, so an obstacle face lying
    # exactly on a cell boundary claims one side only; the nanometer slack
    # keeps round-off in the cell centers from re-including touch cases.
    eps = 1e-9

    def against_box(center, half_ext):
        return ((np.abs(cx - center[0]) < half_ext[0] + half - eps)
                & (np.abs(cy - center[1]) < half_ext[1] + half - eps))

    for ob in world.spec.static_obstacles:
        if isinstance(ob, Circle):
            dx = np.maximum(np.abs(cx - ob.center[0]) - half, 0.0)
            dy = np.maximum(np.abs(cy - ob.center[1]) - half, 0.0)
            occ |= dx * dx + dy * dy < max(ob.radius - eps, 0.0) ** 2
        elif isinstance(ob, Box):
            occ |= against_box(ob.center, ob.half_extents)
        elif isinstance(ob, Segment):
            occ |= _cells_touching_segment(cx, cy, half, ob.p0, ob.p1)
    # Arena walls: the outer ring of cells touches the boundary segments.
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True

    if inflation > 0.0:
        dist = ndimage.distance_transform_edt(~occ, sampling=resolution)
        occ = dist <= inflation
    return OccupancyGrid(resolution, origin, occ)


def _cells_touching_segment(cx, cy, half, p0, p1) -> np.ndarray:
    """Distance from each cell rect to the segment is zero."""
    ax, ay = p0
    ex, ey = p1[0] - ax, p1[1] - ay
    denom = ex * ex + ey * ey
    u = np.clip(((cx - ax) * ex + (cy - ay) * ey) / denom, 0.0, 1.0)
    qx = ax + u * ex
    qy = ay + u * ey
    dx = np.maximum(np.abs(qx - cx) - half, 0.0)
    dy = np.maximum(np.abs(qy - cy) - half, 0.0)
    # Nearest segment point may sit outside the rect's Voronoi region, so
    # iterate once more from the clamped rect point for an exact test.
    px = np.clip(qx, cx - half, cx + half)
    py = np.clip(qy, cy - half, cy + half)
    u2 = np.clip(((px - ax) * ex + (py - ay) * ey) / denom, 0.0, 1.0)
    q2x = ax + u2 * ex - px
    q2y = ay + u2 * ey - py
    return (dx == 0.0) & (dy == 0.0) | (q2x * q2x + q2y * q2y <= 1e-18)


@dataclass(frozen=True)
class PlannedPath:
    cells: tuple[tuple[int, int], ...]
    points: np.ndarray            # (M, 2) cell centers in world coords
    cumlen: np.ndarray            # (M,) arc length at each point

    @property
    def length(self) -> float:
        return float(self.cumlen[-1])


_SQRT2 = math.sqrt(2.0)
_MOVES = ((1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
          (1, 1, _SQRT2), (1, -1, _SQRT2), (-1, 1, _SQRT2), (-1, -1, _SQRT2))


def grid_neighbors(grid: OccupancyGrid, ix: int, iy: int):
    """8-connected moves; diagonals require both touched cardinals free."""
    for dx, dy, cost in _MOVES:
        nx, ny = ix + dx, iy + dy
        if not grid.is_free(nx, ny):
            continue
        if dx != 0 and dy != 0 and not (grid.is_free(ix + dx, iy)
                                        and grid.is_free(ix, iy + dy)):
            continue
        yield nx, ny, cost


def octile(a: tuple[int, int], b: tuple[int, int]) -> float:
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return max(dx, dy) + (_SQRT2 - 1.0) * min(dx, dy)


def astar(grid: OccupancyGrid, start: tuple[int, int],
          goal: tuple[int, int]) -> PlannedPath:
    """Octile-heuristic A* with deterministic (f, h, cell index) tie-breaks."""
    if not grid.is_free(*start):
        raise NoPathError(f"start cell {start} is occupied or out of bounds")
    if not grid.is_free(*goal):
        raise NoPathError(f"goal cell {goal} is occupied or out of bounds")
    h, w = grid.shape

    def key(cell):
        return cell[1] * w + cell[0]

    g_cost = {start: 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    h0 = octile(start, goal)
    open_heap = [(h0, h0, key(start), start)]
    closed: set[tuple[int, int]] = set()
    while open_heap:
        f, _, _, cell = heapq.heappop(open_heap)
        if cell in closed:
            continue
        if cell == goal:
            return _trace_path(grid, parent, goal)
        closed.add(cell)
        base = g_cost[cell]
        for nx, ny, cost in grid_neighbors(grid, *cell):
            nxt = (nx, ny)
            ng = base + cost
            if ng < g_cost.get(nxt, math.inf):
                g_cost[nxt] = ng
                parent[nxt] = cell
                nh = octile(nxt, goal)
                heapq.heappush(open_heap, (ng + nh, nh, key(nxt), nxt))
    raise NoPathError(f"no path from {start} to {goal}")


def path_cost(path: PlannedPath) -> float:
    """Grid cost of the planned cell sequence (1 / sqrt(2) per move)."""
    cost = 0.0
    for (ax, ay), (bx, by) in zip(path.cells, path.cells[1:]):
        cost += _SQRT2 if ax != bx and ay != by else 1.0
    return cost


def _trace_path(grid: OccupancyGrid, parent, goal) -> PlannedPath:
    cells = [goal]
    while cells[-1] in parent:
        cells.append(parent[cells[-1]])
    cells.reverse()
    points = np.asarray([grid.cell_center(*c) for c in cells], dtype=np.float64)
    deltas = np.linalg.norm(np.diff(points, axis=0), axis=1) if len(cells) > 1 \
        else np.zeros(0)
    cumlen = np.concatenate([[0.0], np.cumsum(deltas)])
    return PlannedPath(tuple(cells), points, cumlen)


def nearest_free_cell(grid: OccupancyGrid, cell: tuple[int, int],
                      max_radius: int = 40) -> tuple[int, int]:
    """Closest free cell by ring search (deterministic scan order)."""
    if grid.is_free(*cell):
        return cell
    cx, cy = cell
    for r in range(1, max_radius + 1):
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                if max(abs(dx), abs(dy)) != r:
                    continue
                if grid.is_free(cx + dx, cy + dy):
                    return (cx + dx, cy + dy)
    raise NoPathError(f"no free cell within {max_radius} cells of {cell}")


# ---------------------------------------------------------------------------
# Local control.

@dataclass(frozen=True)
class DwaConfig:
    """Dynamic-window scoring knobs.

    Candidates forward-simulate for sim_time; any candidate whose predicted
    clearance against the current scan points drops below min_dist is
    discarded outright.
    """

    sim_time: float = 1.5
    dt: float = CONTROL_DT
    n_v: int = 5
    n_w: int = 11
    w_progress: float = 1.0
    w_heading: float = 0.5
    w_clearance: float = 0.2
    lookahead: float = 0.6
    min_dist: float = 0.25
    replan_period: float = 2.0


def scan_points(pose: Pose, ranges: np.ndarray, lidar: LidarConfig) -> np.ndarray:
    """World-frame hit points of the scan; max-range beams are misses."""
    ranges = np.asarray(ranges, dtype=np.float64)
    k = lidar.beam_count
    angles = pose.yaw + 2.0 * np.pi * np.arange(k) / k
    hit = ranges < lidar.max_range - 1e-9
    return np.stack([pose.x + ranges[hit] * np.cos(angles[hit]),
                     pose.y + ranges[hit] * np.sin(angles[hit])], axis=1)


def project_on_path(path: PlannedPath, x: float, y: float) -> float:
    """Arc length of the closest point on the path polyline."""
    pts = path.points
    if len(pts) == 1:
        return 0.0
    a = pts[:-1]
    d = pts[1:] - a
    seg2 = (d * d).sum(axis=1)
    seg2 = np.where(seg2 == 0.0, 1.0, seg2)
    rel = np.asarray([x, y]) - a
    u = np.clip((rel * d).sum(axis=1) / seg2, 0.0, 1.0)
    q = a + u[:, None] * d
    dist2 = ((q - [x, y]) ** 2).sum(axis=1)
    i = int(np.argmin(dist2))
    return float(path.cumlen[i] + u[i] * math.sqrt(seg2[i]))


def point_at_arclen(path: PlannedPath, s: float) -> tuple[float, float]:
    pts, cum = path.points, path.cumlen
    if s <= 0.0 or len(pts) == 1:
        return tuple(pts[0]) if s <= 0.0 else tuple(pts[-1])
    if s >= cum[-1]:
        return tuple(pts[-1])
    i = int(np.searchsorted(cum, s, side="right")) - 1
    seg = cum[i + 1] - cum[i]
    u = (s - cum[i]) / seg if seg > 0 else 0.0
    return tuple(pts[i] + u * (pts[i + 1] - pts[i]))


def dwa_step(pose: Pose, path: PlannedPath, ranges: np.ndarray,
             lidar: LidarConfig, profile: RobotProfile,
             cfg: DwaConfig = DwaConfig()) -> Action:
    """Pick the best constant (v, w) over a short simulated horizon.

    score = w_progress * path progress + w_heading * cos(heading error to
    the lookahead point) - w_clearance / predicted clearance.  Exact score
    ties resolve toward lower |w|.  When every candidate is unsafe the
    robot commits to a floor-speed escape turn toward the more open side.
    """
    vs = np.linspace(profile.v_range[0], profile.v_range[1], cfg.n_v)
    ws = np.linspace(profile.w_range[0], profile.w_range[1], cfg.n_w)
    order = np.argsort(np.abs(ws), kind="stable")
    ws = ws[order]
    vv, ww = np.meshgrid(vs[::-1], ws, indexing="ij")
    cand = np.stack([vv.ravel(), ww.ravel()], axis=1)          # (C, 2)
    c = len(cand)
    steps = max(1, int(round(cfg.sim_time / cfg.dt)))
    poses = np.tile([[pose.x, pose.y, pose.yaw]], (c, 1))
    traj = np.empty((steps, c, 2))
    for s in range(steps):
        poses = integrate_batch(poses, cand, cfg.dt)
        traj[s] = poses[:, :2]

    pts = scan_points(pose, ranges, lidar)
    if len(pts):
        d = np.linalg.norm(traj[:, :, None, :] - pts[None, None, :, :], axis=-1)
        clearance = d.min(axis=(0, 2))                         # (C,)
    else:
        clearance = np.full(c, np.inf)
    safe = clearance >= cfg.min_dist
    if not safe.any():
        left = float(ranges[1:lidar.beam_count // 2].mean())
        right = float(ranges[lidar.beam_count // 2 + 1:].mean())
        w_mag = max(abs(profile.w_range[0]), abs(profile.w_range[1]))
        return Action(profile.v_range[0], w_mag if left >= right else -w_mag)

    s_now = project_on_path(path, pose.x, pose.y)
    end = poses                                                # (C, 3) final
    s_end = np.asarray([project_on_path(path, p[0], p[1]) for p in end])
    progress = s_end - s_now
    # Heading is judged against a carrot ahead of where each candidate
    # lands, so fast rollouts are not punished for passing a fixed point.
    looks = np.asarray([point_at_arclen(path, s + cfg.lookahead)
                        for s in s_end])
    bearing = np.arctan2(looks[:, 1] - end[:, 1],
                         looks[:, 0] - end[:, 0]) - end[:, 2]
    heading = np.cos(bearing)
    with np.errstate(divide="ignore"):
        penalty = np.where(np.isinf(clearance), 0.0, 1.0 / clearance)
    score = (cfg.w_progress * progress + cfg.w_heading * heading
             - cfg.w_clearance * penalty)
    score[~safe] = -np.inf
    best = int(np.argmax(score))    # candidates pre-sorted by |w| ascending
    return Action(float(cand[best, 0]), float(cand[best, 1]))


class BaselineController:
    """A*-on-static-map global planning plus DWA local control.

    Exposes the same reset/act protocol the evaluation harness uses for
    learned policies; act() consumes the true pose and the live scan and
    emits raw [-1, 1] commands.
    """

    def __init__(self, spec: WorldSpec, profile: RobotProfile, lidar: LidarConfig,
                 resolution: float = 0.05, inflation: float | None = None,
                 dwa: DwaConfig = DwaConfig()):
        import dataclasses as _dc
        static_spec = _dc.replace(spec, dynamic_obstacles=())
        from .world import build_world
        self.grid = rasterize(build_world(static_spec), resolution,
                              profile.body_radius if inflation is None else inflation)
        self.profile = profile
        self.lidar = lidar
        self.dwa = dwa
        self._replan_every = max(1, int(round(dwa.replan_period / dwa.dt)))
        self._path: PlannedPath | None = None
        self._goal: tuple[float, float] | None = None
        self._tick = 0

    def _plan(self, pose: Pose) -> None:
        start = nearest_free_cell(self.grid, self.grid.world_to_cell(pose.x, pose.y))
        goal = nearest_free_cell(self.grid, self.grid.world_to_cell(*self._goal))
        self._path = astar(self.grid, start, goal)

    def reset(self, pose: Pose, goal: tuple[float, float]) -> None:
        self._goal = goal
        self._tick = 0
        self._path = None
        self._plan(pose)

    def act(self, pose: Pose, ranges: np.ndarray) -> np.ndarray:
        if self._tick % self._replan_every == 0 and self._tick > 0:
            try:
                self._plan(pose)
            except NoPathError:
                pass                      # keep following the previous path
        self._tick += 1
        action = dwa_step(pose, self._path, ranges, self.lidar, self.profile,
                          self.dwa)
        return unclamp_action(action, self.profile)

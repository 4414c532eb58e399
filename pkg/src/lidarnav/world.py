"""Walled 2D arenas with exact analytic ray casting.

A world is an axis-aligned square arena bounded by four wall segments,
containing static circle / box / wall-segment obstacles and, optionally,
box obstacles that oscillate back and forth along a line segment.  All
geometric queries (ray casts, clearance, free-pose sampling) are closed
form and vectorized over beams and environments, which is what keeps the
simulator fast enough to train against.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .robot import Pose

WORLD_SCHEMA_VERSION = 1

# Rays closer to parallel than this (in the relevant determinant) are
# treated as misses; the brute-force marcher agrees to well under 2 mm.
_PARALLEL_EPS = 1e-12


class InvalidSpecError(ValueError):
    """A world spec violates a structural invariant."""


class SamplingExhaustedError(RuntimeError):
    """Rejection sampling for a free pose ran out of attempts."""


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by center and half extents."""

    center: tuple[float, float]
    half_extents: tuple[float, float]


@dataclass(frozen=True)
class Segment:
    """Zero-thickness wall segment."""

    p0: tuple[float, float]
    p1: tuple[float, float]


Obstacle = Circle | Box | Segment


@dataclass(frozen=True)
class LidarConfig:
    """Planar range sensor: beam_count beams evenly spaced over 360 degrees.

    Readings are clamped to [min_range, max_range]; anything nearer than
    min_range is reported as min_range, anything farther (or a miss) as
    max_range.
    """

    beam_count: int = 120
    min_range: float = 0.15
    max_range: float = 3.0


#: Simulation-default sensor and the narrower real-deployment profile.
LIDAR_CONFIGS: dict[str, LidarConfig] = {
    "default": LidarConfig(120, 0.15, 3.0),
    "real_deploy": LidarConfig(120, 0.15, 2.0),
}


@dataclass(frozen=True)
class DynamicObstacleSpec:
    """A box that ping-pongs along the segment path[0] -> path[1].

    ``phase`` is the fraction of the path covered at t = 0; ``None`` means
    the phase is randomized when the world is built (per build seed).
    """

    box: Box
    path: tuple[tuple[float, float], tuple[float, float]]
    speed: float = 0.2
    phase: float | None = None


@dataclass(frozen=True)
class WorldSpec:
    """Declarative arena description; see docs/formats.md for the JSON form."""

    arena_half_extent: float = 4.0
    static_obstacles: tuple[Obstacle, ...] = ()
    dynamic_obstacles: tuple[DynamicObstacleSpec, ...] = ()
    goal_region: Box | None = None
    spawn_region: Box | None = None
    spawn_clearance: float = 0.5


class _StaticGeometry:
    """Static primitives flattened into arrays for vectorized kernels."""

    def __init__(self, spec: WorldSpec):
        e = spec.arena_half_extent
        corners = [(-e, -e), (e, -e), (e, e), (-e, e)]
        segs = [(corners[i], corners[(i + 1) % 4]) for i in range(4)]
        circles = []
        boxes = []
        for ob in spec.static_obstacles:
            if isinstance(ob, Circle):
                circles.append((*ob.center, ob.radius))
            elif isinstance(ob, Box):
                boxes.append((*ob.center, *ob.half_extents))
            elif isinstance(ob, Segment):
                segs.append((ob.p0, ob.p1))
            else:  # pragma: no cover - guarded by validate_spec
                raise InvalidSpecError(f"unknown obstacle type {type(ob)!r}")
        self.segments = np.asarray(segs, dtype=np.float64).reshape(-1, 2, 2)
        circ = np.asarray(circles, dtype=np.float64).reshape(-1, 3)
        self.circle_centers = circ[:, :2]
        self.circle_radii = circ[:, 2]
        bx = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
        self.box_centers = bx[:, :2]
        self.box_halves = bx[:, 2:]


class World:
    """Immutable world snapshot: spec, elapsed sim time, dynamic poses.

    Stepping returns a new snapshot; static geometry arrays are shared
    between snapshots of the same spec.
    """

    def __init__(self, spec: WorldSpec, phases: np.ndarray, sim_time: float = 0.0,
                 _geom: _StaticGeometry | None = None):
        self.spec = spec
        self.sim_time = float(sim_time)
        self.phases = np.asarray(phases, dtype=np.float64)
        self._geom = _geom if _geom is not None else _StaticGeometry(spec)
        self.dynamic_poses = _dynamic_centers(spec, self.phases, self.sim_time)

    @property
    def dynamic_half_extents(self) -> np.ndarray:
        return np.asarray([d.box.half_extents for d in self.spec.dynamic_obstacles],
                          dtype=np.float64).reshape(-1, 2)


def _path_arrays(spec: WorldSpec):
    p0 = np.asarray([d.path[0] for d in spec.dynamic_obstacles], dtype=np.float64).reshape(-1, 2)
    p1 = np.asarray([d.path[1] for d in spec.dynamic_obstacles], dtype=np.float64).reshape(-1, 2)
    return p0, p1


def _dynamic_centers(spec: WorldSpec, phases: np.ndarray, sim_time) -> np.ndarray:
    """Centers of all dynamic boxes at a given sim time.

    Travel distance is a pure function of sim_time (triangle wave over the
    path length), so positions do not depend on how time was subdivided.
    Broadcasts: phases (..., D) with sim_time (...) gives (..., D, 2).
    """
    phases = np.asarray(phases, dtype=np.float64)
    if not spec.dynamic_obstacles:
        return np.zeros(phases.shape + (2,), dtype=np.float64)
    p0, p1 = _path_arrays(spec)
    lengths = np.linalg.norm(p1 - p0, axis=1)
    speeds = np.asarray([d.speed for d in spec.dynamic_obstacles], dtype=np.float64)
    t = np.asarray(sim_time, dtype=np.float64)
    s = phases * lengths + speeds * t[..., None]
    u = np.mod(s, 2.0 * lengths)
    along = np.where(u <= lengths, u, 2.0 * lengths - u)
    direction = (p1 - p0) / lengths[:, None]
    return p0 + along[..., None] * direction


def validate_spec(spec: WorldSpec) -> None:
    """Raise InvalidSpecError if the spec is structurally unsound."""
    e = spec.arena_half_extent
    if not (e > 0):
        raise InvalidSpecError("arena_half_extent must be positive")

    def inside(p, margin=0.0):
        return abs(p[0]) <= e - margin and abs(p[1]) <= e - margin

    for i, ob in enumerate(spec.static_obstacles):
        if isinstance(ob, Circle):
            if ob.radius <= 0:
                raise InvalidSpecError(f"static_obstacles[{i}]: radius must be positive")
            if not inside(ob.center):
                raise InvalidSpecError(f"static_obstacles[{i}]: center outside arena")
        elif isinstance(ob, Box):
            if min(ob.half_extents) <= 0:
                raise InvalidSpecError(f"static_obstacles[{i}]: half_extents must be positive")
            if not inside(ob.center):
                raise InvalidSpecError(f"static_obstacles[{i}]: center outside arena")
        elif isinstance(ob, Segment):
            if not (inside(ob.p0) and inside(ob.p1)):
                raise InvalidSpecError(f"static_obstacles[{i}]: endpoint outside arena")
        else:
            raise InvalidSpecError(f"static_obstacles[{i}]: unknown obstacle type")
    for i, dyn in enumerate(spec.dynamic_obstacles):
        if min(dyn.box.half_extents) <= 0:
            raise InvalidSpecError(f"dynamic_obstacles[{i}]: half_extents must be positive")
        if dyn.speed <= 0:
            raise InvalidSpecError(f"dynamic_obstacles[{i}]: speed must be positive")
        p0, p1 = dyn.path
        if not (inside(p0) and inside(p1)):
            raise InvalidSpecError(f"dynamic_obstacles[{i}]: path endpoint outside arena")
        if math.dist(p0, p1) <= 0:
            raise InvalidSpecError(f"dynamic_obstacles[{i}]: path has zero length")
        if dyn.phase is not None and not (0.0 <= dyn.phase <= 1.0):
            raise InvalidSpecError(f"dynamic_obstacles[{i}]: phase must be in [0, 1]")
    for name, region in (("goal_region", spec.goal_region), ("spawn_region", spec.spawn_region)):
        if region is not None:
            if min(region.half_extents) <= 0:
                raise InvalidSpecError(f"{name}: half_extents must be positive")
            if not inside(region.center):
                raise InvalidSpecError(f"{name}: center outside arena")
    if spec.spawn_clearance < 0:
        raise InvalidSpecError("spawn_clearance must be non-negative")


def build_world(spec: WorldSpec, seed: int = 0) -> World:
    """Validate a spec and instantiate it; deterministic for a given seed.

    Dynamic obstacles whose phase is None get a phase drawn from the seed,
    so distinct seeds give distinct crossing timings.
    """
    validate_spec(spec)
    rng = np.random.default_rng(seed)
    phases = np.empty(len(spec.dynamic_obstacles), dtype=np.float64)
    for i, dyn in enumerate(spec.dynamic_obstacles):
        drawn = rng.uniform(0.0, 1.0)
        phases[i] = drawn if dyn.phase is None else dyn.phase
    return World(spec, phases, sim_time=0.0)


def step_dynamic_obstacles(world: World, dt: float) -> World:
    """Advance dynamic obstacles by dt, reversing at path endpoints."""
    return World(world.spec, world.phases, world.sim_time + dt, _geom=world._geom)


# ---------------------------------------------------------------------------
# Ray casting kernels.  All take origins (..., 2) and unit dirs (..., 2) and
# return the hit parameter t per primitive, inf for a miss.  A ray starting
# inside a solid primitive reports t = 0 (the origin is already occupied).

def _ray_segments(origins: np.ndarray, dirs: np.ndarray, segs: np.ndarray) -> np.ndarray:
    if segs.size == 0:
        return np.full(origins.shape[:-1] + (0,), np.inf)
    a = segs[..., 0, :]
    e = segs[..., 1, :] - segs[..., 0, :]
    o = origins[..., None, :]
    d = dirs[..., None, :]
    ao = a - o
    denom = d[..., 0] * e[..., 1] - d[..., 1] * e[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ao[..., 0] * e[..., 1] - ao[..., 1] * e[..., 0]) / denom
        u = (ao[..., 0] * d[..., 1] - ao[..., 1] * d[..., 0]) / denom
    ok = (np.abs(denom) > _PARALLEL_EPS) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    return np.where(ok, t, np.inf)


def _ray_circles(origins: np.ndarray, dirs: np.ndarray,
                 centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    if centers.size == 0:
        return np.full(origins.shape[:-1] + (0,), np.inf)
    o = origins[..., None, :]
    d = dirs[..., None, :]
    rel = centers - o
    tc = rel[..., 0] * d[..., 0] + rel[..., 1] * d[..., 1]
    dist2 = rel[..., 0] ** 2 + rel[..., 1] ** 2
    disc = radii ** 2 - (dist2 - tc ** 2)
    th = np.sqrt(np.maximum(disc, 0.0))
    t0 = tc - th
    inside = dist2 <= radii ** 2
    hit = (disc >= 0.0) & (t0 >= 0.0)
    t = np.where(hit, t0, np.inf)
    return np.where(inside, 0.0, t)


def _ray_boxes(origins: np.ndarray, dirs: np.ndarray,
               centers: np.ndarray, halves: np.ndarray) -> np.ndarray:
    if centers.size == 0:
        return np.full(origins.shape[:-1] + (0,), np.inf)
    o = origins[..., None, :]
    d = dirs[..., None, :]
    # Nudge parallel components off zero; IEEE limits then do the right thing.
    d = np.where(np.abs(d) < _PARALLEL_EPS, _PARALLEL_EPS, d)
    lo = centers - halves
    hi = centers + halves
    t1 = (lo - o) / d
    t2 = (hi - o) / d
    tmin = np.maximum(np.minimum(t1[..., 0], t2[..., 0]), np.minimum(t1[..., 1], t2[..., 1]))
    tmax = np.minimum(np.maximum(t1[..., 0], t2[..., 0]), np.maximum(t1[..., 1], t2[..., 1]))
    hit = (tmax >= tmin) & (tmax >= 0.0)
    return np.where(hit, np.maximum(tmin, 0.0), np.inf)


def _raw_distances(geom: _StaticGeometry, origins: np.ndarray, dirs: np.ndarray,
                   dyn_centers: np.ndarray, dyn_halves: np.ndarray) -> np.ndarray:
    """Unclamped nearest-hit distance per ray (inf when nothing is hit)."""
    t = _ray_segments(origins, dirs, geom.segments).min(axis=-1, initial=np.inf)
    t = np.minimum(t, _ray_circles(origins, dirs, geom.circle_centers,
                                   geom.circle_radii).min(axis=-1, initial=np.inf))
    t = np.minimum(t, _ray_boxes(origins, dirs, geom.box_centers,
                                 geom.box_halves).min(axis=-1, initial=np.inf))
    if dyn_centers.shape[-2] > 0:
        t = np.minimum(t, _ray_boxes(origins, dirs, dyn_centers,
                                     dyn_halves).min(axis=-1, initial=np.inf))
    return t


def cast_ray(world: World, origin: Sequence[float], angle: float,
             max_range: float) -> float:
    """Distance from origin along angle to the first obstacle or wall.

    Returns max_range when nothing is hit within range.
    """
    o = np.asarray(origin, dtype=np.float64).reshape(1, 2)
    d = np.asarray([[math.cos(angle), math.sin(angle)]], dtype=np.float64)
    t = _raw_distances(world._geom, o, d, world.dynamic_poses,
                       world.dynamic_half_extents)
    return float(min(t[0], max_range))


def _beam_dirs(yaws: np.ndarray, beam_count: int) -> tuple[np.ndarray, np.ndarray]:
    offsets = 2.0 * np.pi * np.arange(beam_count) / beam_count
    ang = yaws[..., None] + offsets
    return np.cos(ang), np.sin(ang)


def scan(world: World, pose, lidar: LidarConfig) -> np.ndarray:
    """Full lidar sweep from a pose: beam i points at yaw + i * (2pi / K).

    Accepts a Pose or a plain (x, y, yaw) triple.
    """
    x, y, yaw = (pose.x, pose.y, pose.yaw) if hasattr(pose, "yaw") else pose
    return scan_batch(world, np.asarray([[x, y]]), np.asarray([yaw]), lidar)[0]


def _scan_arrays(geom: _StaticGeometry, positions: np.ndarray, yaws: np.ndarray,
                 lidar: LidarConfig, dyn_centers: np.ndarray,
                 dyn_halves: np.ndarray) -> np.ndarray:
    """Array-level scan kernel shared by scan_batch and the vectorized env.

    positions (N, 2), yaws (N,), dyn_centers (N, D, 2) -> (N, K) clamped
    ranges; pose i is scanned against dynamic-box set i.
    """
    n = positions.shape[0]
    k = lidar.beam_count
    cos, sin = _beam_dirs(np.asarray(yaws, dtype=np.float64), k)
    dirs = np.stack([cos, sin], axis=-1)                      # (N, K, 2)
    origins = np.broadcast_to(positions[:, None, :], (n, k, 2))
    dyn = np.asarray(dyn_centers)[:, None, :, :]              # (N, 1, D, 2)
    t = _raw_distances(geom, origins, dirs, dyn, dyn_halves)
    return np.clip(t, lidar.min_range, lidar.max_range)


def scan_batch(world: World, positions: np.ndarray, yaws: np.ndarray,
               lidar: LidarConfig, dyn_centers: np.ndarray | None = None) -> np.ndarray:
    """Scans for N poses at once -> (N, beam_count) clamped ranges.

    dyn_centers, when given, supplies per-pose dynamic-box centers with
    shape (N, D, 2); by default every pose sees the world's own dynamic
    poses.
    """
    n = positions.shape[0]
    if dyn_centers is None:
        dyn_centers = np.broadcast_to(world.dynamic_poses,
                                      (n,) + world.dynamic_poses.shape)
    return _scan_arrays(world._geom, np.asarray(positions, dtype=np.float64),
                        np.asarray(yaws, dtype=np.float64), lidar,
                        dyn_centers, world.dynamic_half_extents)


# ---------------------------------------------------------------------------
# Clearance and sampling.

def _point_segment_dist(points: np.ndarray, segs: np.ndarray) -> np.ndarray:
    if segs.size == 0:
        return np.full(points.shape[:-1] + (0,), np.inf)
    a = segs[:, 0, :]
    e = segs[:, 1, :] - segs[:, 0, :]
    ap = points[..., None, :] - a
    denom = np.einsum("sj,sj->s", e, e)
    u = np.clip((ap * e).sum(-1) / denom, 0.0, 1.0)
    closest = a + u[..., None] * e
    return np.linalg.norm(points[..., None, :] - closest, axis=-1)


def clearance_batch(world: World, points: np.ndarray,
                    dyn_centers: np.ndarray | None = None) -> np.ndarray:
    """Distance from each point to the nearest occupied region (0 inside)."""
    g = world._geom
    points = np.asarray(points, dtype=np.float64)
    d = _point_segment_dist(points, g.segments).min(axis=-1, initial=np.inf)
    if g.circle_centers.size:
        dc = np.linalg.norm(points[..., None, :] - g.circle_centers, axis=-1)
        d = np.minimum(d, np.maximum(dc - g.circle_radii, 0.0).min(axis=-1))
    boxes = [(g.box_centers, g.box_halves)]
    dyn = world.dynamic_poses if dyn_centers is None else np.asarray(dyn_centers)
    if dyn.shape[-2] > 0:
        boxes.append((dyn, world.dynamic_half_extents))
    for centers, halves in boxes:
        if centers.size == 0:
            continue
        delta = np.maximum(np.abs(points[..., None, :] - centers) - halves, 0.0)
        d = np.minimum(d, np.linalg.norm(delta, axis=-1).min(axis=-1))
    return d


def min_clearance(world: World, point: Sequence[float]) -> float:
    """Euclidean distance from a point to the nearest obstacle or wall
    surface; 0 when the point is inside an obstacle."""
    return float(clearance_batch(world, np.asarray(point, dtype=np.float64).reshape(1, 2))[0])


def sample_free_pose(world: World, clearance: float, rng: np.random.Generator,
                     region: Box | None = None, max_attempts: int = 1000) -> Pose:
    """Uniformly sample a pose whose clearance is at least ``clearance``.

    Sampling is restricted to ``region`` when given, otherwise the whole
    arena. Raises SamplingExhaustedError after max_attempts rejections.
    """
    if region is None:
        e = world.spec.arena_half_extent
        cx, cy, hx, hy = 0.0, 0.0, e, e
    else:
        (cx, cy), (hx, hy) = region.center, region.half_extents
    for _ in range(max_attempts):
        x = rng.uniform(cx - hx, cx + hx)
        y = rng.uniform(cy - hy, cy + hy)
        if clearance_batch(world, np.asarray([[x, y]]))[0] >= clearance:
            return Pose(x, y, rng.uniform(-np.pi, np.pi))
    raise SamplingExhaustedError(
        f"no pose with clearance >= {clearance} found in {max_attempts} attempts")


# ---------------------------------------------------------------------------
# JSON form.

def _obstacle_to_dict(ob: Obstacle) -> dict:
    if isinstance(ob, Circle):
        return {"shape": "circle", "center": list(ob.center), "radius": ob.radius}
    if isinstance(ob, Box):
        return {"shape": "box", "center": list(ob.center),
                "half_extents": list(ob.half_extents)}
    return {"shape": "segment", "endpoints": [list(ob.p0), list(ob.p1)]}


def _obstacle_from_dict(d: dict, where: str) -> Obstacle:
    try:
        shape = d["shape"]
        if shape == "circle":
            return Circle(tuple(d["center"]), float(d["radius"]))
        if shape == "box":
            return Box(tuple(d["center"]), tuple(d["half_extents"]))
        if shape == "segment":
            p0, p1 = d["endpoints"]
            return Segment(tuple(p0), tuple(p1))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpecError(f"{where}: malformed obstacle entry ({exc})") from exc
    raise InvalidSpecError(f"{where}: unknown shape {shape!r}")


def spec_to_dict(spec: WorldSpec) -> dict:
    out: dict = {
        "schema_version": WORLD_SCHEMA_VERSION,
        "arena_half_extent": spec.arena_half_extent,
        "static_obstacles": [_obstacle_to_dict(ob) for ob in spec.static_obstacles],
        "dynamic_obstacles": [
            {
                "box": _obstacle_to_dict(d.box),
                "path": [list(d.path[0]), list(d.path[1])],
                "speed": d.speed,
                "phase": d.phase,
            }
            for d in spec.dynamic_obstacles
        ],
        "spawn_clearance": spec.spawn_clearance,
    }
    for name, region in (("goal_region", spec.goal_region), ("spawn_region", spec.spawn_region)):
        if region is not None:
            out[name] = {"center": list(region.center),
                         "half_extents": list(region.half_extents)}
    return out


def spec_from_dict(d: dict) -> WorldSpec:
    version = d.get("schema_version")
    if version != WORLD_SCHEMA_VERSION:
        raise InvalidSpecError(f"unsupported world schema_version {version!r}")
    try:
        statics = tuple(_obstacle_from_dict(ob, f"static_obstacles[{i}]")
                        for i, ob in enumerate(d.get("static_obstacles", [])))
        dynamics = []
        for i, dd in enumerate(d.get("dynamic_obstacles", [])):
            box = _obstacle_from_dict(dd["box"], f"dynamic_obstacles[{i}].box")
            if not isinstance(box, Box):
                raise InvalidSpecError(f"dynamic_obstacles[{i}].box: must be a box")
            p0, p1 = dd["path"]
            phase = dd.get("phase")
            dynamics.append(DynamicObstacleSpec(
                box, (tuple(p0), tuple(p1)), float(dd.get("speed", 0.2)),
                None if phase is None else float(phase)))
        regions = {}
        for name in ("goal_region", "spawn_region"):
            rd = d.get(name)
            if rd is not None:
                regions[name] = Box(tuple(rd["center"]), tuple(rd["half_extents"]))
        spec = WorldSpec(
            arena_half_extent=float(d.get("arena_half_extent", 4.0)),
            static_obstacles=statics,
            dynamic_obstacles=tuple(dynamics),
            goal_region=regions.get("goal_region"),
            spawn_region=regions.get("spawn_region"),
            spawn_clearance=float(d.get("spawn_clearance", 0.5)),
        )
    except InvalidSpecError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpecError(f"malformed world spec ({exc})") from exc
    validate_spec(spec)
    return spec


def save_spec(spec: WorldSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(spec_to_dict(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_spec(path) -> WorldSpec:
    with open(path) as fh:
        return spec_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Canned arenas.

def _static_default_obstacles() -> tuple[Obstacle, ...]:
    return (
        Box((1.5, 1.0), (0.35, 0.35)),
        Circle((-1.6, 1.8), 0.4),
        Box((-1.0, -1.6), (0.45, 0.3)),
        Circle((2.2, -1.5), 0.35),
        Box((0.2, 2.4), (0.3, 0.5)),
        Circle((-2.6, -0.2), 0.3),
    )


#: Names accepted by preset_world_spec.
WORLD_PRESETS = ("empty", "static_default", "crossing")


def preset_world_spec(name: str, dynamic_speed: float | None = None) -> WorldSpec:
    """Named arenas used by the shipped configs and the benchmark suite.

    - ``empty``: walls only.
    - ``static_default``: 8 m x 8 m with six fixed obstacles, 0.3 to 1.0 m.
    - ``crossing``: spawn region on the left, goal region on the right, one
      dynamic box patrolling across the route between them.
    """
    if name == "empty":
        return WorldSpec()
    if name == "static_default":
        return WorldSpec(static_obstacles=_static_default_obstacles(),
                         goal_region=Box((0.0, 0.0), (3.2, 3.2)))
    if name == "crossing":
        speed = 0.25 if dynamic_speed is None else dynamic_speed
        return WorldSpec(
            dynamic_obstacles=(DynamicObstacleSpec(
                box=Box((0.5, 0.0), (0.3, 0.3)),
                path=((0.5, -2.2), (0.5, 2.2)),
                speed=speed,
                phase=None), ),
            goal_region=Box((2.8, 0.0), (0.8, 2.0)),
            spawn_region=Box((-2.8, 0.0), (0.8, 2.0)),
        )
    raise InvalidSpecError(f"unknown world preset {name!r}")


def random_arena_spec(seed: int, n_obstacles: int | None = None,
                      half_extent: float = 4.0) -> WorldSpec:
    """Random walled arena with 4 to 8 static obstacles, sizes 0.3 to 1.0 m."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 9)) if n_obstacles is None else n_obstacles
    obstacles: list[Obstacle] = []
    margin = half_extent - 1.0
    for _ in range(n):
        cx, cy = rng.uniform(-margin, margin, size=2)
        size = rng.uniform(0.3, 1.0)
        if rng.uniform() < 0.5:
            obstacles.append(Circle((cx, cy), size / 2.0))
        else:
            second = float(np.clip(size * rng.uniform(0.6, 1.4), 0.3, 1.0))
            obstacles.append(Box((cx, cy), (size / 2.0, second / 2.0)))
    reach = max(half_extent - 0.8, 0.5)
    return WorldSpec(arena_half_extent=half_extent,
                     static_obstacles=tuple(obstacles),
                     goal_region=Box((0.0, 0.0), (reach, reach)))

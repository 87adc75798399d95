"""Synthetic 2D indoor worlds.

World frame: positions are ``(x, z)`` in meters; headings are degrees,
counter-clockwise positive, with heading 0 facing +x. Walls are vertical
and uniform in height, so a depth column is constant from top to bottom.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .perception import CameraIntrinsics, DepthFrame

SQRT2 = math.sqrt(2.0)
_EPS = 1e-12


class WorldLoadError(ValueError):
    """Schema or invariant violation in a world or episode file."""

    def __init__(self, message: str, field: str = "", line: Optional[int] = None):
        self.message = message
        self.field = field
        self.line = line
        where = f" (field {field!r}" + (f", line {line})" if line else ")") if field else ""
        super().__init__(message + where)


def normalize_heading(deg: float) -> float:
    h = math.fmod(deg, 360.0)
    if h < 0:
        h += 360.0
    return 0.0 if h == 360.0 else h


def signed_angle(deg: float) -> float:
    """Map an angle to (-180, 180]."""
    a = normalize_heading(deg)
    return a - 360.0 if a > 180.0 else a


@dataclass(frozen=True)
class AgentPose:
    x: float
    z: float
    heading: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.z) and math.isfinite(self.heading)):
            raise ValueError("pose must be finite")
        object.__setattr__(self, "heading", normalize_heading(self.heading))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.z)

    def to_json(self) -> dict:
        return {"x": self.x, "z": self.z, "heading": self.heading}

    @classmethod
    def from_json(cls, obj: Any) -> "AgentPose":
        if isinstance(obj, dict):
            return cls(float(obj["x"]), float(obj["z"]), float(obj.get("heading", 0.0)))
        return cls(*(float(v) for v in obj))


@dataclass(frozen=True)
class ActionCommand:
    turn: float = 0.0  # degrees, counter-clockwise positive
    forward: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "turn", signed_angle(self.turn))
        if not self.forward >= 0:
            raise ValueError("forward distance must be non-negative")


@dataclass(frozen=True)
class Bounds:
    xmin: float
    zmin: float
    xmax: float
    zmax: float

    def contains(self, x: float, z: float) -> bool:
        return self.xmin <= x <= self.xmax and self.zmin <= z <= self.zmax

    def edges(self) -> list[tuple[tuple[float, float], tuple[float, float]]]:
        a, b = (self.xmin, self.zmin), (self.xmax, self.zmin)
        c, d = (self.xmax, self.zmax), (self.xmin, self.zmax)
        return [(a, b), (b, c), (c, d), (d, a)]


@dataclass(frozen=True)
class WorldObject:
    tag: str
    center: tuple[float, float]
    radius: float


@dataclass(frozen=True)
class WorldMap:
    name: str
    bounds: Bounds
    walls: tuple = ()  # ((x1, z1), (x2, z2)) pairs
    objects: tuple = ()

    @property
    def wall_array(self) -> np.ndarray:
        """Walls as an ``(n, 2, 2)`` array."""
        if not self.walls:
            return np.zeros((0, 2, 2))
        return np.asarray(self.walls, dtype=float)

    def collision_walls(self) -> np.ndarray:
        """Walls plus the four boundary edges."""
        edges = np.asarray(self.bounds.edges(), dtype=float)
        return np.concatenate([self.wall_array, edges]) if self.walls else edges


@dataclass(frozen=True)
class EpisodeSpec:
    id: str
    world: str
    start: AgentPose
    goal: tuple[float, float]
    instruction: str
    success_radius: float = 3.0
    reference_path: tuple = ()
    subgoals: tuple = ()


@dataclass(frozen=True)
class RenderSettings:
    frontal: CameraIntrinsics = field(
        default_factory=lambda: CameraIntrinsics.from_fov(128, 96, 60.0)
    )
    panoramic: CameraIntrinsics = field(
        default_factory=lambda: CameraIntrinsics.from_fov(256, 192, 90.0)
    )
    max_range: float = 10.0

    def __post_init__(self):
        if self.panoramic.width != 256:
            raise ValueError("panoramic renders must be 256 columns wide")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")


# --------------------------------------------------------------------------
# geometry


def ray_segment_distances(origin: Sequence[float], angles: np.ndarray, walls: np.ndarray) -> np.ndarray:
    """Distance along each ray (world angle, radians) to the nearest wall; inf if none."""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    if len(walls) == 0:
        return np.full(angles.shape, np.inf)
    ox, oz = origin
    dx, dz = np.cos(angles)[:, None], np.sin(angles)[:, None]
    px, pz = walls[:, 0, 0][None, :], walls[:, 0, 1][None, :]
    ex = (walls[:, 1, 0] - walls[:, 0, 0])[None, :]
    ez = (walls[:, 1, 1] - walls[:, 0, 1])[None, :]
    wx, wz = px - ox, pz - oz
    denom = dx * ez - dz * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (wx * ez - wz * ex) / denom
        s = (wx * dz - wz * dx) / denom
    hit = (np.abs(denom) > _EPS) & (t > 1e-9) & (s >= -1e-12) & (s <= 1 + 1e-12)
    t = np.where(hit, t, np.inf)
    return t.min(axis=1)


def point_segment_distance(p: Sequence[float], a: Sequence[float], b: Sequence[float]) -> float:
    ax, az = a
    ex, ez = b[0] - ax, b[1] - az
    ll = ex * ex + ez * ez
    u = 0.0 if ll == 0 else max(0.0, min(1.0, ((p[0] - ax) * ex + (p[1] - az) * ez) / ll))
    return math.hypot(p[0] - (ax + u * ex), p[1] - (az + u * ez))


def points_walls_distance(points: np.ndarray, walls: np.ndarray) -> np.ndarray:
    """Distance from each of ``points`` (n, 2) to the nearest wall."""
    out = np.full(len(points), np.inf)
    for (ax, az), (bx, bz) in walls:
        ex, ez = bx - ax, bz - az
        ll = ex * ex + ez * ez
        u = ((points[:, 0] - ax) * ex + (points[:, 1] - az) * ez) / ll
        u = np.clip(u, 0.0, 1.0)
        d = np.hypot(points[:, 0] - (ax + u * ex), points[:, 1] - (az + u * ez))
        np.minimum(out, d, out=out)
    return out


def segment_blocked(p: Sequence[float], q: Sequence[float], walls: np.ndarray) -> bool:
    """True if the open segment p->q crosses any wall."""
    length = math.hypot(q[0] - p[0], q[1] - p[1])
    if length == 0 or len(walls) == 0:
        return False
    angle = math.atan2(q[1] - p[1], q[0] - p[0])
    return bool(ray_segment_distances(p, np.array([angle]), walls)[0] < length - 1e-9)


def _capsule_entry(p, d, a, b, r) -> float:
    """First t >= 0 where p + t*d comes within r of segment ab (d is unit)."""
    ax, az = a
    ex, ez = b[0] - ax, b[1] - az
    ll = ex * ex + ez * ez
    u = max(0.0, min(1.0, ((p[0] - ax) * ex + (p[1] - az) * ez) / ll))
    qx, qz = ax + u * ex, az + u * ez
    gap = math.hypot(p[0] - qx, p[1] - qz)
    if gap <= r + 1e-9:
        if gap == 0:
            return 0.0
        # distance along a ray is convex: moving away now means never closer
        slope = (d[0] * (p[0] - qx) + d[1] * (p[1] - qz)) / gap
        return 0.0 if slope < 0 else math.inf

    best = math.inf
    for cx, cz in (a, b):
        fx, fz = p[0] - cx, p[1] - cz
        bb = d[0] * fx + d[1] * fz
        disc = bb * bb - (fx * fx + fz * fz - r * r)
        if disc >= 0:
            t = -bb - math.sqrt(disc)
            if t >= 0:
                best = min(best, t)
    length = math.sqrt(ll)
    nx, nz = -ez / length, ex / length
    sp = (p[0] - ax) * nx + (p[1] - az) * nz
    dn = d[0] * nx + d[1] * nz
    if abs(dn) > _EPS:
        for target in (r, -r):
            t = (target - sp) / dn
            if t >= 0:
                hx, hz = p[0] + t * d[0], p[1] + t * d[1]
                uu = ((hx - ax) * ex + (hz - az) * ez) / ll
                if 0.0 <= uu <= 1.0:
                    best = min(best, t)
    return best


# --------------------------------------------------------------------------
# rendering and motion


def _require_inside(world: WorldMap, pose: AgentPose) -> None:
    if not world.bounds.contains(pose.x, pose.z):
        raise ValueError(f"pose ({pose.x:.3f}, {pose.z:.3f}) outside world {world.name!r}")


def column_world_angles(pose: AgentPose, heading_offset: float, intr: CameraIntrinsics) -> np.ndarray:
    """World angle (radians, CCW) of each column ray.

    ``heading_offset`` and column angles are right-positive, the pose
    heading is left-positive, hence the subtraction.
    """
    return np.radians(pose.heading - heading_offset - intr.column_angles())


def column_ranges(
    world: WorldMap, pose: AgentPose, heading_offset: float, intr: CameraIntrinsics, max_range: float
) -> np.ndarray:
    """Euclidean ray range per column, capped at ``max_range``."""
    _require_inside(world, pose)
    angles = column_world_angles(pose, heading_offset, intr)
    r = ray_segment_distances(pose.position, angles, world.wall_array)
    return np.minimum(r, max_range)


def render_depth(
    world: WorldMap,
    pose: AgentPose,
    heading_offset: float,
    rs: RenderSettings,
    panoramic: bool = False,
) -> DepthFrame:
    """Planar depth image (z-range along the optical axis) for one view."""
    intr = rs.panoramic if panoramic else rs.frontal
    ranges = column_ranges(world, pose, heading_offset, intr, rs.max_range)
    depth = ranges * np.cos(np.radians(intr.column_angles()))
    grid = np.broadcast_to(depth, (intr.height, intr.width)).copy()
    return DepthFrame(intr.width, intr.height, grid, heading_offset)


def execute_action(
    world: WorldMap, pose: AgentPose, cmd: ActionCommand, collision_margin: float = 0.2
) -> tuple[AgentPose, bool]:
    """Turn, then move forward, stopping before coming within the margin of a wall."""
    _require_inside(world, pose)
    heading = normalize_heading(pose.heading + cmd.turn)
    if cmd.forward <= 0:
        return AgentPose(pose.x, pose.z, heading), False
    rad = math.radians(heading)
    d = (math.cos(rad), math.sin(rad))
    p = pose.position
    limit = math.inf
    for a, b in world.collision_walls().tolist():
        limit = min(limit, _capsule_entry(p, d, tuple(a), tuple(b), collision_margin))
    step = cmd.forward
    clamped = False
    if limit < step:
        step, clamped = max(0.0, limit), True
    return AgentPose(p[0] + step * d[0], p[1] + step * d[1], heading), clamped


# --------------------------------------------------------------------------
# geodesics


@dataclass(frozen=True)
class OccupancyGrid:
    """Node lattice over the world bounds; ``free[i, k]`` is node (x_i, z_k)."""

    origin: tuple[float, float]
    resolution: float
    free: np.ndarray

    def node(self, p: Sequence[float]) -> tuple[int, int]:
        i = int(round((p[0] - self.origin[0]) / self.resolution))
        k = int(round((p[1] - self.origin[1]) / self.resolution))
        nx, nz = self.free.shape
        return min(max(i, 0), nx - 1), min(max(k, 0), nz - 1)


def occupancy_grid(world: WorldMap, resolution: float = 0.1, collision_margin: float = 0.2) -> OccupancyGrid:
    """Inflated occupancy lattice.

    A node is blocked when it lies within the collision margin of a wall, or
    within half a diagonal step, so no grid move can jump through a thin wall.
    """
    b = world.bounds
    nx = int(math.floor((b.xmax - b.xmin) / resolution + 1e-9)) + 1
    nz = int(math.floor((b.zmax - b.zmin) / resolution + 1e-9)) + 1
    xs = b.xmin + resolution * np.arange(nx)
    zs = b.zmin + resolution * np.arange(nz)
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    pts = np.column_stack([gx.ravel(), gz.ravel()])
    dist = points_walls_distance(pts, world.collision_walls())
    inflate = max(collision_margin, resolution * SQRT2 / 2)
    free = (dist >= inflate).reshape(nx, nz)
    return OccupancyGrid((b.xmin, b.zmin), resolution, free)


_MOVES = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]


def grid_neighbors(free: np.ndarray, i: int, k: int):
    """8-connected moves; diagonals may not cut a blocked corner."""
    nx, nz = free.shape
    for di, dk in _MOVES:
        a, c = i + di, k + dk
        if not (0 <= a < nx and 0 <= c < nz) or not free[a, c]:
            continue
        if di and dk and not (free[i + di, k] and free[i, k + dk]):
            continue
        yield a, c, (di != 0 and dk != 0)


def grid_path_counts(grid: OccupancyGrid, a: Sequence[float], b: Sequence[float]) -> Optional[tuple[int, int]]:
    """Shortest path as (straight steps, diagonal steps), or None if unreachable."""
    free = grid.free.copy()
    s, g = grid.node(a), grid.node(b)
    free[s] = free[g] = True
    best = {s: (0.0, 0, 0)}
    heap = [(0.0, 0, 0, s)]
    while heap:
        cost, n_orth, n_diag, node = heapq.heappop(heap)
        if node == g:
            return n_orth, n_diag
        if best[node][0] < cost:
            continue
        for i, k, diag in grid_neighbors(free, *node):
            o, dg = (n_orth, n_diag + 1) if diag else (n_orth + 1, n_diag)
            c = o + dg * SQRT2
            prev = best.get((i, k))
            if prev is None or c < prev[0]:
                best[(i, k)] = (c, o, dg)
                heapq.heappush(heap, (c, o, dg, (i, k)))
    return None


def geodesic_distance(
    world: WorldMap,
    a: Sequence[float],
    b: Sequence[float],
    resolution: float = 0.1,
    collision_margin: float = 0.2,
) -> float:
    """Shortest collision-free path length on the inflated lattice; inf if unreachable."""
    grid = occupancy_grid(world, resolution, collision_margin)
    counts = grid_path_counts(grid, a, b)
    if counts is None:
        return math.inf
    n_orth, n_diag = counts
    return (n_orth + n_diag * SQRT2) * resolution


# --------------------------------------------------------------------------
# file loading


class _Located:
    """JSON text parsed with the source offset of every value, keyed by path."""

    def __init__(self, text: str):
        self.text = text
        self.offsets: dict[str, int] = {}
        self._dec = json.JSONDecoder()
        try:
            self.value, end = self._parse(self._skip(0), "")
        except json.JSONDecodeError as exc:
            raise WorldLoadError(f"invalid JSON: {exc.msg}", "<document>", exc.lineno) from None
        if self._skip(end) != len(text):
            raise WorldLoadError("trailing data after JSON document", "<document>", self.line_at(end))

    def _skip(self, i: int) -> int:
        while i < len(self.text) and self.text[i] in " \t\r\n":
            i += 1
        return i

    def _fail(self, msg: str, i: int):
        raise json.JSONDecodeError(msg, self.text, i)

    def _parse(self, i: int, path: str):
        self.offsets[path] = i
        ch = self.text[i : i + 1]
        if ch == "{":
            out = {}
            i = self._skip(i + 1)
            if self.text[i : i + 1] == "}":
                return out, i + 1
            while True:
                key, i = self._dec.raw_decode(self.text, i)
                if not isinstance(key, str):
                    self._fail("expected string key", i)
                i = self._skip(i)
                if self.text[i : i + 1] != ":":
                    self._fail("expected ':'", i)
                out[key], i = self._parse(self._skip(i + 1), f"{path}.{key}" if path else key)
                i = self._skip(i)
                if self.text[i : i + 1] == ",":
                    i = self._skip(i + 1)
                    continue
                if self.text[i : i + 1] == "}":
                    return out, i + 1
                self._fail("expected ',' or '}'", i)
        if ch == "[":
            out = []
            i = self._skip(i + 1)
            if self.text[i : i + 1] == "]":
                return out, i + 1
            while True:
                val, i = self._parse(i, f"{path}[{len(out)}]")
                out.append(val)
                i = self._skip(i)
                if self.text[i : i + 1] == ",":
                    i = self._skip(i + 1)
                    continue
                if self.text[i : i + 1] == "]":
                    return out, i + 1
                self._fail("expected ',' or ']'", i)
        return self._dec.raw_decode(self.text, i)

    def line_at(self, offset: int) -> int:
        return self.text.count("\n", 0, offset) + 1

    def line(self, path: str) -> Optional[int]:
        while path:
            if path in self.offsets:
                return self.line_at(self.offsets[path])
            path = path.rsplit(".", 1)[0] if "." in path else path.rsplit("[", 1)[0] if "[" in path else ""
        return None

    def error(self, message: str, path: str) -> WorldLoadError:
        return WorldLoadError(message, path, self.line(path))


def _number(doc: _Located, value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise doc.error("expected a finite number", path)
    return float(value)


def _point(doc: _Located, value, path: str) -> tuple[float, float]:
    if not isinstance(value, list) or len(value) != 2:
        raise doc.error("expected an [x, z] pair", path)
    return (_number(doc, value[0], f"{path}[0]"), _number(doc, value[1], f"{path}[1]"))


def _require(doc: _Located, obj: dict, key: str, path: str):
    if not isinstance(obj, dict):
        raise doc.error("expected an object", path)
    if key not in obj:
        raise doc.error(f"missing required field {key!r}", path or key)
    return obj[key]


def parse_world(text: str) -> WorldMap:
    doc = _Located(text)
    raw = doc.value
    name = _require(doc, raw, "name", "")
    if not isinstance(name, str) or not name:
        raise doc.error("world name must be a non-empty string", "name")
    bvals = _require(doc, raw, "bounds", "")
    if not isinstance(bvals, list) or len(bvals) != 4:
        raise doc.error("bounds must be [xmin, zmin, xmax, zmax]", "bounds")
    bounds = Bounds(*(_number(doc, v, f"bounds[{i}]") for i, v in enumerate(bvals)))
    if not (bounds.xmin < bounds.xmax and bounds.zmin < bounds.zmax):
        raise doc.error("bounds must have positive extent", "bounds")

    walls = []
    for i, w in enumerate(raw.get("walls", [])):
        path = f"walls[{i}]"
        if not isinstance(w, list) or len(w) != 2:
            raise doc.error("wall must be [[x1, z1], [x2, z2]]", path)
        a, b = _point(doc, w[0], f"{path}[0]"), _point(doc, w[1], f"{path}[1]")
        if math.hypot(b[0] - a[0], b[1] - a[1]) <= 0:
            raise doc.error("wall segment has zero length", path)
        for p in (a, b):
            if not bounds.contains(*p):
                raise doc.error("wall endpoint outside bounds", path)
        walls.append((a, b))

    objects = []
    for i, o in enumerate(raw.get("objects", [])):
        path = f"objects[{i}]"
        tag = _require(doc, o, "tag", path)
        if not isinstance(tag, str) or not tag.strip() or tag != tag.lower():
            raise doc.error("tag must be a non-empty lowercase string", f"{path}.tag")
        center = _point(doc, _require(doc, o, "center", path), f"{path}.center")
        radius = _number(doc, _require(doc, o, "radius", path), f"{path}.radius")
        if radius <= 0:
            raise doc.error("radius must be positive", f"{path}.radius")
        if not bounds.contains(*center):
            raise doc.error("object centre outside bounds", f"{path}.center")
        objects.append(WorldObject(tag.strip(), center, radius))
    return WorldMap(name, bounds, tuple(walls), tuple(objects))


def parse_episode(text: str, default_id: str = "", world: Optional[WorldMap] = None) -> EpisodeSpec:
    """Parse an episode; if ``world`` is given, start and goal are checked against its bounds."""
    doc = _Located(text)
    raw = doc.value
    ep_id = raw.get("id", default_id) if isinstance(raw, dict) else default_id
    if not isinstance(ep_id, str) or not ep_id:
        raise doc.error("episode id must be a non-empty string", "id")
    world_name = _require(doc, raw, "world", "")
    if not isinstance(world_name, str) or not world_name:
        raise doc.error("world must be a non-empty string", "world")
    s = _require(doc, raw, "start", "")
    if not isinstance(s, dict):
        raise doc.error("start must be {x, z, heading}", "start")
    start = AgentPose(
        _number(doc, _require(doc, s, "x", "start"), "start.x"),
        _number(doc, _require(doc, s, "z", "start"), "start.z"),
        _number(doc, s.get("heading", 0.0), "start.heading"),
    )
    goal = _point(doc, _require(doc, raw, "goal", ""), "goal")
    instruction = _require(doc, raw, "instruction", "")
    if not isinstance(instruction, str) or not instruction.strip():
        raise doc.error("instruction must be non-empty text", "instruction")
    radius = _number(doc, raw.get("success_radius", 3.0), "success_radius")
    if radius <= 0:
        raise doc.error("success_radius must be positive", "success_radius")
    ref = tuple(
        _point(doc, p[:2] if isinstance(p, list) else p, f"reference_path[{i}]")
        for i, p in enumerate(raw.get("reference_path", []))
    )
    subgoals = raw.get("subgoals", [])
    if not isinstance(subgoals, list) or not all(isinstance(g, str) and g.strip() for g in subgoals):
        raise doc.error("subgoals must be a list of non-empty strings", "subgoals")
    if world is not None:
        if world.name != world_name:
            raise doc.error(f"episode refers to world {world_name!r}, got {world.name!r}", "world")
        if not world.bounds.contains(start.x, start.z):
            raise doc.error("start outside world bounds", "start")
        if not world.bounds.contains(*goal):
            raise doc.error("goal outside world bounds", "goal")
    return EpisodeSpec(
        id=ep_id,
        world=world_name,
        start=start,
        goal=goal,
        instruction=instruction.strip(),
        success_radius=radius,
        reference_path=ref,
        subgoals=tuple(g.strip() for g in subgoals),
    )


def load_world(path) -> WorldMap:
    path = Path(path)
    try:
        return parse_world(path.read_text())
    except WorldLoadError as exc:
        raise WorldLoadError(f"{path}: {exc.message}", exc.field, exc.line) from None


def load_episode(path, world: Optional[WorldMap] = None) -> EpisodeSpec:
    path = Path(path)
    try:
        return parse_episode(path.read_text(), default_id=path.stem, world=world)
    except WorldLoadError as exc:
        raise WorldLoadError(f"{path}: {exc.message}", exc.field, exc.line) from None

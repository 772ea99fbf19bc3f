"""The simulated world: arena, annotated boxes, agent motion and sensing.

Everything is vectorized over agents with numpy; a single agent is just
arrays of length one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classes import ClassModel


@dataclass(frozen=True)
class SceneObject:
    object_id: int
    label: int
    center: tuple[float, float, float]
    dims: tuple[float, float, float]  # depth (along yaw), width, height
    yaw: float

    @property
    def facing(self) -> np.ndarray:
        return np.array([math.cos(self.yaw), math.sin(self.yaw)])

    def front_corners(self) -> np.ndarray:
        """Bottom and top corners of the face the box points at, shape (4, 3)."""
        cx, cy, cz = self.center
        depth, width, height = self.dims
        u = self.facing
        v = np.array([-u[1], u[0]])
        face = np.array([cx, cy]) + u * depth / 2
        pts = []
        for side in (-1, 1):
            xy = face + side * v * width / 2
            for dz in (-height / 2, height / 2):
                pts.append((xy[0], xy[1], cz + dz))
        return np.array(pts)

    def front_right(self) -> tuple[float, float, float]:
        """Vector from the center to the front-right-top corner."""
        depth, width, height = self.dims
        u = self.facing
        right = np.array([u[1], -u[0]])
        xy = u * depth / 2 + right * width / 2
        return float(xy[0]), float(xy[1]), height / 2

    def footprint_radius(self) -> float:
        return 0.5 * math.hypot(self.dims[0], self.dims[1])


@dataclass(frozen=True)
class FrustumSpec:
    near: float = 0.2
    far: float = 1.5
    hfov: float = math.radians(60)
    vfov: float = math.radians(60)
    mount_height: float = 0.1

    def __post_init__(self):
        if not 0 <= self.near < self.far:
            raise ValueError(f"need 0 <= near < far, got {self.near}, {self.far}")
        for fov in (self.hfov, self.vfov):
            if not 0 < fov < math.pi:
                raise ValueError(f"field of view must lie in (0, pi): {fov}")


class Scene:
    """Static boxes inside a square arena ``[0, size] x [0, size]``."""

    def __init__(self, objects: list[SceneObject], size: float):
        self.objects = list(objects)
        self.size = float(size)
        for ob in self.objects:
            x, y, _ = ob.center
            if not (0 <= x <= size and 0 <= y <= size):
                raise ValueError(f"object {ob.object_id} lies outside the arena")
        n = len(self.objects)
        self.centers = np.array([o.center for o in self.objects], dtype=float).reshape(n, 3)
        self.half = np.array([[o.dims[0] / 2, o.dims[1] / 2] for o in self.objects]).reshape(n, 2)
        yaw = np.array([o.yaw for o in self.objects], dtype=float)
        self.cos, self.sin = np.cos(yaw), np.sin(yaw)
        self.corners = np.array([o.front_corners() for o in self.objects]).reshape(n, 4, 3)
        self.face_centers = self.corners[:, :, :2].mean(axis=1)
        self.facing = np.stack([self.cos, self.sin], axis=1)
        self.labels = np.array([o.label for o in self.objects], dtype=int)
        self._by_xy = {}

    def __len__(self) -> int:
        return len(self.objects)

    def locate(self, x: float, y: float, tol: float = 1e-3) -> int | None:
        """Index of the object whose center is at (x, y), if any."""
        key = (round(x, 3), round(y, 3))
        hit = self._by_xy.get(key)
        if hit is not None:
            return hit
        d = np.hypot(self.centers[:, 0] - x, self.centers[:, 1] - y)
        if len(d) == 0:
            return None
        k = int(np.argmin(d))
        if d[k] > tol:
            return None
        self._by_xy[key] = k
        return k

    def box_distance(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Distance from each point to each box footprint and the unit push-away vector.

        Returns ``(dist (P, B), away (P, B, 2))``.
        """
        d = points[:, None, :] - self.centers[None, :, :2]
        lx = d[..., 0] * self.cos + d[..., 1] * self.sin
        ly = -d[..., 0] * self.sin + d[..., 1] * self.cos
        cx = np.clip(lx, -self.half[:, 0], self.half[:, 0])
        cy = np.clip(ly, -self.half[:, 1], self.half[:, 1])
        ex, ey = lx - cx, ly - cy
        dist = np.hypot(ex, ey)
        wx = ex * self.cos - ey * self.sin
        wy = ex * self.sin + ey * self.cos
        with np.errstate(invalid="ignore", divide="ignore"):
            away = np.stack([wx, wy], axis=-1) / dist[..., None]
        away = np.nan_to_num(away)
        return dist, away

    # -- text format: ``id class cx cy cz dx dy dz yaw`` -------------------

    def save(self, path: str | Path, model: ClassModel) -> None:
        with open(path, "w") as fh:
            fh.write(f"# arena {self.size}\n")
            for o in self.objects:
                fh.write(
                    f"{o.object_id} {model.name(o.label)} "
                    + " ".join(f"{v:.6f}" for v in (*o.center, *o.dims, o.yaw))
                    + "\n"
                )

    @classmethod
    def load(cls, path: str | Path, model: ClassModel, size: float | None = None) -> "Scene":
        objects = []
        arena = size
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                tokens = line[1:].split()
                if arena is None and len(tokens) == 2 and tokens[0] == "arena":
                    arena = float(tokens[1])
                continue
            tokens = line.split()
            if len(tokens) != 9:
                raise ValueError(f"{path}:{lineno}: expected 9 fields, got {len(tokens)}")
            label = int(tokens[1]) if tokens[1].isdigit() else model.id_of(tokens[1])
            model.index(label)
            v = [float(t) for t in tokens[2:]]
            objects.append(SceneObject(int(tokens[0]), label, tuple(v[0:3]), tuple(v[3:6]), v[6]))
        return cls(objects, 8.0 if arena is None else arena)


def generate_scene(
    model: ClassModel,
    rng: np.random.Generator,
    n_objects: int = 40,
    size: float = 8.0,
    clearance: float = 0.3,
    max_width: float = 0.8,
    max_depth: float = 0.6,
    max_height: float = 0.8,
) -> Scene:
    """Random non-overlapping boxes, each facing the center of its quadrant.

    Every class appears at least once when ``n_objects >= c``.
    """
    labels = list(model.ids)[:n_objects]
    labels += [int(x) for x in rng.integers(1, model.c + 1, size=n_objects - len(labels))]
    rng.shuffle(labels)
    half = size / 2
    rooms = [(half / 2 + i * half, half / 2 + j * half) for i in (0, 1) for j in (0, 1)]
    placed: list[SceneObject] = []
    for k, label in enumerate(labels):
        for _ in range(10_000):
            depth = rng.uniform(0.2, max_depth)
            width = rng.uniform(0.2, max_width)
            height = rng.uniform(0.2, max_height)
            radius = 0.5 * math.hypot(depth, width)
            margin = radius + clearance
            x, y = rng.uniform(margin, size - margin, size=2)
            if any(
                math.hypot(x - o.center[0], y - o.center[1]) < radius + o.footprint_radius() + clearance
                for o in placed
            ):
                continue
            rx, ry = rooms[int(x >= half) * 2 + int(y >= half)]
            yaw = math.atan2(ry - y, rx - x) if (rx, ry) != (x, y) else 0.0
            placed.append(SceneObject(k, label, (x, y, height / 2), (depth, width, height), yaw))
            break
        else:
            raise RuntimeError(f"could not place object {k} after 10000 tries")
    return Scene(placed, size)


# -- agents --------------------------------------------------------------------


@dataclass
class MotionSpec:
    speed: float = 0.05
    dt: float = 0.1
    radius: float = 0.07
    avoid_range: float = 0.15
    jitter: float = 0.05


def diffusion_step(
    pos: np.ndarray,
    heading: np.ndarray,
    scene: Scene,
    rng: np.random.Generator,
    motion: MotionSpec,
    frozen: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Advance every agent one tick of diffusion with obstacle avoidance.

    An agent with an obstacle ahead inside ``avoid_range`` turns its heading
    away from the summed repulsion, then every agent jitters its heading by
    a small normal draw and moves forward unless that would bring it within
    ``radius`` of a wall or box. Other agents repel but do not block.
    """
    pos = np.asarray(pos, dtype=float)
    heading = np.asarray(heading, dtype=float)
    n = len(pos)
    noise = rng.normal(0.0, motion.jitter, size=n) if motion.jitter > 0 else np.zeros(n)
    if frozen:
        return pos.copy(), heading.copy()
    size = scene.size
    reach = motion.avoid_range

    rep = np.zeros((n, 2))
    # walls
    for axis, sign, dist in (
        (0, 1.0, pos[:, 0]),
        (0, -1.0, size - pos[:, 0]),
        (1, 1.0, pos[:, 1]),
        (1, -1.0, size - pos[:, 1]),
    ):
        w = np.clip((reach - (dist - motion.radius)) / reach, 0.0, None)
        rep[:, axis] += sign * w
    if len(scene):
        dist, away = scene.box_distance(pos)
        w = np.clip((reach - (dist - motion.radius)) / reach, 0.0, None)
        rep += (away * w[..., None]).sum(axis=1)
    if n > 1:
        d = pos[:, None, :] - pos[None, :, :]
        dd = np.hypot(d[..., 0], d[..., 1])
        np.fill_diagonal(dd, np.inf)
        w = np.clip((reach - (dd - 2 * motion.radius)) / reach, 0.0, None)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.nan_to_num(d / dd[..., None])
        rep += (unit * w[..., None]).sum(axis=1)

    hx, hy = np.cos(heading), np.sin(heading)
    norm = np.hypot(rep[:, 0], rep[:, 1])
    toward = (hx * rep[:, 0] + hy * rep[:, 1]) < 0
    turn = (norm > 0) & toward
    if turn.any():
        nx = rep[turn, 0] / norm[turn]
        ny = rep[turn, 1] / norm[turn]
        dot = hx[turn] * nx + hy[turn] * ny
        rx, ry = hx[turn] - 2 * dot * nx, hy[turn] - 2 * dot * ny
        heading = heading.copy()
        heading[turn] = np.arctan2(ry, rx)
    heading = np.mod(heading + noise + math.pi, 2 * math.pi) - math.pi

    step = motion.speed * motion.dt
    cand = pos + step * np.stack([np.cos(heading), np.sin(heading)], axis=1)
    ok = (
        (cand[:, 0] >= motion.radius)
        & (cand[:, 0] <= size - motion.radius)
        & (cand[:, 1] >= motion.radius)
        & (cand[:, 1] <= size - motion.radius)
    )
    if len(scene):
        bd, _ = scene.box_distance(cand)
        ok &= (bd >= motion.radius).all(axis=1)
    new_pos = np.where(ok[:, None], cand, pos)
    # blocked agents spin in place so they do not stay stuck
    if not ok.all():
        heading = heading.copy()
        heading[~ok] = np.mod(heading[~ok] + math.pi / 2 + math.pi, 2 * math.pi) - math.pi
    return new_pos, heading


def neighbor_graph(pos: np.ndarray, comm_range: float) -> np.ndarray:
    """Symmetric boolean adjacency; an edge iff distance <= range (no self loops)."""
    pos = np.asarray(pos, dtype=float)
    d = pos[:, None, :] - pos[None, :, :]
    adj = np.hypot(d[..., 0], d[..., 1]) <= comm_range
    np.fill_diagonal(adj, False)
    return adj


def in_frustum(
    pos: np.ndarray, heading: float, frustum: FrustumSpec, points: np.ndarray
) -> np.ndarray:
    """Which 3D ``points`` (..., 3) lie inside the sensor volume of one agent."""
    c, s = math.cos(heading), math.sin(heading)
    rx = points[..., 0] - pos[0]
    ry = points[..., 1] - pos[1]
    fwd = rx * c + ry * s
    lat = -rx * s + ry * c
    up = points[..., 2] - frustum.mount_height
    return (
        (fwd >= frustum.near)
        & (fwd <= frustum.far)
        & (np.abs(lat) <= fwd * math.tan(frustum.hfov / 2))
        & (np.abs(up) <= fwd * math.tan(frustum.vfov / 2))
    )


def frustum_detect(
    pos: np.ndarray, heading: float, frustum: FrustumSpec, scene: Scene
) -> int | None:
    """Index of the nearest object whose four front corners are all in view.

    The agent must also be in front of that face.
    """
    if not len(scene):
        return None
    inside = in_frustum(pos, heading, frustum, scene.corners).all(axis=1)
    to_agent = np.asarray(pos)[None, :] - scene.face_centers
    inside &= (to_agent * scene.facing).sum(axis=1) > 0
    if not inside.any():
        return None
    cand = np.flatnonzero(inside)
    d = np.hypot(scene.centers[cand, 0] - pos[0], scene.centers[cand, 1] - pos[1])
    return int(cand[np.argmin(d)])


def detect_all(
    pos: np.ndarray,
    heading: np.ndarray,
    frustum: FrustumSpec,
    scene: Scene,
    active: np.ndarray | None = None,
) -> list[int | None]:
    """Vectorized :func:`frustum_detect` for every agent (None where inactive)."""
    n = len(pos)
    out: list[int | None] = [None] * n
    if not len(scene):
        return out
    idx = np.arange(n) if active is None else np.flatnonzero(active)
    if len(idx) == 0:
        return out
    p = pos[idx]
    c, s = np.cos(heading[idx]), np.sin(heading[idx])
    rx = scene.corners[None, :, :, 0] - p[:, None, None, 0]
    ry = scene.corners[None, :, :, 1] - p[:, None, None, 1]
    fwd = rx * c[:, None, None] + ry * s[:, None, None]
    lat = -rx * s[:, None, None] + ry * c[:, None, None]
    up = scene.corners[None, :, :, 2] - frustum.mount_height
    ok = (
        (fwd >= frustum.near)
        & (fwd <= frustum.far)
        & (np.abs(lat) <= fwd * math.tan(frustum.hfov / 2))
        & (np.abs(up) <= fwd * math.tan(frustum.vfov / 2))
    ).all(axis=2)
    ta = p[:, None, :] - scene.face_centers[None, :, :]
    ok &= (ta * scene.facing[None, :, :]).sum(axis=2) > 0
    d = np.hypot(scene.centers[None, :, 0] - p[:, 0:1], scene.centers[None, :, 1] - p[:, 1:2])
    d = np.where(ok, d, np.inf)
    best = np.argmin(d, axis=1)
    for row, agent in enumerate(idx):
        if ok[row, best[row]]:
            out[agent] = int(best[row])
    return out


def classifier_sample(true_class: int, model: ClassModel, rng: np.random.Generator) -> int:
    """Correct label with the class accuracy, else a uniformly drawn wrong class."""
    p = model.p(true_class)
    if rng.random() < p:
        return true_class
    wrong = int(rng.integers(1, model.c))
    return wrong if wrong < true_class else wrong + 1

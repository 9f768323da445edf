"""Seeded synthetic LiDAR sequences with exact ground truth.

Rays are cast through every range-image cell center against an analytic
scene: a ground surface (flat, sloped or sinusoidal), oriented boxes,
walls (thin boxes) and vertical cylindrical poles. Every point carries the
identity of the surface it hit, so ground labels are exact.

The world frame has z up with the nominal ground at z = 0; trajectory poses
are world poses of the sensor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import ProjectionConfig, SE3Pose, Scan, se3_compose, se3_inverse
from ..segmentation import GroundLabelSet


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class GroundModel:
    kind: str = "flat"  # flat | sloped | sinusoid
    height: float = 0.0
    slope_x: float = 0.0  # dz/dx for "sloped"
    slope_y: float = 0.0
    amplitude: float = 0.0  # "sinusoid"
    wavelength: float = 10.0
    direction: float = 0.0  # degrees; undulation varies along this heading

    def __post_init__(self):
        if self.kind not in ("flat", "sloped", "sinusoid"):
            raise SpecError(f"unknown ground model {self.kind!r}")
        if self.kind == "sinusoid" and (self.wavelength <= 0 or self.amplitude < 0):
            raise SpecError("sinusoid needs positive wavelength and non-negative amplitude")

    def height_at(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "flat":
            return np.full(np.broadcast(x, y).shape, self.height)
        if self.kind == "sloped":
            return self.height + self.slope_x * x + self.slope_y * y
        phi = math.radians(self.direction)
        s = x * math.cos(phi) + y * math.sin(phi)
        return self.height + self.amplitude * np.sin(2 * np.pi * s / self.wavelength)


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    yaw: float = 0.0  # radians


@dataclass(frozen=True)
class Wall:
    start: tuple[float, float]
    end: tuple[float, float]
    height: float = 6.0
    thickness: float = 0.3
    base: float = -0.5

    def as_box(self) -> Box:
        (x0, y0), (x1, y1) = self.start, self.end
        length = math.hypot(x1 - x0, y1 - y0)
        center = ((x0 + x1) / 2, (y0 + y1) / 2, self.base + self.height / 2)
        return Box(center, (length, self.thickness, self.height), math.atan2(y1 - y0, x1 - x0))


@dataclass(frozen=True)
class Pole:
    x: float
    y: float
    radius: float = 0.1
    height: float = 5.0
    base: float = -0.5


@dataclass(frozen=True)
class SensorModel:
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    mount_height: float = 1.73
    max_range: float = 100.0
    min_range: float = 0.5
    range_noise: float = 0.0  # std of additive range noise, meters


@dataclass(frozen=True)
class SyntheticSceneSpec:
    seed: int = 0
    ground: GroundModel = field(default_factory=GroundModel)
    boxes: tuple[Box, ...] = ()
    walls: tuple[Wall, ...] = ()
    poles: tuple[Pole, ...] = ()
    sensor: SensorModel = field(default_factory=SensorModel)
    trajectory: tuple[SE3Pose, ...] = ()

    def __post_init__(self):
        for name in ("boxes", "walls", "poles", "trajectory"):
            object.__setattr__(self, name, tuple(getattr(self, name)))


@dataclass(frozen=True, eq=False)
class SyntheticFrame:
    scan: Scan
    truth: GroundLabelSet
    pose: SE3Pose  # world pose of the sensor
    surface: np.ndarray  # per point: -1 ground, 0.. object id


# ---------------------------------------------------------------------------
# ray / surface intersections; all return (N,) hit distance or inf


def _hit_plane_ground(g: GroundModel, o, d):
    denom = d[:, 2] - g.slope_x * d[:, 0] - g.slope_y * d[:, 1]
    num = g.height + g.slope_x * o[0] + g.slope_y * o[1] - o[2]
    t = np.full(len(d), np.inf)
    ok = denom < -1e-12
    t[ok] = num / denom[ok]
    t[t <= 0] = np.inf
    return t


def _hit_sinusoid(g: GroundModel, o, d, t_max: float):
    def f(t, idx):
        p = o + t[:, None] * d[idx]
        return p[:, 2] - g.height_at(p[:, 0], p[:, 1])

    n = len(d)
    t_hit = np.full(n, np.inf)
    top, bottom = g.height + g.amplitude, g.height - g.amplitude
    dz = d[:, 2]
    t_lo = np.zeros(n)
    t_hi = np.full(n, t_max)
    down = dz < -1e-12
    up = dz > 1e-12
    t_lo[down] = np.maximum(0.0, (o[2] - top) / -dz[down])
    t_hi[down] = np.minimum(t_max, (o[2] - bottom) / -dz[down])
    if o[2] >= top:
        t_hi[~down] = -1.0
    else:
        t_hi[up] = np.minimum(t_max, (top - o[2]) / dz[up])
    horiz = np.maximum(np.hypot(d[:, 0], d[:, 1]), 1e-6)
    dt = np.minimum((g.wavelength / 32.0) / horiz, np.maximum(t_hi - t_lo, 1e-9))

    active = np.flatnonzero(t_hi > t_lo)
    t_prev = t_lo[active]
    f_prev = f(t_prev, active)
    hit0 = f_prev <= 0
    t_hit[active[hit0]] = t_prev[hit0]
    active, t_prev, f_prev = active[~hit0], t_prev[~hit0], f_prev[~hit0]
    brackets = []
    while len(active):
        t_cur = np.minimum(t_prev + dt[active], t_hi[active])
        f_cur = f(t_cur, active)
        crossed = f_cur <= 0
        if np.any(crossed):
            brackets.append((active[crossed], t_prev[crossed], t_cur[crossed]))
        done = crossed | (t_cur >= t_hi[active])
        active, t_prev, f_prev = active[~done], t_cur[~done], f_cur[~done]

    for idx, a, b in brackets:
        for _ in range(50):
            mid = 0.5 * (a + b)
            below = f(mid, idx) <= 0
            b = np.where(below, mid, b)
            a = np.where(below, a, mid)
        t_hit[idx] = b
    return t_hit


def _hit_box(box: Box, o, d):
    c, s = math.cos(-box.yaw), math.sin(-box.yaw)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    ol = R @ (o - np.asarray(box.center))
    dl = d @ R.T
    half = np.asarray(box.size) / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dl
        t1 = (-half - ol) * inv
        t2 = (half - ol) * inv
    # parallel rays: inside the slab -> unbounded, outside -> miss
    par = dl == 0
    inside = np.abs(ol) <= half
    t1 = np.where(par, np.where(inside, -np.inf, np.inf), t1)
    t2 = np.where(par, np.where(inside, np.inf, -np.inf), t2)
    tn = np.minimum(t1, t2).max(axis=1)
    tf = np.maximum(t1, t2).min(axis=1)
    t = np.where((tn <= tf) & (tn > 0), tn, np.inf)
    return t


def _hit_pole(p: Pole, o, d):
    ox, oy = o[0] - p.x, o[1] - p.y
    a = d[:, 0] ** 2 + d[:, 1] ** 2
    b = 2 * (ox * d[:, 0] + oy * d[:, 1])
    c = ox * ox + oy * oy - p.radius ** 2
    disc = b * b - 4 * a * c
    t = np.full(len(d), np.inf)
    ok = (disc >= 0) & (a > 1e-12)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (-b - sq) / (2 * a)
    z = o[2] + t0 * d[:, 2]
    side = ok & (t0 > 0) & (z >= p.base) & (z <= p.base + p.height)
    t[side] = t0[side]
    # top cap
    with np.errstate(divide="ignore", invalid="ignore"):
        tc = (p.base + p.height - o[2]) / d[:, 2]
    xc, yc = ox + tc * d[:, 0], oy + tc * d[:, 1]
    cap = (d[:, 2] < 0) & (tc > 0) & (xc * xc + yc * yc <= p.radius ** 2)
    t[cap] = np.minimum(t[cap], tc[cap])
    return t


def sensor_directions(projection: ProjectionConfig) -> np.ndarray:
    """Unit ray through every cell center, row-major (rows * cols, 3)."""
    el = np.radians(projection.beam_elevations())[:, None]
    az = np.radians(projection.beam_azimuths())[None, :]
    d = np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el) * np.ones_like(az)], axis=-1)
    return d.reshape(-1, 3)


def render_frame(spec: SyntheticSceneSpec, pose: SE3Pose, rng: np.random.Generator | None = None,
                 frame_id: int = 0) -> SyntheticFrame:
    sensor = spec.sensor
    o = np.asarray(pose.translation, dtype=np.float64)
    if o[2] <= float(spec.ground.height_at(o[0], o[1])):
        raise SpecError(f"frame {frame_id}: sensor at z={o[2]:.3f} is not above the ground")
    ds = sensor_directions(sensor.projection)
    dw = ds @ pose.rotation.T

    if spec.ground.kind == "sinusoid":
        t_ground = _hit_sinusoid(spec.ground, o, dw, sensor.max_range)
    else:
        t_ground = _hit_plane_ground(spec.ground, o, dw)
    best = t_ground.copy()
    surface = np.full(len(dw), -1, dtype=np.int64)
    objects = [b for b in spec.boxes] + [w.as_box() for w in spec.walls]
    for k, obj in enumerate(objects + list(spec.poles)):
        t = _hit_box(obj, o, dw) if isinstance(obj, Box) else _hit_pole(obj, o, dw)
        closer = t < best
        best[closer] = t[closer]
        surface[closer] = k

    hit = np.isfinite(best) & (best <= sensor.max_range) & (best >= sensor.min_range)
    t = best[hit]
    if sensor.range_noise > 0:
        if rng is None:
            rng = np.random.default_rng(spec.seed)
        t = np.maximum(t + rng.normal(0.0, sensor.range_noise, len(t)), 1e-3)
    pts = ds[hit] * t[:, None]
    surf = surface[hit]
    intensity = np.where(surf < 0, 0.3, 0.7)
    scan = Scan(pts, intensity, frame_id=frame_id, timestamp=0.1 * frame_id)
    return SyntheticFrame(scan, GroundLabelSet.from_mask(surf < 0), pose, surf)


def generate_synthetic_sequence(spec: SyntheticSceneSpec) -> list[SyntheticFrame]:
    rng = np.random.default_rng(spec.seed)
    return [render_frame(spec, pose, rng, k) for k, pose in enumerate(spec.trajectory)]


def iter_synthetic_sequence(spec: SyntheticSceneSpec):
    """Lazy variant of :func:`generate_synthetic_sequence` (same output)."""
    rng = np.random.default_rng(spec.seed)
    for k, pose in enumerate(spec.trajectory):
        yield render_frame(spec, pose, rng, k)


def relative_truth(poses) -> list[SE3Pose]:
    """World poses re-anchored so the first one is the identity."""
    if not poses:
        return []
    inv0 = se3_inverse(poses[0])
    return [se3_compose(inv0, p) for p in poses]


# ---------------------------------------------------------------------------
# trajectories and scene presets


def _on_ground(ground: GroundModel, x: float, y: float, yaw: float, mount: float) -> SE3Pose:
    z = float(ground.height_at(x, y)) + mount
    return SE3Pose.from_euler(0.0, 0.0, yaw, (x, y, z))


def circular_trajectory(radius: float = 20.0, n_frames: int = 72, step_deg: float = 5.0,
                        ground: GroundModel | None = None, mount_height: float = 1.73) -> list[SE3Pose]:
    """Counter-clockwise circle starting at the origin heading +x (center (0, radius))."""
    ground = ground or GroundModel()
    poses = []
    for k in range(n_frames):
        th = math.radians(step_deg * k)
        poses.append(_on_ground(ground, radius * math.sin(th), radius * (1 - math.cos(th)), th, mount_height))
    return poses


def straight_trajectory(n_frames: int, step: float = 1.0, heading_deg: float = 0.0,
                        ground: GroundModel | None = None, mount_height: float = 1.73,
                        start=(0.0, 0.0)) -> list[SE3Pose]:
    ground = ground or GroundModel()
    h = math.radians(heading_deg)
    return [_on_ground(ground, start[0] + k * step * math.cos(h), start[1] + k * step * math.sin(h), h,
                       mount_height) for k in range(n_frames)]


def structured_scene(trajectory=(), seed: int = 0, sensor: SensorModel | None = None,
                     ground: GroundModel | None = None, center=(0.0, 20.0), radius: float = 20.0,
                     pole_radius: float = 0.03) -> SyntheticSceneSpec:
    """Ground plane, three non-parallel walls, parked boxes and rows of poles
    placed around a circular course of the given center and radius."""
    cx, cy = center
    rng = np.random.default_rng(seed)
    poles = []
    for k in range(24):
        th = 2 * math.pi * k / 24 + rng.uniform(-0.05, 0.05)
        for rr in (radius - 6.0, radius + 6.5):
            poles.append(Pole(cx + rr * math.cos(th), cy + rr * math.sin(th), radius=pole_radius, height=4.0))
    boxes = []
    for k in range(8):
        th = 2 * math.pi * (k + 0.5) / 8
        rr = radius + 11.0
        boxes.append(Box((cx + rr * math.cos(th), cy + rr * math.sin(th), 0.75), (4.2, 1.8, 1.5), th + 0.3))
    boxes.append(Box((cx, cy, 1.5), (6.0, 6.0, 3.0), 0.4))
    span = radius + 22.0
    walls = (
        Wall((cx - span, cy - span), (cx + span, cy - span + 8.0)),
        Wall((cx + span, cy - span + 12.0), (cx + span - 10.0, cy + span)),
        Wall((cx + span - 16.0, cy + span + 2.0), (cx - span, cy + 4.0)),
    )
    return SyntheticSceneSpec(seed, ground or GroundModel(), tuple(boxes), walls, tuple(poles),
                              sensor or SensorModel(), tuple(trajectory))


def wall_room_scene(seed: int = 0, sensor: SensorModel | None = None, half_width: float = 3.0,
                    half_length: float = 40.0, height: float = 15.0, clearance: float = 0.3) -> SyntheticSceneSpec:
    """Sensor in a narrow canyon between two long vertical panels (hoardings
    or trailer sides standing ``clearance`` above the ground). Each panel is a
    bigger plane than the visible strip of ground."""
    w, L = half_width, half_length
    walls = (
        Wall((-L, w), (L, w), height=height, base=clearance),
        Wall((L, -w), (-L, -w), height=height, base=clearance),
    )
    sensor = sensor or SensorModel()
    traj = (SE3Pose.from_euler(0, 0, 0.1, (0.0, 0.0, sensor.mount_height)),)
    return SyntheticSceneSpec(seed, GroundModel(), (), walls, (), sensor, traj)


def undulating_scene(n_frames: int = 200, amplitude: float = 0.08, wavelength: float = 2.0,
                     step: float = 0.37, seed: int = 0, sensor: SensorModel | None = None) -> SyntheticSceneSpec:
    """Sinusoidal ground with scattered boxes, driven straight along the undulation."""
    rng = np.random.default_rng(seed)
    ground = GroundModel("sinusoid", amplitude=amplitude, wavelength=wavelength, direction=0.0)
    sensor = sensor or SensorModel()
    traj = straight_trajectory(n_frames, step, 0.0, ground, sensor.mount_height)
    length = n_frames * step
    boxes = tuple(
        Box((float(rng.uniform(-20, length + 20)), float(side * rng.uniform(6, 14)), 0.75),
            (4.0, 1.8, 1.5), float(rng.uniform(-0.3, 0.3)))
        for side in (-1, 1) for _ in range(int(length // 15) + 2)
    )
    return SyntheticSceneSpec(seed, ground, boxes, (), (), sensor, tuple(traj))

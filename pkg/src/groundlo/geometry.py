"""Point, pose and range-image primitives.

Conventions:
    - Sensor frame: x forward, y left, z up, meters.
    - A pose (R, t) maps a point p expressed in its child frame to
      R @ p + t in the parent frame.
    - Euler angles are intrinsic yaw-pitch-roll: R = Rz(yaw) @ Ry(pitch) @ Rx(roll).
    - Angles are radians internally; ProjectionConfig takes degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-9


class ConfigurationError(ValueError):
    """Raised when a configuration block violates its invariants."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Scan:
    """One LiDAR sweep. Row i of ``points`` is point index i."""

    points: np.ndarray
    intensity: np.ndarray | None = None
    frame_id: int = 0
    timestamp: float | None = None
    dropped: int = 0  # points rejected by the reader (non-finite)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("scan points must be finite")
        if self.intensity is None:
            inten = np.zeros(len(pts))
        else:
            inten = np.array(self.intensity, dtype=np.float64).reshape(-1)
            if len(inten) != len(pts):
                raise ValueError("intensity length does not match point count")
        if self.frame_id < 0:
            raise ValueError("frame_id must be non-negative")
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "intensity", _readonly(inten))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def time(self) -> float:
        return float(self.frame_id) if self.timestamp is None else self.timestamp


@dataclass(frozen=True, eq=False)
class SE3Pose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("pose entries must be finite")
        if np.abs(R.T @ R - np.eye(3)).max() > ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise ValueError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", _readonly(R))
        object.__setattr__(self, "translation", _readonly(t))

    @classmethod
    def identity(cls) -> SE3Pose:
        return cls()

    @classmethod
    def from_matrix(cls, m, orthonormalize: bool = False) -> SE3Pose:
        m = np.asarray(m, dtype=np.float64)
        R = m[:3, :3]
        if orthonormalize:
            R = project_to_so3(R)
        return cls(R, m[:3, 3])

    @classmethod
    def from_euler(cls, roll=0.0, pitch=0.0, yaw=0.0, translation=(0.0, 0.0, 0.0)) -> SE3Pose:
        return cls(rotation_from_euler(roll, pitch, yaw), translation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def euler(self) -> tuple[float, float, float]:
        """(roll, pitch, yaw) of the rotation."""
        return euler_from_rotation(self.rotation)

    def rotation_angle(self) -> float:
        return rotation_angle(self.rotation)

    def __matmul__(self, other):
        if isinstance(other, SE3Pose):
            return se3_compose(self, other)
        return se3_apply(self, other)

    def __repr__(self) -> str:
        r, p, y = self.euler()
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        return f"SE3Pose(t=[{t}], rpy=[{r:.6g}, {p:.6g}, {y:.6g}])"


def project_to_so3(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def euler_from_rotation(R: np.ndarray) -> tuple[float, float, float]:
    pitch = math.asin(max(-1.0, min(1.0, -R[2, 0])))
    roll = math.atan2(R[2, 1], R[2, 2])
    yaw = math.atan2(R[1, 0], R[0, 0])
    return roll, pitch, yaw


def rotation_angle(R: np.ndarray) -> float:
    # atan2 form stays accurate near 0 where acos of the trace does not
    s = 0.5 * math.sqrt((R[2, 1] - R[1, 2]) ** 2 + (R[0, 2] - R[2, 0]) ** 2 + (R[1, 0] - R[0, 1]) ** 2)
    c = 0.5 * (float(np.trace(R)) - 1.0)
    return math.atan2(s, c)


def se3_compose(a: SE3Pose, b: SE3Pose) -> SE3Pose:
    """a ∘ b: apply b first, then a."""
    return SE3Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def se3_inverse(a: SE3Pose) -> SE3Pose:
    Rt = a.rotation.T
    return SE3Pose(Rt, -Rt @ a.translation)


def se3_apply(a: SE3Pose, p) -> np.ndarray:
    """Transform one point (3,) or an array of points (N, 3)."""
    p = np.asarray(p, dtype=np.float64)
    return p @ a.rotation.T + a.translation


def transform_scan(scan: Scan, pose: SE3Pose) -> Scan:
    return Scan(se3_apply(pose, scan.points), scan.intensity, scan.frame_id, scan.timestamp, scan.dropped)


# ---------------------------------------------------------------------------
# Range image


@dataclass(frozen=True)
class ProjectionConfig:
    rows: int = 64
    cols: int = 1800
    elev_min: float = -24.8
    elev_max: float = 2.0
    azimuth_origin: float = 0.0

    def __post_init__(self):
        if self.rows < 2 or self.cols < 4 or not self.elev_min < self.elev_max:
            raise ConfigurationError(f"invalid projection config: {self}")

    @property
    def elev_resolution(self) -> float:
        return (self.elev_max - self.elev_min) / self.rows

    @property
    def azimuth_resolution(self) -> float:
        return 360.0 / self.cols

    def beam_elevations(self) -> np.ndarray:
        """Cell-center elevation of every row, degrees."""
        return self.elev_min + (np.arange(self.rows) + 0.5) * self.elev_resolution

    def beam_azimuths(self) -> np.ndarray:
        """Cell-center azimuth of every column, degrees."""
        return self.azimuth_origin + (np.arange(self.cols) + 0.5) * self.azimuth_resolution


@dataclass(frozen=True, eq=False)
class RangeImage:
    """rows x cols grid; EMPTY cells hold NaN range and point index -1."""

    ranges: np.ndarray
    index: np.ndarray
    config: ProjectionConfig
    skipped_zero_norm: int = 0
    clamped: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.ranges.shape

    @property
    def occupied(self) -> np.ndarray:
        return self.index >= 0

    def point_indices(self) -> np.ndarray:
        return self.index[self.index >= 0]


def project_rows_cols(points: np.ndarray, config: ProjectionConfig):
    """Cell coordinates of each point: (row, col, range, clamped_mask)."""
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    rng = np.sqrt(x * x + y * y + z * z)
    elev = np.degrees(np.arctan2(z, np.hypot(x, y)))
    row_f = np.floor((elev - config.elev_min) / config.elev_resolution)
    clamped = (elev < config.elev_min) | (elev > config.elev_max)
    row = np.clip(row_f, 0, config.rows - 1).astype(np.int64)
    az = np.degrees(np.arctan2(y, x))
    col = np.floor(np.mod(az - config.azimuth_origin, 360.0) / config.azimuth_resolution).astype(np.int64)
    col = np.mod(col, config.cols)
    return row, col, rng, clamped


def spherical_project(scan: Scan, config: ProjectionConfig, subset=None) -> RangeImage:
    """Project a scan (or the subset of point indices) into a range image.

    When several points fall in one cell the nearest wins; equal ranges are
    resolved toward the lower point index.
    """
    if not isinstance(config, ProjectionConfig):
        raise ConfigurationError("config must be a ProjectionConfig")
    ranges = np.full((config.rows, config.cols), np.nan)
    index = np.full((config.rows, config.cols), -1, dtype=np.int64)

    if subset is None:
        idx = np.arange(len(scan), dtype=np.int64)
    else:
        idx = np.unique(np.asarray(subset, dtype=np.int64).reshape(-1))
    if len(idx) == 0:
        return RangeImage(_readonly(ranges), _readonly(index), config)

    row, col, rng, clamped = project_rows_cols(scan.points[idx], config)
    keep = rng > 0.0
    skipped = int(np.count_nonzero(~keep))
    idx, row, col, rng, clamped = idx[keep], row[keep], col[keep], rng[keep], clamped[keep]

    cell = row * config.cols + col
    order = np.lexsort((idx, rng, cell))
    cell_sorted = cell[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = cell_sorted[1:] != cell_sorted[:-1]
    win = order[first]
    ranges.flat[cell[win]] = rng[win]
    index.flat[cell[win]] = idx[win]
    return RangeImage(_readonly(ranges), _readonly(index), config, skipped, int(np.count_nonzero(clamped)))

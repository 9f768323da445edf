"""Readers and writers for KITTI odometry / SemanticKITTI files."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..evaluation import SEMANTICKITTI_GROUND_CLASSES
from ..geometry import SE3Pose, Scan, project_to_so3, se3_compose, se3_inverse
from ..odometry.trajectory import Trajectory
from ..segmentation import GroundLabelSet

log = logging.getLogger(__name__)

# documented frame counts; readers trust the directory and only warn
KNOWN_FRAME_COUNTS = {"00": 4541, "02": 4661, "05": 2761}


class FormatError(ValueError):
    pass


def read_kitti_bin(path) -> Scan:
    """Velodyne scan: little-endian float32 (x, y, z, intensity) records."""
    data = Path(path).read_bytes()
    if len(data) % 16:
        raise FormatError(f"{path}: size {len(data)} is not a multiple of 16 bytes")
    arr = np.frombuffer(data, dtype="<f4").reshape(-1, 4).astype(np.float64)
    finite = np.all(np.isfinite(arr[:, :3]), axis=1)
    dropped = int(np.count_nonzero(~finite))
    if dropped:
        log.warning("%s: dropped %d non-finite points", path, dropped)
        arr = arr[finite]
    return Scan(arr[:, :3], arr[:, 3], dropped=dropped)


def write_kitti_bin(scan: Scan, path) -> None:
    arr = np.column_stack([scan.points, scan.intensity]).astype("<f4")
    Path(path).write_bytes(arr.tobytes())


def read_semantickitti_labels(path, n_points: int, ground_classes=SEMANTICKITTI_GROUND_CLASSES) -> GroundLabelSet:
    data = Path(path).read_bytes()
    if len(data) != 4 * n_points:
        raise FormatError(f"{path}: {len(data)} bytes for {n_points} points (expected {4 * n_points})")
    words = np.frombuffer(data, dtype="<u4")
    semantic = words & 0xFFFF
    return GroundLabelSet.from_mask(np.isin(semantic, np.asarray(ground_classes, dtype=np.uint32)))


def write_semantickitti_labels(semantic_ids, path) -> None:
    Path(path).write_bytes(np.asarray(semantic_ids, dtype="<u4").tobytes())


def write_label_dump(labels: GroundLabelSet, path) -> None:
    Path(path).write_bytes(labels.to_bytes())


def read_label_dump(path) -> GroundLabelSet:
    return GroundLabelSet.from_bytes(Path(path).read_bytes())


def _parse_row_major(values, where: str) -> np.ndarray:
    if len(values) != 12:
        raise FormatError(f"{where}: expected 12 values, found {len(values)}")
    try:
        m = np.eye(4)
        m[:3, :4] = np.array([float(v) for v in values]).reshape(3, 4)
    except ValueError as exc:
        raise FormatError(f"{where}: {exc}") from None
    return m


def _to_pose(m: np.ndarray, where: str) -> SE3Pose:
    R = m[:3, :3]
    if np.abs(R.T @ R - np.eye(3)).max() > 1e-3 or abs(np.linalg.det(R) - 1.0) > 1e-3:
        log.warning("%s: rotation is not orthonormal, projecting onto SO(3)", where)
    return SE3Pose(project_to_so3(R), m[:3, 3])


def read_calib_tr(calib_path) -> SE3Pose:
    """The ``Tr:`` (velodyne -> camera) transform of a KITTI calib.txt."""
    for lineno, line in enumerate(Path(calib_path).read_text().splitlines(), 1):
        if line.startswith("Tr:"):
            where = f"{calib_path}:{lineno}"
            return _to_pose(_parse_row_major(line[3:].split(), where), where)
    raise FormatError(f"{calib_path}: no Tr line")


def read_kitti_poses(poses_path, calib_path=None) -> Trajectory:
    """Poses file (one row-major 3x4 per line); frame ids are line numbers from 0.

    With a calib file the camera-frame poses are conjugated into the LiDAR
    frame: P_lidar = Tr^-1 P_cam Tr.
    """
    poses = []
    for lineno, line in enumerate(Path(poses_path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        where = f"{poses_path}:{lineno}"
        poses.append(_to_pose(_parse_row_major(line.split(), where), where))
    if calib_path is not None:
        tr = read_calib_tr(calib_path)
        tr_inv = se3_inverse(tr)
        poses = [se3_compose(tr_inv, se3_compose(p, tr)) for p in poses]
    return Trajectory(list(range(len(poses))), poses)


def format_pose_line(pose: SE3Pose) -> str:
    m = pose.matrix()[:3, :4].reshape(-1)
    return " ".join(f"{v:.17g}" for v in m)


def write_trajectory_kitti(trajectory: Trajectory, path) -> None:
    try:
        with open(path, "w") as fh:
            for pose in trajectory.poses:
                fh.write(format_pose_line(pose) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write trajectory to {path}: {exc}") from exc


@dataclass(frozen=True)
class DatasetLayout:
    """SemanticKITTI-style sequence directory.

    root/sequences/<seq>/velodyne/NNNNNN.bin, .../labels/NNNNNN.label,
    .../calib.txt and root/poses/<seq>.txt (falls back to sequences/<seq>/poses.txt).
    """

    root: Path
    sequence: str = "00"

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))
        object.__setattr__(self, "sequence", f"{int(self.sequence):02d}")

    @property
    def sequence_dir(self) -> Path:
        return self.root / "sequences" / self.sequence

    def scan_paths(self) -> list[Path]:
        return sorted((self.sequence_dir / "velodyne").glob("*.bin"))

    def label_path(self, scan_path: Path) -> Path:
        return self.sequence_dir / "labels" / (scan_path.stem + ".label")

    def has_labels(self) -> bool:
        return (self.sequence_dir / "labels").is_dir()

    @property
    def calib_path(self) -> Path | None:
        p = self.sequence_dir / "calib.txt"
        return p if p.exists() else None

    @property
    def poses_path(self) -> Path | None:
        for p in (self.root / "poses" / f"{self.sequence}.txt", self.sequence_dir / "poses.txt"):
            if p.exists():
                return p
        return None

    def check(self) -> list[Path]:
        scans = self.scan_paths()
        expected = KNOWN_FRAME_COUNTS.get(self.sequence)
        if expected is not None and len(scans) != expected:
            log.warning("sequence %s: %d scans found, %d documented", self.sequence, len(scans), expected)
        if self.has_labels():
            n_labels = len(list((self.sequence_dir / "labels").glob("*.label")))
            if n_labels != len(scans):
                raise FormatError(f"sequence {self.sequence}: {len(scans)} scans but {n_labels} label files")
        return scans


def dataset_available(root, sequence: str) -> bool:
    return root is not None and os.path.isdir(DatasetLayout(root, sequence).sequence_dir / "velodyne")

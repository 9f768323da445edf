"""Segmentation and trajectory metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import SE3Pose, rotation_angle, se3_compose, se3_inverse
from .odometry.trajectory import Trajectory
from .segmentation import GroundLabelSet

KITTI_SEGMENT_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)
SEMANTICKITTI_GROUND_CLASSES = (40, 44, 48, 49, 60, 72)


class AlignmentDegenerate(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    n_tp: int
    n_fp: int
    n_fn: int
    n_tn: int

    @property
    def total(self) -> int:
        return self.n_tp + self.n_fp + self.n_fn + self.n_tn


@dataclass(frozen=True)
class GroundMetrics:
    """Confusion counts with precision/recall; None means 0/0 (undefined)."""

    counts: ConfusionCounts
    precision: float | None
    recall: float | None


def ground_confusion(predicted: GroundLabelSet, truth: GroundLabelSet) -> GroundMetrics:
    if predicted.total_points != truth.total_points:
        raise ValueError(f"label sets cover {predicted.total_points} and {truth.total_points} points")
    p, t = predicted.mask(), truth.mask()
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = int(np.count_nonzero(~p & ~t))
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    return GroundMetrics(ConfusionCounts(tp, fp, fn, tn), precision, recall)


@dataclass
class SeriesSummary:
    mean: float | None
    std: float | None  # population standard deviation
    n_valid: int
    n_undefined: int


def _summary(values: list[float | None]) -> SeriesSummary:
    valid = [v for v in values if v is not None]
    if not valid:
        return SeriesSummary(None, None, 0, len(values))
    arr = np.asarray(valid)
    return SeriesSummary(float(arr.mean()), float(arr.std()), len(valid), len(values) - len(valid))


@dataclass
class GroundSeries:
    frames: list[GroundMetrics]
    precision: SeriesSummary
    recall: SeriesSummary

    @classmethod
    def from_metrics(cls, frames: list[GroundMetrics]) -> "GroundSeries":
        frames = list(frames)
        return cls(frames, _summary([f.precision for f in frames]), _summary([f.recall for f in frames]))

    @property
    def precisions(self) -> list[float | None]:
        return [f.precision for f in self.frames]

    @property
    def recalls(self) -> list[float | None]:
        return [f.recall for f in self.frames]


def per_frame_series(predicted, truth=None) -> GroundSeries:
    """Per-frame precision/recall; accepts (pred, truth) pairs or two sequences."""
    if truth is None:
        pairs = list(predicted)
    else:
        predicted, truth = list(predicted), list(truth)
        if len(predicted) != len(truth):
            raise ValueError(f"{len(predicted)} predictions for {len(truth)} truth frames")
        pairs = list(zip(predicted, truth))
    return GroundSeries.from_metrics(ground_confusion(p, t) for p, t in pairs)


# ---------------------------------------------------------------------------
# Trajectory metrics


@dataclass
class RpeResult:
    t_rel: float  # percent
    r_rel: float  # degrees per 100 m
    segments: list[tuple[int, float, float, float]] = field(default_factory=list)

    def per_length(self) -> dict[float, tuple[float, float]]:
        """Mean (t_rel %, r_rel deg/100m) for each segment length."""
        out = {}
        for length in sorted({s[1] for s in self.segments}):
            sel = [s for s in self.segments if s[1] == length]
            out[length] = (100.0 * float(np.mean([s[2] for s in sel])),
                           100.0 * math.degrees(float(np.mean([s[3] for s in sel]))))
        return out


def _check_aligned(estimate: Trajectory, truth: Trajectory) -> None:
    if list(estimate.frame_ids) != list(truth.frame_ids):
        raise ValueError("estimate and truth must cover the same frame ids")


def path_distances(traj: Trajectory) -> np.ndarray:
    pos = traj.positions()
    steps = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    return np.r_[0.0, np.cumsum(steps)]


def relative_pose_error(estimate: Trajectory, truth: Trajectory,
                        segment_lengths=KITTI_SEGMENT_LENGTHS, step: int = 1) -> RpeResult:
    """Sub-trajectory drift: every start frame, every reachable segment length.

    A segment ends at the first frame whose ground-truth arc length from
    the start reaches L. Errors are pooled over all segments.
    """
    _check_aligned(estimate, truth)
    lengths = [float(L) for L in segment_lengths]
    dist = path_distances(truth)
    segments = []
    for s in range(0, len(truth), step):
        for L in lengths:
            e = int(np.searchsorted(dist, dist[s] + L, side="left"))
            if e >= len(dist):
                continue
            dq = se3_compose(se3_inverse(truth.poses[s]), truth.poses[e])
            dp = se3_compose(se3_inverse(estimate.poses[s]), estimate.poses[e])
            err = se3_compose(se3_inverse(dq), dp)
            segments.append((s, L, float(np.linalg.norm(err.translation)) / L,
                             rotation_angle(err.rotation) / L))
    if not segments:
        raise ValueError(f"trajectory length {dist[-1]:.3f} m is shorter than the "
                         f"shortest segment length {min(lengths)} m")
    t_rel = 100.0 * float(np.mean([s[2] for s in segments]))
    r_rel = 100.0 * math.degrees(float(np.mean([s[3] for s in segments])))
    return RpeResult(t_rel, r_rel, segments)


@dataclass
class AteResult:
    rmse: float
    alignment: SE3Pose  # maps estimate positions onto truth


def align_rigid(source: np.ndarray, target: np.ndarray) -> SE3Pose:
    """Least-squares rotation + translation taking source points onto target."""
    mu_s, mu_t = source.mean(axis=0), target.mean(axis=0)
    H = (source - mu_s).T @ (target - mu_t)
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ D @ U.T
    return SE3Pose(R, mu_t - R @ mu_s)


def absolute_trajectory_error(estimate: Trajectory, truth: Trajectory) -> AteResult:
    _check_aligned(estimate, truth)
    est, gt = estimate.positions(), truth.positions()
    if len(gt) < 3:
        raise AlignmentDegenerate("ATE alignment needs at least 3 poses")
    sv = np.linalg.svd(gt - gt.mean(axis=0), compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1e-300):
        raise AlignmentDegenerate("ground-truth positions are collinear")
    T = align_rigid(est, gt)
    aligned = est @ T.rotation.T + T.translation
    rmse = math.sqrt(float(np.mean(np.sum((aligned - gt) ** 2, axis=1))))
    return AteResult(rmse, T)

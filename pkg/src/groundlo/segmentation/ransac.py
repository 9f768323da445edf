"""Single global plane by seeded RANSAC: the baseline segmenter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import ConfigurationError, Scan
from .labels import GroundLabelSet


@dataclass(frozen=True)
class RansacPlaneConfig:
    iterations: int = 100
    inlier_threshold: float = 0.2
    rng_seed: int = 0

    def __post_init__(self):
        if self.iterations < 1 or self.inlier_threshold <= 0:
            raise ConfigurationError("iterations must be >= 1 and inlier_threshold > 0")


def fit_plane_lsq(pts: np.ndarray) -> tuple[np.ndarray, float]:
    """Total least-squares plane (unit normal, offset) through pts."""
    mean = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - mean, full_matrices=False)
    normal = vt[-1]
    if normal[2] < 0:
        normal = -normal
    return normal, float(-normal @ mean)


def ransac_plane_segment(scan: Scan, config: RansacPlaneConfig) -> GroundLabelSet:
    n = len(scan)
    if n < 3:
        return GroundLabelSet.empty(n, insufficient_points=True)
    pts = scan.points
    rng = np.random.default_rng(config.rng_seed)
    best_count = -1
    best = None
    for _ in range(config.iterations):
        a, b, c = pts[rng.choice(n, 3, replace=False)]
        normal = np.cross(b - a, c - a)
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue
        normal /= norm
        count = int(np.count_nonzero(np.abs((pts - a) @ normal) <= config.inlier_threshold))
        if count > best_count:
            best_count, best = count, (normal, float(-normal @ a))
    if best is None:
        return GroundLabelSet.empty(n, degenerate=True)

    normal, offset = best
    inliers = np.abs(pts @ normal + offset) <= config.inlier_threshold
    if np.count_nonzero(inliers) >= 3:
        normal, offset = fit_plane_lsq(pts[inliers])
    ground = np.abs(pts @ normal + offset) <= config.inlier_threshold
    return GroundLabelSet.from_mask(ground, plane_normal=normal, plane_offset=offset)

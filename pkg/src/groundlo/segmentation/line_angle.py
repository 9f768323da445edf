"""Line-angle ground labelling over vertically adjacent range-image cells."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import ConfigurationError, RangeImage, Scan
from .labels import GroundLabelSet


@dataclass(frozen=True)
class LineAngleConfig:
    tau_theta: float = 10.0  # degrees
    max_ground_row: int | None = None  # None -> rows // 2

    def __post_init__(self):
        if not 0.0 < self.tau_theta < 90.0:
            raise ConfigurationError("tau_theta must lie in (0, 90) degrees")
        if self.max_ground_row is not None and self.max_ground_row < 1:
            raise ConfigurationError("max_ground_row must be >= 1")


def line_angle_segment(range_image: RangeImage, scan: Scan, config: LineAngleConfig) -> GroundLabelSet:
    n = len(scan)
    if n == 0:
        return GroundLabelSet.empty(0)
    rows = range_image.shape[0]
    top = rows // 2 if config.max_ground_row is None else min(config.max_ground_row, rows - 1)

    idx = range_image.index[: top + 1]
    lower, upper = idx[:-1], idx[1:]
    both = (lower >= 0) & (upper >= 0)
    a = scan.points[lower[both]]
    b = scan.points[upper[both]]
    d = b - a
    angle = np.degrees(np.arctan2(np.abs(d[:, 2]), np.hypot(d[:, 0], d[:, 1])))
    ok = angle <= config.tau_theta

    mask = np.zeros(n, dtype=bool)
    mask[lower[both][ok]] = True
    mask[upper[both][ok]] = True
    return GroundLabelSet.from_mask(mask)

"""Interchangeable ground segmenters.

Every segmenter maps a scan to a :class:`GroundLabelSet`; the choice is made
by the type of the config object passed to :func:`segment_ground`.
"""

from __future__ import annotations

from ..geometry import ConfigurationError, RangeImage, Scan
from .labels import GroundLabelSet
from .line_angle import LineAngleConfig, line_angle_segment
from .ransac import RansacPlaneConfig, fit_plane_lsq, ransac_plane_segment
from .region_plane import RegionPlaneConfig, assign_bins, fit_bin_plane, region_plane_segment

SEGMENTERS = {
    "line_angle": LineAngleConfig,
    "region_plane": RegionPlaneConfig,
    "ransac": RansacPlaneConfig,
}


def segmenter_name(config) -> str:
    for name, cls in SEGMENTERS.items():
        if isinstance(config, cls):
            return name
    raise ConfigurationError(f"unknown segmenter config {type(config).__name__}")


def segment_ground(segmenter, scan: Scan, range_image: RangeImage | None = None) -> GroundLabelSet:
    if len(scan) == 0:
        return GroundLabelSet.empty(0)
    if isinstance(segmenter, LineAngleConfig):
        if range_image is None:
            raise ValueError("line-angle segmentation needs the scan's range image")
        return line_angle_segment(range_image, scan, segmenter)
    if isinstance(segmenter, RegionPlaneConfig):
        return region_plane_segment(scan, segmenter)
    if isinstance(segmenter, RansacPlaneConfig):
        return ransac_plane_segment(scan, segmenter)
    raise ConfigurationError(f"unknown segmenter config {type(segmenter).__name__}")


__all__ = [
    "GroundLabelSet",
    "LineAngleConfig",
    "RegionPlaneConfig",
    "RansacPlaneConfig",
    "SEGMENTERS",
    "assign_bins",
    "fit_bin_plane",
    "fit_plane_lsq",
    "line_angle_segment",
    "ransac_plane_segment",
    "region_plane_segment",
    "segment_ground",
    "segmenter_name",
]

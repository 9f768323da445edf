"""Region-wise ground plane fitting on a concentric polar grid.

Each scan is split into zones of increasing radius; each zone is split into
rings and sectors (a "bin"). Per bin, a plane is fitted to the lowest points
and kept only if it is upright and near the expected ground elevation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import ConfigurationError, Scan
from .labels import GroundLabelSet


@dataclass(frozen=True)
class RegionPlaneConfig:
    zone_boundaries: tuple[float, ...] = (13.6, 22.0, 41.4, 80.0)
    rings_per_zone: tuple[int, ...] = (2, 4, 4, 4)
    sectors_per_zone: tuple[int, ...] = (16, 32, 54, 32)
    min_range: float = 2.7
    num_seed_points: int = 20
    seed_margin: float = 0.125
    dist_threshold: float = 0.125
    uprightness_min: float = math.cos(math.radians(30.0))
    max_elevation_per_zone: tuple[float, ...] = (0.5, 0.7, 0.9, 1.1)
    sensor_height: float = -1.73  # expected ground z in the sensor frame

    def __post_init__(self):
        for name in ("zone_boundaries", "rings_per_zone", "sectors_per_zone", "max_elevation_per_zone"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        nz = len(self.zone_boundaries)
        if nz == 0 or any(len(getattr(self, f)) != nz for f in
                          ("rings_per_zone", "sectors_per_zone", "max_elevation_per_zone")):
            raise ConfigurationError("zone lists must be non-empty and of equal length")
        bounds = (self.min_range,) + self.zone_boundaries
        if any(b1 <= b0 for b0, b1 in zip(bounds, bounds[1:])):
            raise ConfigurationError("zone boundaries must be strictly increasing above min_range")
        if self.min_range < 0:
            raise ConfigurationError("min_range must be non-negative")
        if min(self.rings_per_zone) < 1 or min(self.sectors_per_zone) < 1 or self.num_seed_points < 1:
            raise ConfigurationError("ring/sector/seed counts must be >= 1")
        if self.seed_margin <= 0 or self.dist_threshold <= 0 or min(self.max_elevation_per_zone) <= 0:
            raise ConfigurationError("thresholds must be positive")
        if not 0.0 < self.uprightness_min <= 1.0:
            raise ConfigurationError("uprightness_min must lie in (0, 1]")


@dataclass(frozen=True)
class BinPlane:
    bin_id: int
    zone: int
    normal: np.ndarray
    offset: float  # plane: normal . p + offset = 0
    elevation: float
    accepted: bool
    reason: str = ""


def assign_bins(points: np.ndarray, config: RegionPlaneConfig) -> tuple[np.ndarray, np.ndarray]:
    """Flat bin id per point (-1 when outside the grid) and the zone of each bin."""
    r = np.hypot(points[:, 0], points[:, 1])
    theta = np.mod(np.arctan2(points[:, 1], points[:, 0]), 2 * np.pi)
    bin_id = np.full(len(points), -1, dtype=np.int64)
    bin_zone = []
    base = 0
    inner = config.min_range
    for zone, outer in enumerate(config.zone_boundaries):
        nr, ns = config.rings_per_zone[zone], config.sectors_per_zone[zone]
        in_zone = (r >= inner) & (r < outer)
        ring = np.minimum(((r[in_zone] - inner) / ((outer - inner) / nr)).astype(np.int64), nr - 1)
        sector = np.minimum((theta[in_zone] / (2 * np.pi / ns)).astype(np.int64), ns - 1)
        bin_id[in_zone] = base + ring * ns + sector
        bin_zone.extend([zone] * (nr * ns))
        base += nr * ns
        inner = outer
    return bin_id, np.asarray(bin_zone, dtype=np.int64)


def fit_bin_plane(pts: np.ndarray, zone: int, bin_id: int, config: RegionPlaneConfig) -> BinPlane | None:
    """Seeded PCA plane for one bin, or None when the bin has too few seeds."""
    z = pts[:, 2]
    k = min(config.num_seed_points, len(pts))
    lowest = np.sort(z, kind="stable")[:k]
    seeds = pts[z <= lowest.mean() + config.seed_margin]
    if len(seeds) < 3:
        return None
    mean = seeds.mean(axis=0)
    cov = np.cov((seeds - mean).T, bias=True)
    evals, evecs = np.linalg.eigh(cov)
    normal = evecs[:, 0]
    if normal[2] < 0:
        normal = -normal
    elevation = float(mean[2])
    if evals[1] <= 1e-12 * max(evals[2], 1e-300):
        return BinPlane(bin_id, zone, normal, float(-normal @ mean), elevation, False, "degenerate")
    if abs(normal[2]) < config.uprightness_min:
        return BinPlane(bin_id, zone, normal, float(-normal @ mean), elevation, False, "tilted")
    if abs(elevation - config.sensor_height) > config.max_elevation_per_zone[zone]:
        return BinPlane(bin_id, zone, normal, float(-normal @ mean), elevation, False, "elevation")
    return BinPlane(bin_id, zone, normal, float(-normal @ mean), elevation, True)


def region_plane_segment(scan: Scan, config: RegionPlaneConfig, planes_out: list | None = None) -> GroundLabelSet:
    """Label a point as ground iff its bin's plane is accepted and it lies
    within ``dist_threshold`` of that plane.

    ``planes_out``, when given, receives the BinPlane of every fitted bin.
    """
    n = len(scan)
    if n == 0:
        return GroundLabelSet.empty(0)
    pts = scan.points
    bin_id, bin_zone = assign_bins(pts, config)
    order = np.argsort(bin_id, kind="stable")
    sorted_ids = bin_id[order]
    starts = np.flatnonzero(np.r_[True, sorted_ids[1:] != sorted_ids[:-1]])
    ends = np.r_[starts[1:], len(order)]

    mask = np.zeros(n, dtype=bool)
    skipped = 0
    for s, e in zip(starts, ends):
        b = int(sorted_ids[s])
        if b < 0:
            continue
        members = order[s:e]
        plane = fit_bin_plane(pts[members], int(bin_zone[b]), b, config)
        if plane is None:
            skipped += 1
            continue
        if planes_out is not None:
            planes_out.append(plane)
        if plane.accepted:
            dist = np.abs(pts[members] @ plane.normal + plane.offset)
            mask[members[dist <= config.dist_threshold]] = True
    return GroundLabelSet.from_mask(mask, skipped_bins=skipped)

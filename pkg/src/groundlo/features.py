"""Smoothness-based edge and planar feature selection on a range image.

The ground image (range image of the ground subset only) works as a mask:
edge and non-ground planar features come from unmasked cells, ground planar
features from masked cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .geometry import ConfigurationError, RangeImage, Scan
from .segmentation import GroundLabelSet


@dataclass(frozen=True)
class FeatureConfig:
    window_half_width: int = 5
    edge_threshold: float = 0.1
    planar_threshold: float = 0.1
    sectors_per_row: int = 6
    max_edge_per_sector: int = 2
    max_planar_per_sector: int = 4
    occlusion_ratio: float = 1.3

    def __post_init__(self):
        if self.planar_threshold > self.edge_threshold:
            raise ConfigurationError("planar_threshold must not exceed edge_threshold")
        if min(self.window_half_width, self.sectors_per_row, self.max_edge_per_sector,
               self.max_planar_per_sector) < 1:
            raise ConfigurationError("feature counts must be >= 1")
        if self.occlusion_ratio <= 1.0:
            raise ConfigurationError("occlusion_ratio must exceed 1")


@dataclass(frozen=True, eq=False)
class SmoothnessMap:
    values: np.ndarray  # NaN marks UNDEFINED

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.values)


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Selected features. Cells are (row, col) pairs of the source image."""

    edge_points: np.ndarray
    edge_index: np.ndarray
    edge_cells: np.ndarray
    planar_points: np.ndarray
    planar_index: np.ndarray
    planar_cells: np.ndarray
    planar_is_ground: np.ndarray

    @classmethod
    def empty(cls) -> FeatureSet:
        return cls(np.empty((0, 3)), np.empty(0, np.int64), np.empty((0, 2), np.int64),
                   np.empty((0, 3)), np.empty(0, np.int64), np.empty((0, 2), np.int64),
                   np.empty(0, bool))

    @classmethod
    def from_points(cls, edge_points, planar_points, planar_is_ground) -> FeatureSet:
        """Feature set built directly from coordinates (no source image)."""
        e = np.asarray(edge_points, dtype=np.float64).reshape(-1, 3)
        p = np.asarray(planar_points, dtype=np.float64).reshape(-1, 3)
        g = np.asarray(planar_is_ground, dtype=bool).reshape(-1)
        if len(g) != len(p):
            raise ValueError("planar_is_ground length mismatch")
        return cls(e, np.full(len(e), -1, np.int64), np.full((len(e), 2), -1, np.int64),
                   p, np.full(len(p), -1, np.int64), np.full((len(p), 2), -1, np.int64), g)

    @property
    def ground_planar(self) -> np.ndarray:
        return self.planar_points[self.planar_is_ground]

    @property
    def nonground_planar(self) -> np.ndarray:
        return self.planar_points[~self.planar_is_ground]

    def transformed(self, pose) -> FeatureSet:
        R, t = pose.rotation, pose.translation
        return FeatureSet(self.edge_points @ R.T + t, self.edge_index, self.edge_cells,
                          self.planar_points @ R.T + t, self.planar_index, self.planar_cells,
                          self.planar_is_ground)

    def dump_lines(self) -> list[str]:
        """Text dump: ``E x y z`` per edge, ``P g x y z`` per planar point."""
        out = [f"E {x:.9g} {y:.9g} {z:.9g}" for x, y, z in self.edge_points]
        out += [f"P {int(g)} {x:.9g} {y:.9g} {z:.9g}"
                for g, (x, y, z) in zip(self.planar_is_ground, self.planar_points)]
        return out


def compute_smoothness(range_image: RangeImage, config: FeatureConfig) -> SmoothnessMap:
    """c_i = |sum_j (r_j - r_i)| / (|S| r_i) over the 2w same-row neighbours.

    UNDEFINED (NaN) where the cell is empty, the window leaves the image, or
    the window touches an empty cell.
    """
    r = range_image.ranges
    w = config.window_half_width
    rows, cols = r.shape
    out = np.full((rows, cols), np.nan)
    if cols < 2 * w + 1:
        return SmoothnessMap(out)
    win = sliding_window_view(r, 2 * w + 1, axis=1)
    center = r[:, w:cols - w]
    diff = win.sum(axis=2) - (2 * w + 1) * center
    out[:, w:cols - w] = np.abs(diff) / (2 * w * center)
    return SmoothnessMap(out)


def occlusion_mask(ranges: np.ndarray, config: FeatureConfig) -> np.ndarray:
    """Cells on the far side of a range jump larger than ``occlusion_ratio``."""
    w = config.window_half_width
    rows, cols = ranges.shape
    bad = np.zeros((rows, cols), dtype=bool)
    left, right = ranges[:, :-1], ranges[:, 1:]
    with np.errstate(invalid="ignore"):
        far_left = left > config.occlusion_ratio * right
        far_right = right > config.occlusion_ratio * left
    for r, c in zip(*np.nonzero(far_left)):
        bad[r, max(0, c - w + 1):c + 1] = True
    for r, c in zip(*np.nonzero(far_right)):
        bad[r, c + 1:min(cols, c + 1 + w)] = True
    return bad


def _pick(cands: np.ndarray, budget: int, taken: np.ndarray, w: int) -> list[int]:
    # cands sorted by preference; ties keep lower column first
    picked = []
    for c in cands:
        if len(picked) >= budget:
            break
        if taken[c]:
            continue
        picked.append(int(c))
        taken[max(0, c - w):c + w + 1] = True
    return picked


def candidate_cells(range_image: RangeImage, ground_image: RangeImage, smoothness: SmoothnessMap,
                    labels: GroundLabelSet, config: FeatureConfig) -> tuple[np.ndarray, np.ndarray]:
    """(non-ground pool, ground pool) eligibility masks before thresholding.

    Non-ground cells are occupied, unlabelled and outside the ground image;
    ground cells are those of the ground image. Both need defined smoothness
    and must not sit on the far side of an occlusion.
    """
    rows, cols = range_image.shape
    masked = ground_image.occupied
    eligible = smoothness.defined & ~occlusion_mask(range_image.ranges, config)
    occ = range_image.occupied
    cell_ground = np.zeros((rows, cols), dtype=bool)
    cell_ground[occ] = labels.mask()[range_image.index[occ]]
    return occ & ~cell_ground & ~masked & eligible, masked & eligible


def extract_features(range_image: RangeImage, ground_image: RangeImage, smoothness: SmoothnessMap,
                     labels: GroundLabelSet, scan: Scan, config: FeatureConfig) -> FeatureSet:
    rows, cols = range_image.shape
    c = smoothness.values
    w = config.window_half_width
    nonground, ground = candidate_cells(range_image, ground_image, smoothness, labels, config)

    edges, planar, planar_ground = [], [], []
    bounds = np.linspace(0, cols, config.sectors_per_row + 1).astype(int)
    for row in range(rows):
        taken = np.zeros(cols, dtype=bool)
        crow = c[row]
        for s0, s1 in zip(bounds[:-1], bounds[1:]):
            cols_s = np.arange(s0, s1)
            cs = crow[s0:s1]
            ng = nonground[row, s0:s1]
            gr = ground[row, s0:s1]

            with np.errstate(invalid="ignore"):
                cand = cols_s[ng & (cs > config.edge_threshold)]
            cand = cand[np.lexsort((cand, -crow[cand]))]
            edges += [(row, k) for k in _pick(cand, config.max_edge_per_sector, taken, w)]

            with np.errstate(invalid="ignore"):
                cand = cols_s[ng & (cs < config.planar_threshold)]
            cand = cand[np.lexsort((cand, crow[cand]))]
            planar += [(row, k) for k in _pick(cand, config.max_planar_per_sector, taken, w)]

            with np.errstate(invalid="ignore"):
                cand = cols_s[gr & (cs < config.planar_threshold)]
            cand = cand[np.lexsort((cand, crow[cand]))]
            planar_ground += [(row, k) for k in _pick(cand, config.max_planar_per_sector, taken, w)]

    def cells(lst):
        return np.asarray(lst, dtype=np.int64).reshape(-1, 2)

    ec, pc, gc = cells(edges), cells(planar), cells(planar_ground)
    eidx = range_image.index[ec[:, 0], ec[:, 1]]
    pidx = np.concatenate([range_image.index[pc[:, 0], pc[:, 1]], ground_image.index[gc[:, 0], gc[:, 1]]])
    pts = scan.points
    return FeatureSet(
        edge_points=pts[eidx],
        edge_index=eidx,
        edge_cells=ec,
        planar_points=pts[pidx],
        planar_index=pidx,
        planar_cells=np.concatenate([pc, gc]),
        planar_is_ground=np.r_[np.zeros(len(pc), bool), np.ones(len(gc), bool)],
    )

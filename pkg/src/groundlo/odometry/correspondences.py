"""Nearest-neighbour feature correspondences against the previous frame."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..geometry import SE3Pose, se3_apply


@dataclass(frozen=True)
class PlanarCorrespondence:
    query_point: np.ndarray
    normal: np.ndarray
    offset: float
    valid: bool


@dataclass(frozen=True)
class EdgeCorrespondence:
    query_point: np.ndarray
    line_point: np.ndarray
    direction: np.ndarray
    valid: bool


@dataclass(frozen=True, eq=False)
class PlanarMatches:
    """Batch of planar correspondences; plane is n . q + d = 0 in the previous frame."""

    query: np.ndarray
    normals: np.ndarray
    offsets: np.ndarray
    valid: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.query)

    def __getitem__(self, i) -> PlanarCorrespondence:
        return PlanarCorrespondence(self.query[i], self.normals[i], float(self.offsets[i]), bool(self.valid[i]))

    @property
    def n_valid(self) -> int:
        return int(np.count_nonzero(self.valid))

    def only_valid(self) -> PlanarMatches:
        v = self.valid
        return PlanarMatches(self.query[v], self.normals[v], self.offsets[v], v[v], self.diagnostics)


@dataclass(frozen=True, eq=False)
class EdgeMatches:
    query: np.ndarray
    line_points: np.ndarray
    directions: np.ndarray
    valid: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.query)

    def __getitem__(self, i) -> EdgeCorrespondence:
        return EdgeCorrespondence(self.query[i], self.line_points[i], self.directions[i], bool(self.valid[i]))

    @property
    def n_valid(self) -> int:
        return int(np.count_nonzero(self.valid))

    def only_valid(self) -> EdgeMatches:
        v = self.valid
        return EdgeMatches(self.query[v], self.line_points[v], self.directions[v], v[v], self.diagnostics)


PLANE_FIT_TOL = 0.2  # m, max neighbour distance from a PCA plane


def _tree(points: np.ndarray, tree):
    return cKDTree(points) if tree is None else tree


def match_planar(current: np.ndarray, previous: np.ndarray, init: SE3Pose, max_corr_dist: float,
                 tree: cKDTree | None = None, neighbors: int = 3) -> PlanarMatches:
    """Plane through the nearest previous points of every transformed current point.

    With three neighbours the plane passes through them exactly; with more it
    is their least-squares (PCA) plane, valid only when every neighbour lies
    within ``PLANE_FIT_TOL`` of it.
    """
    current = np.asarray(current, dtype=np.float64).reshape(-1, 3)
    previous = np.asarray(previous, dtype=np.float64).reshape(-1, 3)
    n = len(current)
    if len(previous) < 3 or n == 0:
        return PlanarMatches(current, np.zeros((n, 3)), np.zeros(n), np.zeros(n, bool),
                             {"insufficient_previous": len(previous) < 3})
    tree = _tree(previous, tree)
    k = max(3, min(neighbors, len(previous)))
    q = se3_apply(init, current)
    dist, nn = tree.query(q, k=k)
    if k == 3:
        a, b, c = previous[nn[:, 0]], previous[nn[:, 1]], previous[nn[:, 2]]
        ab, ac = b - a, c - a
        cross = np.cross(ab, ac)
        area = np.linalg.norm(cross, axis=1)
        scale = np.linalg.norm(ab, axis=1) * np.linalg.norm(ac, axis=1)
        bad = area <= 1e-6 * scale + 1e-15
        normals = np.zeros_like(cross)
        ok = ~bad
        normals[ok] = cross[ok] / area[ok, None]
        anchor = a
    else:
        nbrs = previous[nn]
        anchor = nbrs.mean(axis=1)
        centered = nbrs - anchor[:, None, :]
        evals, evecs = np.linalg.eigh(np.einsum("nki,nkj->nij", centered, centered) / k)
        normals = evecs[:, :, 0]
        spread = np.abs(np.einsum("nki,ni->nk", centered, normals)).max(axis=1)
        bad = (evals[:, 1] <= 1e-12 * np.maximum(evals[:, 2], 1e-300)) | (spread > PLANE_FIT_TOL)
    normals[normals[:, 2] < 0] *= -1.0
    offsets = -np.einsum("ij,ij->i", normals, anchor)
    valid = ~bad & np.all(dist <= max_corr_dist, axis=1)
    return PlanarMatches(current, normals, offsets, valid, {"degenerate": int(np.count_nonzero(bad))})


def match_edge(current: np.ndarray, previous: np.ndarray, init: SE3Pose, max_corr_dist: float,
               tree: cKDTree | None = None, neighbors: int = 2) -> EdgeMatches:
    """Line through the nearest previous edge points of every transformed current point.

    With two neighbours the line joins them; with more, it is their
    principal axis and must be clearly elongated.
    """
    current = np.asarray(current, dtype=np.float64).reshape(-1, 3)
    previous = np.asarray(previous, dtype=np.float64).reshape(-1, 3)
    n = len(current)
    if len(previous) < 2 or n == 0:
        return EdgeMatches(current, np.zeros((n, 3)), np.zeros((n, 3)), np.zeros(n, bool),
                           {"insufficient_previous": len(previous) < 2})
    tree = _tree(previous, tree)
    k = max(2, min(neighbors, len(previous)))
    q = se3_apply(init, current)
    dist, nn = tree.query(q, k=k)
    nbrs = previous[nn]
    if k == 2:
        p0 = nbrs[:, 0]
        d = nbrs[:, 1] - p0
        length = np.linalg.norm(d, axis=1)
        ok = length >= 1e-3
        u = np.zeros_like(d)
        u[ok] = d[ok] / length[ok, None]
    else:
        p0 = nbrs.mean(axis=1)
        centered = nbrs - p0[:, None, :]
        cov = np.einsum("nki,nkj->nij", centered, centered) / k
        evals, evecs = np.linalg.eigh(cov)
        u = evecs[:, :, 2]
        ok = (np.sqrt(np.maximum(evals[:, 2], 0.0)) >= 1e-3) & (evals[:, 2] >= 3.0 * evals[:, 1])
    valid = ok & np.all(dist <= max_corr_dist, axis=1)
    return EdgeMatches(current, p0, u, valid, {"degenerate": int(np.count_nonzero(~ok))})

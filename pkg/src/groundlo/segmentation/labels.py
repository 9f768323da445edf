from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class GroundLabelSet:
    """Ground / non-ground partition of a scan of ``total_points`` points.

    Only the ground indices are stored; the non-ground set is their
    complement, so the two always partition ``range(total_points)``.
    """

    ground_indices: np.ndarray
    total_points: int
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.unique(np.asarray(self.ground_indices, dtype=np.int64).reshape(-1))
        if self.total_points < 0:
            raise ValueError("total_points must be non-negative")
        if len(g) and (g[0] < 0 or g[-1] >= self.total_points):
            raise ValueError("ground index out of range")
        g.setflags(write=False)
        object.__setattr__(self, "ground_indices", g)

    @classmethod
    def from_mask(cls, mask, **diagnostics) -> GroundLabelSet:
        mask = np.asarray(mask, dtype=bool)
        return cls(np.flatnonzero(mask), len(mask), dict(diagnostics))

    @classmethod
    def empty(cls, total_points: int = 0, **diagnostics) -> GroundLabelSet:
        return cls(np.empty(0, dtype=np.int64), total_points, dict(diagnostics))

    def mask(self) -> np.ndarray:
        m = np.zeros(self.total_points, dtype=bool)
        m[self.ground_indices] = True
        return m

    def nonground_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.mask())

    def __len__(self) -> int:
        return len(self.ground_indices)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroundLabelSet):
            return NotImplemented
        return self.total_points == other.total_points and np.array_equal(
            self.ground_indices, other.ground_indices
        )

    def to_bytes(self) -> bytes:
        """Label dump: one byte per point, 1 = ground, 0 = non-ground."""
        return self.mask().astype(np.uint8).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> GroundLabelSet:
        arr = np.frombuffer(data, dtype=np.uint8)
        if np.any(arr > 1):
            raise ValueError("label dump bytes must be 0 or 1")
        return cls.from_mask(arr == 1)

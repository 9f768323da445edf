from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import SE3Pose, se3_compose


class TrajectoryOrderError(ValueError):
    pass


@dataclass
class Trajectory:
    """World poses per frame; the world frame is the first frame's sensor frame."""

    frame_ids: list[int] = field(default_factory=list)
    poses: list[SE3Pose] = field(default_factory=list)

    def __post_init__(self):
        if len(self.frame_ids) != len(self.poses):
            raise ValueError("frame_ids and poses differ in length")
        if any(b <= a for a, b in zip(self.frame_ids, self.frame_ids[1:])):
            raise TrajectoryOrderError("frame ids must be strictly increasing")

    @classmethod
    def start(cls, frame_id: int = 0) -> Trajectory:
        return cls([frame_id], [SE3Pose.identity()])

    def __len__(self) -> int:
        return len(self.poses)

    def __iter__(self):
        return iter(zip(self.frame_ids, self.poses))

    @property
    def last(self) -> SE3Pose:
        return self.poses[-1]

    def append(self, frame_id: int, pose: SE3Pose) -> None:
        if self.frame_ids and frame_id <= self.frame_ids[-1]:
            raise TrajectoryOrderError(f"frame {frame_id} does not follow frame {self.frame_ids[-1]}")
        self.frame_ids.append(frame_id)
        self.poses.append(pose)

    def positions(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses]).reshape(-1, 3)

    def subset(self, frame_ids) -> Trajectory:
        lookup = dict(zip(self.frame_ids, self.poses))
        ids = sorted(frame_ids)
        return Trajectory(ids, [lookup[i] for i in ids])


def accumulate(trajectory: Trajectory, relative: SE3Pose, frame_id: int) -> Trajectory:
    """New trajectory with world pose ``last ∘ relative`` appended."""
    if not trajectory.poses:
        out = Trajectory()
        out.append(frame_id, relative)
        return out
    out = Trajectory(list(trajectory.frame_ids), list(trajectory.poses))
    out.append(frame_id, se3_compose(trajectory.last, relative))
    return out

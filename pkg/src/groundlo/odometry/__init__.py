from .correspondences import (
    EdgeCorrespondence,
    EdgeMatches,
    PlanarCorrespondence,
    PlanarMatches,
    match_edge,
    match_planar,
)
from .estimator import (
    DegenerateStage,
    FeatureMap,
    OdometryConfig,
    RefineResult,
    StageResult,
    TwoStageEstimate,
    estimate_relative_pose,
    map_refine,
    run_lm,
)
from .residuals import line_residuals, params_to_pose, plane_residuals, pose_to_params
from .trajectory import Trajectory, TrajectoryOrderError, accumulate

__all__ = [
    "DegenerateStage",
    "EdgeCorrespondence",
    "EdgeMatches",
    "FeatureMap",
    "OdometryConfig",
    "PlanarCorrespondence",
    "PlanarMatches",
    "RefineResult",
    "StageResult",
    "Trajectory",
    "TrajectoryOrderError",
    "TwoStageEstimate",
    "accumulate",
    "estimate_relative_pose",
    "line_residuals",
    "map_refine",
    "match_edge",
    "match_planar",
    "params_to_pose",
    "plane_residuals",
    "pose_to_params",
    "run_lm",
]

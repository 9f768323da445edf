"""Two-stage Levenberg-Marquardt scan-to-scan registration.

Stage 1 fits (tz, roll, pitch) to ground planar correspondences with
(tx, ty, yaw) frozen; stage 2 fits (tx, ty, yaw) to edge correspondences
with the stage-1 result frozen. Correspondences are re-matched at every
outer iteration; residuals are robustified with a Huber loss.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..features import FeatureSet
from ..geometry import ConfigurationError, SE3Pose
from .correspondences import match_edge, match_planar
from .residuals import (
    PITCH,
    ROLL,
    STAGE1_DOF,
    STAGE2_DOF,
    TX,
    TY,
    TZ,
    YAW,
    huber_cost,
    huber_weights,
    line_residuals,
    params_to_pose,
    plane_residuals,
    pose_to_params,
)


class DegenerateStage(RuntimeError):
    def __init__(self, stage: str, found: int, required: int):
        super().__init__(f"stage {stage}: {found} valid correspondences, need {required}")
        self.stage = stage
        self.found = found
        self.required = required


@dataclass(frozen=True)
class OdometryConfig:
    huber_delta: float = 0.1
    max_iterations: int = 25
    convergence_threshold: float = 1e-6
    max_corr_dist: float = 1.0
    min_correspondences: int = 10
    edge_neighbors: int = 2
    stage1_nonground_planar: bool = False
    lm_lambda: float = 1e-4
    lm_factor: float = 10.0
    lm_max_tries: int = 10
    map_refine: bool = False
    map_window: int = 5
    map_neighbors: int = 5  # k nearest map points for PCA planes and lines

    def __post_init__(self):
        if self.huber_delta <= 0 or self.max_corr_dist <= 0 or self.convergence_threshold <= 0:
            raise ConfigurationError("odometry thresholds must be positive")
        if self.max_iterations < 1 or self.min_correspondences < 1 or self.map_window < 1:
            raise ConfigurationError("odometry counts must be >= 1")
        if self.edge_neighbors < 2 or self.map_neighbors < 3:
            raise ConfigurationError("edge_neighbors must be >= 2 and map_neighbors >= 3")
        if self.lm_factor <= 1 or self.lm_lambda <= 0:
            raise ConfigurationError("LM damping settings must be positive, factor > 1")


@dataclass
class StageResult:
    params: np.ndarray  # full 6-vector after the stage
    iterations: int = 0
    converged: bool = False
    n_correspondences: int = 0
    cost: float = 0.0
    mean_residual: float = 0.0
    accepted_steps: list = field(default_factory=list)  # (cost_before, cost_after)


@dataclass
class TwoStageEstimate:
    stage1: StageResult
    stage2: StageResult
    combined: SE3Pose

    @property
    def converged(self) -> bool:
        return self.stage1.converged and self.stage2.converged

    @property
    def tz_roll_pitch(self) -> tuple[float, float, float]:
        p = self.stage1.params
        return float(p[TZ]), float(p[ROLL]), float(p[PITCH])

    @property
    def tx_ty_yaw(self) -> tuple[float, float, float]:
        p = self.stage2.params
        return float(p[TX]), float(p[TY]), float(p[YAW])


def _plane_problem(current, previous, config, tree, neighbors=3):
    def match(x):
        return match_planar(current, previous, params_to_pose(x), config.max_corr_dist, tree,
                            neighbors).only_valid()

    def residuals(x, m, jacobian=True):
        return plane_residuals(x, m.query, m.normals, m.offsets, jacobian)

    return match, residuals


def _edge_problem(current, previous, config, tree, neighbors=None):
    def match(x):
        return match_edge(current, previous, params_to_pose(x), config.max_corr_dist, tree,
                          neighbors or config.edge_neighbors).only_valid()

    def residuals(x, m, jacobian=True):
        return line_residuals(x, m.query, m.line_points, m.directions, jacobian)

    return match, residuals


def _joint_problem(problems):
    def match(x):
        return [m(x) for m, _ in problems]

    def residuals(x, ms, jacobian=True):
        parts = [res(x, m, jacobian) for (_, res), m in zip(problems, ms)]
        if not jacobian:
            return np.concatenate(parts)
        return np.concatenate([p[0] for p in parts]), np.vstack([p[1] for p in parts])

    return match, residuals


def _count(m) -> int:
    return sum(len(x) for x in m) if isinstance(m, list) else len(m)


def run_lm(x0, free, match, residuals, config: OdometryConfig, stage: str) -> StageResult:
    """Damped Gauss-Newton on the free parameters with outer re-matching.

    On fixed correspondences a step is accepted only when it does not raise
    the Huber cost; otherwise damping grows by ``lm_factor``.
    """
    x = np.array(x0, dtype=np.float64)
    free = list(free)
    delta = config.huber_delta
    lam = config.lm_lambda
    result = StageResult(params=x.copy())
    for it in range(1, config.max_iterations + 1):
        m = match(x)
        n = _count(m)
        if n < config.min_correspondences:
            raise DegenerateStage(stage, n, config.min_correspondences)
        r, J = residuals(x, m)
        J = J[:, free]
        w = huber_weights(r, delta)
        cost = huber_cost(r, delta)
        H = J.T @ (w[:, None] * J)
        g = J.T @ (w * r)
        diag = np.diag(H).copy()
        diag += 1e-9 * max(diag.max(), 1e-12)
        step = None
        for _ in range(config.lm_max_tries):
            try:
                dx = np.linalg.solve(H + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= config.lm_factor
                continue
            x_try = x.copy()
            x_try[free] += dx
            cost_try = huber_cost(residuals(x_try, m, jacobian=False), delta)
            if cost_try <= cost:
                step = dx
                result.accepted_steps.append((cost, cost_try))
                x = x_try
                lam = max(lam / config.lm_factor, 1e-12)
                break
            lam *= config.lm_factor
        result.iterations = it
        result.n_correspondences = n
        if step is None:
            # no descent direction at any damping: at a (local) minimum
            result.converged = True
            break
        if np.linalg.norm(step) < config.convergence_threshold:
            result.converged = True
            break

    m = match(x)
    r = residuals(x, m, jacobian=False)
    result.params = x
    result.n_correspondences = _count(m)
    result.cost = huber_cost(r, delta)
    result.mean_residual = float(np.mean(np.abs(r))) if len(r) else 0.0
    return result


def estimate_relative_pose(current: FeatureSet, previous: FeatureSet, init: SE3Pose | None = None,
                           config: OdometryConfig | None = None) -> TwoStageEstimate:
    """Pose of the current frame in the previous frame (maps current points into it)."""
    config = config or OdometryConfig()
    init = init or SE3Pose.identity()
    if config.stage1_nonground_planar:
        cur_planar, prev_planar = current.planar_points, previous.planar_points
    else:
        cur_planar, prev_planar = current.ground_planar, previous.ground_planar
    if len(prev_planar) < 3:
        raise DegenerateStage("1", 0, config.min_correspondences)
    if len(previous.edge_points) < 2:
        raise DegenerateStage("2", 0, config.min_correspondences)

    x0 = pose_to_params(init)
    match1, res1 = _plane_problem(cur_planar, prev_planar, config, cKDTree(prev_planar))
    s1 = run_lm(x0, STAGE1_DOF, match1, res1, config, "1")
    match2, res2 = _edge_problem(current.edge_points, previous.edge_points, config,
                                 cKDTree(previous.edge_points))
    s2 = run_lm(s1.params, STAGE2_DOF, match2, res2, config, "2")
    return TwoStageEstimate(s1, s2, params_to_pose(s2.params))


class FeatureMap:
    """Sliding window of the last ``window`` frames' features in world coordinates."""

    def __init__(self, window: int = 5):
        self._frames = deque(maxlen=window)

    def add(self, features: FeatureSet, world_pose: SE3Pose) -> None:
        self._frames.append(features.transformed(world_pose))

    def __len__(self) -> int:
        return len(self._frames)

    @property
    def edge_points(self) -> np.ndarray:
        return np.vstack([f.edge_points for f in self._frames]) if self._frames else np.empty((0, 3))

    @property
    def planar_points(self) -> np.ndarray:
        return np.vstack([f.planar_points for f in self._frames]) if self._frames else np.empty((0, 3))


@dataclass
class RefineResult:
    pose: SE3Pose
    applied: bool
    stage: StageResult
    initial_mean_residual: float


def map_refine(current: FeatureSet, feature_map: FeatureMap, init: SE3Pose,
               config: OdometryConfig | None = None) -> RefineResult:
    """Joint 6-DoF refinement of a world pose against the windowed map.

    The refined pose is used only if the solver converged and lowered the
    mean absolute residual; otherwise ``init`` is kept.
    """
    config = config or OdometryConfig()
    if len(feature_map) == 0:
        raise ValueError("map_refine needs a non-empty feature map")
    mp, me = feature_map.planar_points, feature_map.edge_points
    if len(mp) < 3:
        raise DegenerateStage("map", 0, config.min_correspondences)
    k = config.map_neighbors
    problems = [_plane_problem(current.planar_points, mp, config, cKDTree(mp), k)]
    if len(me) >= 2:
        problems.append(_edge_problem(current.edge_points, me, config, cKDTree(me), k))
    match, residuals = _joint_problem(problems)

    x0 = pose_to_params(init)
    r0 = residuals(x0, match(x0), jacobian=False)
    mean0 = float(np.mean(np.abs(r0))) if len(r0) else 0.0
    stage = run_lm(x0, range(6), match, residuals, config, "map")
    applied = stage.converged and stage.mean_residual < mean0
    pose = params_to_pose(stage.params) if applied else init
    return RefineResult(pose, applied, stage, mean0)

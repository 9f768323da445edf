"""Point-to-plane / point-to-line residuals and their analytic Jacobians.

The pose is parameterized as x = [tx, ty, tz, roll, pitch, yaw] with
R = Rz(yaw) Ry(pitch) Rx(roll); a query point p maps to q = R p + t.
"""

from __future__ import annotations

import math

import numpy as np

from ..geometry import SE3Pose, euler_from_rotation, rotation_from_euler

TX, TY, TZ, ROLL, PITCH, YAW = range(6)
STAGE1_DOF = (TZ, ROLL, PITCH)
STAGE2_DOF = (TX, TY, YAW)


def params_to_pose(x) -> SE3Pose:
    return SE3Pose(rotation_from_euler(x[ROLL], x[PITCH], x[YAW]), x[:3])


def pose_to_params(pose: SE3Pose) -> np.ndarray:
    roll, pitch, yaw = euler_from_rotation(pose.rotation)
    return np.array([*pose.translation, roll, pitch, yaw])


def _rotation_derivatives(x) -> tuple[np.ndarray, list[np.ndarray]]:
    cr, sr = math.cos(x[ROLL]), math.sin(x[ROLL])
    cp, sp = math.cos(x[PITCH]), math.sin(x[PITCH])
    cy, sy = math.cos(x[YAW]), math.sin(x[YAW])
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    drx = np.array([[0, 0, 0], [0, -sr, -cr], [0, cr, -sr]])
    dry = np.array([[-sp, 0, cp], [0, 0, 0], [-cp, 0, -sp]])
    drz = np.array([[-sy, -cy, 0], [cy, -sy, 0], [0, 0, 0]])
    return rz @ ry @ rx, [rz @ ry @ drx, rz @ dry @ rx, drz @ ry @ rx]


def transform_with_jacobian(x, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """q = R p + t for every point and dq/dx with shape (N, 3, 6)."""
    R, dR = _rotation_derivatives(x)
    q = points @ R.T + x[:3]
    J = np.zeros((len(points), 3, 6))
    J[:, :, :3] = np.eye(3)
    for k, d in enumerate(dR):
        J[:, :, 3 + k] = points @ d.T
    return q, J


def plane_residuals(x, points, normals, offsets, jacobian: bool = True):
    """Signed distances n . (R p + t) + d and, optionally, their (N, 6) Jacobian."""
    q, dq = transform_with_jacobian(x, points)
    r = np.einsum("ij,ij->i", q, normals) + offsets
    if not jacobian:
        return r
    return r, np.einsum("ij,ijk->ik", normals, dq)


def line_residuals(x, points, line_points, directions, jacobian: bool = True):
    """Distances |(I - u u^T)(R p + t - p0)| and, optionally, their (N, 6) Jacobian.

    The Jacobian row is zero where the distance vanishes (non-differentiable).
    """
    q, dq = transform_with_jacobian(x, points)
    w = q - line_points
    v = w - np.einsum("ij,ij->i", w, directions)[:, None] * directions
    r = np.linalg.norm(v, axis=1)
    if not jacobian:
        return r
    safe = r > 1e-12
    g = np.zeros_like(v)
    g[safe] = v[safe] / r[safe, None]
    return r, np.einsum("ij,ijk->ik", g, dq)


def huber_weights(r: np.ndarray, delta: float) -> np.ndarray:
    a = np.abs(r)
    w = np.ones_like(a)
    big = a > delta
    w[big] = delta / a[big]
    return w


def huber_cost(r: np.ndarray, delta: float) -> float:
    a = np.abs(r)
    return float(np.sum(np.where(a <= delta, 0.5 * a * a, delta * (a - 0.5 * delta))))

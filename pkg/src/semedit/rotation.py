"""Axis-angle rotation utilities with exact derivatives.

Rotations are carried as axis-angle vectors r (direction = axis, norm =
angle). Derivatives use the SO(3) left Jacobian J_l, for which
R(r + d) ~ exp([J_l(r) d]x) R(r); all coefficient functions switch to their
Taylor series near zero angle so there are no NaNs or precision cliffs at
the identity.
"""

from typing import Tuple

import numpy as np

__all__ = [
    "skew",
    "expmap",
    "logmap",
    "rotation_derivatives",
    "left_jacobian",
    "left_jacobian_inv",
    "compose",
    "compose_jacobian",
    "geodesic_angle",
    "squared_geodesic",
]

_EPS_ANGLE = 1e-4  # below this, use series expansions


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def expmap(r: np.ndarray) -> np.ndarray:
    """Rodrigues formula; returns exactly the identity for r = 0."""
    r = np.asarray(r, dtype=np.float64)
    theta = np.linalg.norm(r)
    k = skew(r)
    if theta < _EPS_ANGLE:
        t2 = theta * theta
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0        # sin(t)/t
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0       # (1-cos(t))/t^2
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def logmap(R: np.ndarray) -> np.ndarray:
    """Axis-angle of a rotation matrix; angle in [0, pi]."""
    c = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(c)
    vec = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < _EPS_ANGLE:
        t2 = theta * theta
        return vec * (0.5 + t2 / 12.0 + 7.0 * t2 * t2 / 720.0)
    if np.pi - theta > 1e-6:
        return vec * (theta / (2.0 * np.sin(theta)))
    # near pi the skew part vanishes; recover the axis from the symmetric part
    A = (R + np.eye(3)) / 2.0
    axis = np.sqrt(np.maximum(np.diag(A), 0.0))
    # fix signs using the largest component
    i = int(np.argmax(axis))
    if axis[i] > 0:
        for j in range(3):
            if j != i and A[i, j] < 0:
                axis[j] = -axis[j]
    n = np.linalg.norm(axis)
    if n > 0:
        axis = axis / n
    if vec @ axis < 0:
        axis = -axis
    return axis * theta


def left_jacobian(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    theta = np.linalg.norm(r)
    k = skew(r)
    if theta < _EPS_ANGLE:
        t2 = theta * theta
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0        # (1-cos t)/t^2
        c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0  # (t-sin t)/t^3
    else:
        b = (1.0 - np.cos(theta)) / (theta * theta)
        c = (theta - np.sin(theta)) / (theta ** 3)
    return np.eye(3) + b * k + c * (k @ k)


def left_jacobian_inv(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    theta = np.linalg.norm(r)
    k = skew(r)
    if theta < _EPS_ANGLE:
        t2 = theta * theta
        c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        half = theta / 2.0
        c = (1.0 - half / np.tan(half)) / (theta * theta)
    return np.eye(3) - 0.5 * k + c * (k @ k)


def rotation_derivatives(r: np.ndarray) -> np.ndarray:
    """Stack of dR/dr_i, shape (3, 3, 3): [i] is the derivative of expmap(r)
    with respect to component i."""
    R = expmap(r)
    J = left_jacobian(r)
    return np.stack([skew(J[:, i]) @ R for i in range(3)])


def compose(r_edit: np.ndarray, r_current: np.ndarray) -> np.ndarray:
    """Axis-angle of expmap(r_edit) @ expmap(r_current)."""
    return logmap(expmap(r_edit) @ expmap(r_current))


def compose_jacobian(r_edit: np.ndarray, r_current: np.ndarray) -> np.ndarray:
    """d compose(r_edit, r) / dr at r = r_current (3x3)."""
    r_out = compose(r_edit, r_current)
    return left_jacobian_inv(r_out) @ expmap(r_edit) @ left_jacobian(r_current)


def geodesic_angle(r1: np.ndarray, r2: np.ndarray) -> float:
    """Angle of the relative rotation R(r1)^T R(r2), in [0, pi]."""
    R_rel = expmap(r1).T @ expmap(r2)
    c = np.clip((np.trace(R_rel) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.arccos(c))


def squared_geodesic(r_pred: np.ndarray, r_gt: np.ndarray) -> Tuple[float, np.ndarray]:
    """Squared geodesic angle between two axis-angle rotations and its
    gradient with respect to r_pred.

    Smooth at coincidence (gradient -> 0); the antipodal point theta = pi is
    a genuine singularity of the squared distance, where the gradient
    magnitude is clamped via sin(theta) >= 1e-7.
    """
    R_p = expmap(r_pred)
    R_g = expmap(r_gt)
    c = np.clip((np.trace(R_p.T @ R_g) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(c)
    J = left_jacobian(r_pred)
    if theta < _EPS_ANGLE:
        t2 = theta * theta
        theta_over_sin = 1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
    else:
        theta_over_sin = theta / max(np.sin(theta), 1e-7)
    grad = np.empty(3)
    for i in range(3):
        dR = skew(J[:, i]) @ R_p
        # d(theta^2)/dr_i = 2 theta * (-1/sin theta) * (1/2) <dR, R_g>_F
        grad[i] = -theta_over_sin * float((dR * R_g).sum())
    return float(theta * theta), grad

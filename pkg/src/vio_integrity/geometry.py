"""Pose representation, rectified stereo projection, and measurement Jacobians.

Conventions
-----------
A :class:`Pose` stores the camera position ``t`` in the world frame and the
world-to-camera rotation matrix ``R``; a world point ``p`` maps into the
camera frame as ``R @ (p - t)`` with the optical axis along +z.

A rectified stereo rig with focal lengths ``(fu, fv)``, principal point
``(cu, cv)`` and baseline ``b`` measures a camera-frame point ``(x, y, z)``
as the triple ``(u, v, d)``::

    u = fu * x / z + cu      left horizontal pixel
    v = fv * y / z + cv      left vertical pixel
    d = fu * b / z           disparity in pixels

Pose perturbations are 6-vectors ``[dt, dtheta]``.  The first three
components shift the camera position in the world frame (meters); the last
three apply the left multiplicative rotation update
``R <- exp(-skew(dtheta)) @ R`` (radians).  :func:`measurement_jacobian`
and :func:`retract` both commit to this ordering and sign convention, so
the translation columns of the Jacobian correspond exactly to world-frame
position shifts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DepthNonPositive

# Depth cutoff (meters) below which a projection is rejected.
DEFAULT_Z_MIN = 1e-6

# Angle (radians) below which the rotation exponential switches to its
# series expansion to avoid 0/0 in the Rodrigues coefficients.
SMALL_ANGLE = 1e-8

_ORTHONORMAL_TOL = 1e-9


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: ``skew(a) @ b == np.cross(a, b)``."""
    x, y, z = v
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def rotation_exp(omega: np.ndarray) -> np.ndarray:
    """Rotation matrix for a rotation vector, Rodrigues closed form.

    Falls back to the second-order series below ``SMALL_ANGLE`` where the
    closed-form coefficients lose precision; the truncation error there is
    below double-precision resolution.
    """
    omega = np.asarray(omega, dtype=float)
    theta = float(np.linalg.norm(omega))
    k = skew(omega)
    if theta < SMALL_ANGLE:
        return np.eye(3) + k + 0.5 * (k @ k)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Project a near-rotation matrix onto SO(3) (closest in Frobenius norm)."""
    u, _, vt = np.linalg.svd(m)
    if np.linalg.det(u @ vt) < 0.0:
        u = u.copy()
        u[:, -1] = -u[:, -1]
    return u @ vt


def _as_readonly(a: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    out = np.array(a, dtype=float)
    if out.shape != shape:
        raise ValueError(f"expected shape {shape}, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError("array contains non-finite values")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Pose:
    """Camera pose: position in the world frame plus world-to-camera rotation."""

    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "translation",
                           _as_readonly(self.translation, (3,)))
        object.__setattr__(self, "rotation", _as_readonly(self.rotation, (3, 3)))
        r = self.rotation
        defect = np.max(np.abs(r.T @ r - np.eye(3)))
        if defect > _ORTHONORMAL_TOL or np.linalg.det(r) < 0.0:
            raise ValueError(
                f"rotation is not orthonormal (defect {defect:.3e})")


def identity_pose() -> Pose:
    return Pose(np.zeros(3), np.eye(3))


@dataclass(frozen=True)
class Landmark:
    """A mapped 3D point with a stable integer identity."""

    id: int
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _as_readonly(self.position, (3,)))


@dataclass(frozen=True)
class StereoIntrinsics:
    """Rectified stereo camera parameters, all in pixels except the baseline.

    Attributes
    ----------
    fu, fv : float
        Focal lengths.
    cu, cv : float
        Principal point.
    baseline : float
        Horizontal distance between the two optical centers (meters).
    """

    fu: float
    fv: float
    cu: float
    cv: float
    baseline: float

    def __post_init__(self):
        if not (self.fu > 0.0 and self.fv > 0.0 and self.baseline > 0.0):
            raise ValueError("fu, fv and baseline must be positive")


def camera_points(pose: Pose, positions: np.ndarray) -> np.ndarray:
    """Map world points (N, 3) into the camera frame."""
    positions = np.asarray(positions, dtype=float)
    return (positions - pose.translation) @ pose.rotation.T


def transform_to_camera(pose: Pose, point) -> np.ndarray:
    """Map a single world point (or Landmark) into the camera frame."""
    position = point.position if isinstance(point, Landmark) else point
    return camera_points(pose, np.asarray(position, dtype=float)[None, :])[0]


def _check_depths(z: np.ndarray, z_min: float) -> None:
    bad = np.flatnonzero(z <= z_min)
    if bad.size:
        i = int(bad[0])
        raise DepthNonPositive(
            f"point depth {z[i]:.6g} m is at or behind the z_min={z_min:g} m cutoff",
            depth=float(z[i]), landmark_id=None)


def project_stereo_many(points_cam: np.ndarray, intr: StereoIntrinsics,
                        z_min: float = DEFAULT_Z_MIN) -> np.ndarray:
    """Project camera-frame points (N, 3) to (u, v, d) triples (N, 3)."""
    points_cam = np.asarray(points_cam, dtype=float)
    z = points_cam[:, 2]
    _check_depths(z, z_min)
    out = np.empty_like(points_cam)
    out[:, 0] = intr.fu * points_cam[:, 0] / z + intr.cu
    out[:, 1] = intr.fv * points_cam[:, 1] / z + intr.cv
    out[:, 2] = intr.fu * intr.baseline / z
    return out


def project_stereo(point_cam: np.ndarray, intr: StereoIntrinsics,
                   z_min: float = DEFAULT_Z_MIN) -> np.ndarray:
    """Project one camera-frame point to its (u, v, d) measurement.

    Raises
    ------
    DepthNonPositive
        If the point depth is at or below ``z_min``.
    """
    return project_stereo_many(np.asarray(point_cam, dtype=float)[None, :],
                               intr, z_min)[0]


def projection_jacobians(points_cam: np.ndarray,
                         intr: StereoIntrinsics) -> np.ndarray:
    """d(u, v, d)/d(point_cam) for each point, shape (N, 3, 3).

    Depths must already be valid; callers go through the projection first.
    """
    points_cam = np.asarray(points_cam, dtype=float)
    x, y, z = points_cam[:, 0], points_cam[:, 1], points_cam[:, 2]
    inv_z = 1.0 / z
    inv_z2 = inv_z * inv_z
    n = points_cam.shape[0]
    jac = np.zeros((n, 3, 3))
    jac[:, 0, 0] = intr.fu * inv_z
    jac[:, 0, 2] = -intr.fu * x * inv_z2
    jac[:, 1, 1] = intr.fv * inv_z
    jac[:, 1, 2] = -intr.fv * y * inv_z2
    jac[:, 2, 2] = -intr.fu * intr.baseline * inv_z2
    return jac


def measurement_jacobians(pose: Pose, positions: np.ndarray,
                          intr: StereoIntrinsics,
                          z_min: float = DEFAULT_Z_MIN) -> np.ndarray:
    """Jacobians of the stereo measurement wrt the pose perturbation.

    Parameters
    ----------
    pose : Pose
        Linearization point.
    positions : ndarray, shape (N, 3)
        World-frame landmark positions.

    Returns
    -------
    ndarray, shape (N, 3, 6)
        Columns 0..2 differentiate wrt the world-frame position shift,
        columns 3..5 wrt the rotation update ``R <- exp(-skew(dtheta)) @ R``.
    """
    pts_cam = camera_points(pose, positions)
    _check_depths(pts_cam[:, 2], z_min)
    proj = projection_jacobians(pts_cam, intr)
    n = pts_cam.shape[0]
    x, y, z = pts_cam[:, 0], pts_cam[:, 1], pts_cam[:, 2]
    point_jac = np.zeros((n, 3, 6))
    point_jac[:, :, :3] = -pose.rotation
    point_jac[:, 0, 4] = -z
    point_jac[:, 0, 5] = y
    point_jac[:, 1, 3] = z
    point_jac[:, 1, 5] = -x
    point_jac[:, 2, 3] = -y
    point_jac[:, 2, 4] = x
    return proj @ point_jac


def measurement_jacobian(pose: Pose, landmark, intr: StereoIntrinsics,
                         z_min: float = DEFAULT_Z_MIN) -> np.ndarray:
    """Single-landmark (3, 6) measurement Jacobian; see measurement_jacobians."""
    position = landmark.position if isinstance(landmark, Landmark) else landmark
    return measurement_jacobians(pose, np.asarray(position, dtype=float)[None, :],
                                 intr, z_min)[0]


def retract(pose: Pose, dx: np.ndarray) -> Pose:
    """Apply a 6-vector perturbation ``[dt, dtheta]`` to a pose.

    The rotation is re-orthonormalized after the update so that chains of
    retractions cannot drift off SO(3).

    Raises
    ------
    ValueError
        If the perturbation is non-finite or its rotation part reaches pi.
    """
    dx = np.asarray(dx, dtype=float)
    if dx.shape != (6,) or not np.all(np.isfinite(dx)):
        raise ValueError("perturbation must be a finite 6-vector")
    angle = float(np.linalg.norm(dx[3:]))
    if angle >= np.pi:
        raise ValueError(f"rotation perturbation magnitude {angle:.3f} rad "
                         "is out of the injective range")
    rot = nearest_rotation(rotation_exp(-dx[3:]) @ pose.rotation)
    return Pose(pose.translation + dx[:3], rot)

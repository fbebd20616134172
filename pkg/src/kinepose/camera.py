"""Extrinsic rotation/translation and fixed pinhole projection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .skeleton import CameraParams, Landmarks2D, Pose3D

DEGENERATE_PAIR = 1e-12


class BehindCameraError(ValueError):
    """A joint landed on or behind the near plane."""

    def __init__(self, joint: int, depth: float, name: str | None = None):
        self.joint = joint
        self.depth = depth
        label = f"joint {joint}" + (f" ({name})" if name else "")
        super().__init__(f"{label} is behind the camera: depth {depth:.6g}")


@dataclass(frozen=True)
class PerspectiveCamera:
    """Fixed intrinsics in normalized image units."""

    focal: float = 1.1
    principal_point: tuple[float, float] = (0.5, 0.5)
    z_min: float = 0.1

    def __post_init__(self):
        if not self.focal > 0:
            raise ValueError(f"focal must be positive, got {self.focal}")
        if not self.z_min > 0:
            raise ValueError(f"z_min must be positive, got {self.z_min}")
        object.__setattr__(self, "principal_point", tuple(float(x) for x in self.principal_point))


def _normalized_pairs(sincos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sc = np.asarray(sincos, dtype=float).reshape(3, 2)
    n = np.hypot(sc[:, 0], sc[:, 1])
    bad = np.flatnonzero(~(n > DEGENERATE_PAIR))
    if bad.size:
        raise ValueError(f"degenerate (sin, cos) pair for axis {bad.tolist()}")
    return sc / n[:, None], n


# Rotation about each axis is linear in (sin, cos): R = A0 + s*As + c*Ac.
_AXIS = {
    0: (np.diag([1.0, 0.0, 0.0]),
        np.array([[0, 0, 0], [0, 0, -1], [0, 1, 0]], float),
        np.diag([0.0, 1.0, 1.0])),
    1: (np.diag([0.0, 1.0, 0.0]),
        np.array([[0, 0, 1], [0, 0, 0], [-1, 0, 0]], float),
        np.diag([1.0, 0.0, 1.0])),
    2: (np.diag([0.0, 0.0, 1.0]),
        np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0]], float),
        np.diag([1.0, 1.0, 0.0])),
}


def _axis_rot(axis: int, s: float, c: float) -> np.ndarray:
    a0, a_s, a_c = _AXIS[axis]
    return a0 + s * a_s + c * a_c


def rotation_from_sincos(c: CameraParams | np.ndarray) -> np.ndarray:
    """``R = R_z(gamma) @ R_y(beta) @ R_x(alpha)`` from normalized (sin, cos) pairs."""
    sincos = c.angles_sincos if isinstance(c, CameraParams) else c
    sc, _ = _normalized_pairs(sincos)
    rx, ry, rz = (_axis_rot(k, *sc[k]) for k in range(3))
    return rz @ ry @ rx


def rotation_jacobian(sincos) -> tuple[np.ndarray, np.ndarray]:
    """Rotation and its derivative w.r.t. the six raw (unnormalized) entries.

    Returns:
        ``(R, dR)`` with ``dR[k] = dR / d sincos.ravel()[k]``, shape (6, 3, 3).
    """
    sc, n = _normalized_pairs(sincos)
    raw = np.asarray(sincos, dtype=float).reshape(3, 2)
    mats = [_axis_rot(k, *sc[k]) for k in range(3)]
    R = mats[2] @ mats[1] @ mats[0]
    dR = np.empty((6, 3, 3))
    for k in range(3):
        _, a_s, a_c = _AXIS[k]
        s, cc = raw[k]
        n3 = n[k] ** 3
        # d(normalized)/d(raw) for the pair
        dsn = np.array([cc * cc, -s * cc]) / n3
        dcn = np.array([-s * cc, s * s]) / n3
        for m in range(2):
            d_axis = dsn[m] * a_s + dcn[m] * a_c
            parts = [mats[0], mats[1], mats[2]]
            parts[k] = d_axis
            dR[2 * k + m] = parts[2] @ parts[1] @ parts[0]
    return R, dR


def _camera_space(p: Pose3D, c: CameraParams, cam: PerspectiveCamera, R, names):
    q = p.joints @ R.T + c.translation
    behind = np.flatnonzero(~(q[:, 2] > cam.z_min))
    if behind.size:
        j = int(behind[0])
        raise BehindCameraError(j, float(q[j, 2]), names[j] if names else None)
    return q


def project(
    p: Pose3D,
    c: CameraParams,
    cam: PerspectiveCamera = PerspectiveCamera(),
    joint_names: Sequence[str] | None = None,
) -> Landmarks2D:
    """Pinhole projection of ``R_c p + T_c`` into normalized image coordinates.

    Raises:
        BehindCameraError: if any joint has depth ``<= cam.z_min``.
    """
    R = rotation_from_sincos(c)
    q = _camera_space(p, c, cam, R, joint_names)
    uv = np.asarray(cam.principal_point) + cam.focal * q[:, :2] / q[:, 2:3]
    return Landmarks2D(uv)


def projection_jacobian(
    p: Pose3D,
    c: CameraParams,
    cam: PerspectiveCamera = PerspectiveCamera(),
    joint_names: Sequence[str] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of the landmarks w.r.t. the 3D joints and the packed camera.

    Returns:
        ``(d_pose, d_cam)`` of shapes ``(2J, 3J)`` (block diagonal) and
        ``(2J, 9)``; camera columns follow :meth:`CameraParams.pack`.
    """
    R, dR = rotation_jacobian(c.angles_sincos)
    q = _camera_space(p, c, cam, R, joint_names)
    J = len(q)
    f = cam.focal
    iz = 1.0 / q[:, 2]
    # d(uv)/dq per joint, (J, 2, 3)
    dq = np.zeros((J, 2, 3))
    dq[:, 0, 0] = f * iz
    dq[:, 1, 1] = f * iz
    dq[:, 0, 2] = -f * q[:, 0] * iz * iz
    dq[:, 1, 2] = -f * q[:, 1] * iz * iz

    d_pose = np.zeros((2 * J, 3 * J))
    blocks = dq @ R
    for j in range(J):
        d_pose[2 * j:2 * j + 2, 3 * j:3 * j + 3] = blocks[j]

    # dq/d(sincos_k) = dR_k @ p ; dq/dT = I
    dq_dang = np.einsum("kab,jb->jak", dR, p.joints)  # (J, 3, 6)
    d_cam = np.empty((J, 2, 9))
    d_cam[:, :, :6] = dq @ dq_dang
    d_cam[:, :, 6:] = dq
    return d_pose, d_cam.reshape(2 * J, 9)

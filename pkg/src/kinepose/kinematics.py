"""Forward kinematics: local kinematic parameters to canonical 3D joints."""

from __future__ import annotations

import numpy as np

from .skeleton import (
    ROLE_BONE,
    ROLE_HIP,
    ROLE_NECK,
    ROLE_PELVIS,
    KinematicTree,
    LocalKinematicParams,
    Pose3D,
)


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _drot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])


def root_joints(angle: float, tree: KinematicTree) -> dict[int, np.ndarray]:
    """Positions of the joints fixed by the canonical rule.

    Pelvis sits at the origin, the neck at ``(0, 0, len(neck))`` and each hip
    at ``R_x(angle) @ (len(hip) * rest_offset(hip))``.

    Returns:
        Mapping from joint index to 3-vector for pelvis, hips and neck.
    """
    if not np.isfinite(angle):
        raise ValueError("trunk/hip-line angle must be finite")
    R = rot_x(angle)
    out = {}
    for j, role in enumerate(tree.roles):
        if role == ROLE_PELVIS:
            out[j] = np.zeros(3)
        elif role == ROLE_NECK:
            out[j] = np.array([0.0, 0.0, tree.bone_length[j]])
        elif role == ROLE_HIP:
            out[j] = R @ (tree.bone_length[j] * tree.rest_offset[j])
    return out


def _check(angle, dirs, tree: KinematicTree) -> np.ndarray:
    dirs = np.asarray(dirs, dtype=float).reshape(-1, 3)
    if len(dirs) != tree.bone_count:
        raise ValueError(
            f"parameters carry {len(dirs)} directions but tree has {tree.bone_count} bones"
        )
    if not (np.isfinite(angle) and np.all(np.isfinite(dirs))):
        raise ValueError("kinematic parameters contain non-finite values")
    return dirs


def fk_positions(angle: float, dirs, tree: KinematicTree) -> np.ndarray:
    """Array-level forward kinematics; ``dirs`` are used as given (no normalization)."""
    dirs = _check(angle, dirs, tree)
    roots = root_joints(angle, tree)
    slot = tree.bone_slot
    p = np.zeros((tree.joint_count, 3))
    for j in tree.order:
        if tree.roles[j] == ROLE_BONE:
            p[j] = p[tree.parent[j]] + tree.bone_length[j] * dirs[slot[j]]
        else:
            p[j] = roots[j]
    return p


def forward_kinematics(v: LocalKinematicParams, tree: KinematicTree) -> Pose3D:
    """Place every joint: root rule first, then ``p(j) = p(Pa(j)) + len(j) * dir(j)``.

    Directions are taken in the canonical frame.
    """
    return Pose3D(fk_positions(v.trunk_hipline_angle, v.bone_dirs, tree))


def fk_jacobian(v: LocalKinematicParams | np.ndarray, tree: KinematicTree) -> np.ndarray:
    """Analytic ``d p3d / d packed(v)``, shape ``(3J, 1 + 3B)``.

    Row ``3j + k`` is coordinate ``k`` of joint ``j``; column 0 is the
    trunk/hip-line angle and columns ``1+3b .. 3+3b`` the b-th direction.
    Accepts either parameters or a raw packed vector.
    """
    if isinstance(v, LocalKinematicParams):
        angle, dirs = v.trunk_hipline_angle, v.bone_dirs
    else:
        x = np.asarray(v, dtype=float)
        angle, dirs = x[0], x[1:]
    _check(angle, dirs, tree)
    J = tree.joint_count
    jac = np.zeros((J, 3, tree.param_size))
    dR = _drot_x(angle)
    slot = tree.bone_slot
    for j in tree.order:
        role = tree.roles[j]
        if role == ROLE_HIP:
            jac[j, :, 0] = dR @ (tree.bone_length[j] * tree.rest_offset[j])
        elif role == ROLE_BONE:
            jac[j] = jac[tree.parent[j]]
            c = 1 + 3 * slot[j]
            jac[j, :, c:c + 3] += tree.bone_length[j] * np.eye(3)
    return jac.reshape(3 * J, tree.param_size)

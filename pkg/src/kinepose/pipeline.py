"""Composition of kinematics, projection and map rendering.

The full parameter vector used by the fitter and the gradient checks is
``concat(pack_params(v), camera.pack())``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import PerspectiveCamera, project, projection_jacobian
from .kinematics import fk_jacobian, fk_positions, forward_kinematics
from .maps import MapConfig, MapsJacobian, SpatialMaps, render_maps
from .skeleton import (
    CameraParams,
    KinematicTree,
    Landmarks2D,
    LocalKinematicParams,
    Pose3D,
    pack_params,
    unpack_params,
)


@dataclass(frozen=True, eq=False)
class ChainOutput:
    pose: Pose3D
    landmarks: Landmarks2D
    maps: SpatialMaps | None = None


def run_chain(
    v: LocalKinematicParams,
    c: CameraParams,
    tree: KinematicTree,
    cam: PerspectiveCamera = PerspectiveCamera(),
    map_cfg: MapConfig | None = None,
) -> ChainOutput:
    pose = forward_kinematics(v, tree)
    lm = project(pose, c, cam, tree.joint_names)
    maps = render_maps(lm, tree, map_cfg) if map_cfg is not None else None
    return ChainOutput(pose, lm, maps)


def pack_state(v: LocalKinematicParams, c: CameraParams) -> np.ndarray:
    return np.concatenate([pack_params(v), c.pack()])


def split_state(x, tree: KinematicTree) -> tuple[LocalKinematicParams, CameraParams]:
    """Inverse of :func:`pack_state`; renormalizes directions like ``unpack_params``."""
    x = np.asarray(x, dtype=float)
    n = tree.param_size
    return unpack_params(x[:n]), CameraParams.unpack(x[n:])


def _raw(x, tree: KinematicTree):
    x = np.asarray(x, dtype=float)
    n = tree.param_size
    if x.shape != (n + 9,):
        raise ValueError(f"state vector must have length {n + 9}, got {x.shape}")
    return x[0], x[1:n], CameraParams.unpack(x[n:])


def state_landmarks(x, tree: KinematicTree, cam: PerspectiveCamera = PerspectiveCamera()) -> np.ndarray:
    """Landmarks ``(J, 2)`` of a raw state vector (directions used as given)."""
    angle, dirs, c = _raw(x, tree)
    pose = Pose3D(fk_positions(angle, dirs, tree))
    return project(pose, c, cam, tree.joint_names).points


def state_landmark_jacobian(
    x, tree: KinematicTree, cam: PerspectiveCamera = PerspectiveCamera()
) -> tuple[np.ndarray, np.ndarray]:
    """Landmarks ``(J, 2)`` and ``d landmarks / d state``, shape ``(2J, P + 9)``."""
    angle, dirs, c = _raw(x, tree)
    pose = Pose3D(fk_positions(angle, dirs, tree))
    lm = project(pose, c, cam, tree.joint_names).points
    d_pose, d_cam = projection_jacobian(pose, c, cam, tree.joint_names)
    return lm, np.hstack([d_pose @ fk_jacobian(np.asarray(x)[:tree.param_size], tree), d_cam])


def state_maps(
    x, tree: KinematicTree, cam: PerspectiveCamera = PerspectiveCamera(), map_cfg: MapConfig = MapConfig()
) -> np.ndarray:
    """Stacked heat + affinity maps ``(J + L, H, W)`` of a raw state vector."""
    return render_maps(state_landmarks(x, tree, cam), tree, map_cfg).stack()


def maps_vjp_state(
    x,
    tree: KinematicTree,
    cotangent: np.ndarray,
    cam: PerspectiveCamera = PerspectiveCamera(),
    map_cfg: MapConfig = MapConfig(),
) -> np.ndarray:
    """Pull a cotangent on the stacked maps back to the full state vector."""
    lm, jac = state_landmark_jacobian(x, tree, cam)
    g_lm = MapsJacobian(lm, tree.limbs, map_cfg).vjp(cotangent)
    return jac.T @ g_lm.ravel()

"""Seeded synthetic poses and cameras for fixtures and demos."""

from __future__ import annotations

import math

import numpy as np

from .skeleton import CameraParams, KinematicTree, LocalKinematicParams

DEFAULT_TRANSLATION = (0.0, 0.0, 5.0)


def synth_pose(
    seed: int,
    tree: KinematicTree,
    translation=DEFAULT_TRANSLATION,
) -> tuple[LocalKinematicParams, CameraParams]:
    """Uniform-on-sphere bone directions, trunk angle in [-pi/4, pi/4],
    camera angles in [-pi/6, pi/6]. Same seed, same bytes."""
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(tree.bone_count, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    angle = rng.uniform(-math.pi / 4, math.pi / 4)
    cam_angles = rng.uniform(-math.pi / 6, math.pi / 6, size=3)
    return LocalKinematicParams(angle, dirs), CameraParams.from_angles(*cam_angles, translation=translation)


def perturb_directions(v: LocalKinematicParams, max_angle: float, rng) -> LocalKinematicParams:
    """Rotate every bone direction by a random angle in [0, max_angle] about a random perpendicular axis."""
    out = []
    for d in v.bone_dirs:
        axis = np.cross(d, rng.normal(size=3))
        while np.linalg.norm(axis) < 1e-6:  # draw was parallel to d
            axis = np.cross(d, rng.normal(size=3))
        axis /= np.linalg.norm(axis)
        theta = rng.uniform(0.0, max_angle)
        r = d * math.cos(theta) + np.cross(axis, d) * math.sin(theta)
        out.append(r / np.linalg.norm(r))
    return LocalKinematicParams(v.trunk_hipline_angle, np.array(out))

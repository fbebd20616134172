"""Pose/feature loss terms, flip/rotation transforms and the energy-model hook.

Every ``|a - b|`` term is a mean absolute error over all elements, so the
weights do not depend on joint count or feature length.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from scipy import ndimage

from .maps import MapConfig, SpatialMaps, render_maps
from .skeleton import KinematicTree, Landmarks2D, Pose3D

FLIP = "horizontal_flip"
ROTATION = "in_plane_rotation"


def _values(x) -> np.ndarray:
    if isinstance(x, Landmarks2D):
        return x.points
    if isinstance(x, Pose3D):
        return x.joints
    return np.asarray(x, dtype=float)


def mean_abs(a, b) -> float:
    a, b = _values(a), _values(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    return float(np.mean(np.abs(a - b)))


def _weight(name, w):
    if not w >= 0:
        raise ValueError(f"{name} must be nonnegative, got {w}")
    return float(w)


def image_l1(image, image_hat) -> float:
    """Mean absolute pixel difference; the image term of the paired loss."""
    return mean_abs(image, image_hat)


def loss_paired(image_diff, p, p_hat, f, f_hat, lambda1: float = 1.0, lambda2: float = 1.0) -> float:
    """``image_diff + lambda1 |p - p_hat| + lambda2 |f - f_hat|``.

    ``image_diff`` is supplied by the caller (see :func:`image_l1`); pass 0
    when no reconstruction is available.
    """
    return (float(image_diff)
            + _weight("lambda1", lambda1) * mean_abs(p, p_hat)
            + _weight("lambda2", lambda2) * mean_abs(f, f_hat))


def loss_unpaired(p, p_tilde, f, f_tilde, lambda2: float = 1.0) -> float:
    """``|p - p_tilde| + lambda2 |f - f_tilde|``; there is no image term."""
    return mean_abs(p, p_tilde) + _weight("lambda2", lambda2) * mean_abs(f, f_tilde)


def loss_prior(p3, p3_gt, p2, p2_gt, w3: float = 1.0, w2: float = 1.0) -> float:
    """Direct supervision on 3D joints and 2D landmarks."""
    return _weight("w3", w3) * mean_abs(p3, p3_gt) + _weight("w2", w2) * mean_abs(p2, p2_gt)


@dataclass(frozen=True)
class SpatialTransform:
    kind: str
    rotation_angle: float = 0.0

    def __post_init__(self):
        if self.kind not in (FLIP, ROTATION):
            raise ValueError(f"unknown transform kind {self.kind!r}")

    @classmethod
    def flip(cls) -> "SpatialTransform":
        return cls(FLIP)

    @classmethod
    def rotation(cls, angle: float) -> "SpatialTransform":
        return cls(ROTATION, float(angle))


def _mirror(mirror) -> np.ndarray:
    return mirror.mirror if isinstance(mirror, KinematicTree) else np.asarray(mirror, dtype=int)


def _rotate_points(p: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    d = p - 0.5
    return np.stack([0.5 + c * d[:, 0] - s * d[:, 1], 0.5 + s * d[:, 0] + c * d[:, 1]], axis=1)


def apply_transform(p, t: SpatialTransform, mirror=None) -> Landmarks2D:
    """Transform landmarks; a flip also swaps left/right joint labels.

    ``mirror`` (a permutation or a tree) is required for flips.
    """
    pts = _values(p).reshape(-1, 2)
    if t.kind == FLIP:
        if mirror is None:
            raise ValueError("a mirror map is required to flip landmarks")
        m = _mirror(mirror)
        flipped = np.stack([1.0 - pts[:, 0], pts[:, 1]], axis=1)
        return Landmarks2D(flipped[m])
    return Landmarks2D(_rotate_points(pts, t.rotation_angle))


def invert_transform(p, t: SpatialTransform, mirror=None) -> Landmarks2D:
    if t.kind == FLIP:
        return apply_transform(p, t, mirror)
    return Landmarks2D(_rotate_points(_values(p).reshape(-1, 2), -t.rotation_angle))


def transform_image(image, t: SpatialTransform, inverse: bool = False) -> np.ndarray:
    """Apply the transform to an ``(H, W[, C])`` image, consistent with the landmark version.

    Rotation resamples bilinearly about the image centre; pixels that fall
    outside are filled with 0.
    """
    img = np.asarray(image)
    if t.kind == FLIP:
        return img[:, ::-1].copy()
    angle = -t.rotation_angle if inverse else t.rotation_angle
    h, w = img.shape[:2]
    rows, cols = np.mgrid[0:h, 0:w].astype(float)
    # output pixel -> normalized -> inverse rotation -> source pixel
    x = (cols + 0.5) / w
    y = (rows + 0.5) / h
    src = _rotate_points(np.stack([x.ravel(), y.ravel()], axis=1), -angle)
    sc = src[:, 0] * w - 0.5
    sr = src[:, 1] * h - 0.5
    work = img.astype(float)
    if work.ndim == 2:
        out = ndimage.map_coordinates(work, [sr, sc], order=1, mode="constant").reshape(h, w)
    else:
        out = np.stack([
            ndimage.map_coordinates(work[..., k], [sr, sc], order=1, mode="constant").reshape(h, w)
            for k in range(work.shape[2])
        ], axis=-1)
    return out.astype(img.dtype) if np.issubdtype(img.dtype, np.floating) else out


@runtime_checkable
class EnergyModel(Protocol):
    """Frozen decoder/encoders used as an energy function.

    Implementations must be deterministic for fixed inputs.
    """

    def reconstruct(self, maps: SpatialMaps, features: np.ndarray, background: np.ndarray) -> np.ndarray:
        ...

    def encode_pose(self, image: np.ndarray) -> Landmarks2D:
        ...

    def encode_appearance(self, image: np.ndarray) -> np.ndarray:
        ...


def unpaired_consistency_residual(
    image,
    t: SpatialTransform,
    model: EnergyModel,
    mirror=None,
    reference_pose=None,
    reference_features=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Equivariance residuals of the pose encoder under ``t``.

    Computes ``p_tilde = T^-1(E_P(T(image)))`` and ``f_tilde = E_A(image)``
    and returns ``(reference_pose - p_tilde, reference_features - f_tilde)``.
    References default to the encodings of the untransformed image.
    """
    p_tilde = invert_transform(model.encode_pose(transform_image(image, t)), t, mirror).points
    f_tilde = np.asarray(model.encode_appearance(image), dtype=float)
    p_ref = _values(model.encode_pose(image) if reference_pose is None else reference_pose)
    f_ref = f_tilde if reference_features is None else np.asarray(reference_features, dtype=float)
    if p_ref.shape != p_tilde.shape or f_ref.shape != f_tilde.shape:
        raise ValueError("dimension mismatch between references and encodings")
    return p_ref - p_tilde, f_ref - f_tilde


def energy_unpaired_loss(
    p2d,
    features,
    background,
    t: SpatialTransform,
    model: EnergyModel,
    tree: KinematicTree,
    map_cfg: MapConfig = MapConfig(),
    lambda2: float = 1.0,
) -> float:
    """Unpaired loss through a frozen reconstruction model.

    Renders maps from ``p2d``, synthesizes ``I~ = reconstruct(maps, f, B_r)``,
    re-encodes it through ``t`` and its inverse, and scores the round trip.
    """
    maps = render_maps(p2d, tree, map_cfg)
    synth = model.reconstruct(maps, np.asarray(features, dtype=float), background)
    pose_res, feat_res = unpaired_consistency_residual(
        synth, t, model, tree.mirror, reference_pose=p2d, reference_features=features
    )
    zero_p, zero_f = np.zeros_like(pose_res), np.zeros_like(feat_res)
    return loss_unpaired(pose_res, zero_p, feat_res, zero_f, lambda2)

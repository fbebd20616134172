"""Spatial maps: joint heat-maps and limb affinity maps on an H x W lattice.

Normalized coordinate ``x`` maps to lattice column ``x * W - 0.5`` (pixel
centres sit at half-integer normalized offsets), likewise ``y`` to rows.
Maps are stored channel-first, ``(C, H, W)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .skeleton import KinematicTree, Landmarks2D

SIGMA_FLOOR = 0.5


@dataclass(frozen=True)
class MapConfig:
    """Rendering parameters; all lengths in lattice cells.

    ``window`` is an optional truncation radius in standard deviations.  The
    default ``None`` evaluates every pixel exactly.
    """

    height: int = 56
    width: int = 56
    sigma: float = 2.0
    sigma_y: float = 1.5
    alpha: float = 0.5
    sigma_floor: float = SIGMA_FLOOR
    window: float | None = None

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("lattice must be at least 1x1")
        for name in ("sigma", "sigma_y", "alpha", "sigma_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.window is not None and not self.window > 0:
            raise ValueError("window must be positive")

    @property
    def lattice(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True, eq=False)
class SpatialMaps:
    heat: np.ndarray
    affinity: np.ndarray
    config: MapConfig

    @property
    def lattice(self) -> tuple[int, int]:
        return self.config.lattice

    def stack(self) -> np.ndarray:
        return np.concatenate([self.heat, self.affinity], axis=0)


def to_lattice(points, lattice) -> np.ndarray:
    h, w = lattice
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    return np.stack([p[:, 0] * w - 0.5, p[:, 1] * h - 0.5], axis=1)


def from_lattice(coords, lattice) -> np.ndarray:
    h, w = lattice
    c = np.asarray(coords, dtype=float).reshape(-1, 2)
    return np.stack([(c[:, 0] + 0.5) / w, (c[:, 1] + 0.5) / h], axis=1)


def _grid(lattice):
    h, w = lattice
    return np.arange(w, dtype=float)[None, None, :], np.arange(h, dtype=float)[None, :, None]


def _points(p) -> np.ndarray:
    return p.points if isinstance(p, Landmarks2D) else np.asarray(p, dtype=float).reshape(-1, 2)


def _heat_terms(p, lattice, sigma, window):
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    c = to_lattice(_points(p), lattice)
    X, Y = _grid(lattice)
    ex = X - c[:, 0, None, None]
    ey = Y - c[:, 1, None, None]
    q = (ex * ex + ey * ey) / (sigma * sigma)
    val = np.exp(-0.5 * q)
    if window is not None:
        val = np.where(q <= window * window, val, 0.0)
    return val, ex, ey


def render_heatmaps(p, lattice=(56, 56), sigma: float = 2.0, window: float | None = None) -> np.ndarray:
    """One isotropic Gaussian per joint, peak 1 at the landmark. Shape (J, H, W)."""
    return _heat_terms(p, lattice, sigma, window)[0]


def _limb_terms(p, limbs, lattice, sigma_y, alpha, sigma_floor, window):
    if not sigma_y > 0 or not alpha > 0:
        raise ValueError("sigma_y and alpha must be positive")
    c = to_lattice(_points(p), lattice)
    limbs = np.asarray(limbs, dtype=int).reshape(-1, 2)
    a, b = c[limbs[:, 0]], c[limbs[:, 1]]
    d = b - a
    length = np.hypot(d[:, 0], d[:, 1])
    nondeg = length > 0
    safe = np.where(nondeg, length, 1.0)
    # zero-length limb: theta := 0
    cos_t = np.where(nondeg, d[:, 0] / safe, 1.0)
    sin_t = np.where(nondeg, d[:, 1] / safe, 0.0)
    sigma_x = np.maximum(alpha * length, sigma_floor)
    mu = 0.5 * (a + b)

    X, Y = _grid(lattice)
    ex = X - mu[:, 0, None, None]
    ey = Y - mu[:, 1, None, None]
    ct, st = cos_t[:, None, None], sin_t[:, None, None]
    ux = ct * ex + st * ey
    uy = -st * ex + ct * ey
    sx = sigma_x[:, None, None]
    q = (ux / sx) ** 2 + (uy / sigma_y) ** 2
    val = np.exp(-0.5 * q)
    if window is not None:
        val = np.where(q <= window * window, val, 0.0)
    return dict(val=val, ex=ex, ey=ey, ux=ux, uy=uy, cos=ct, sin=st, sx=sx,
                length=safe[:, None, None], nondeg=nondeg, sigma_x=sigma_x,
                stretched=(alpha * length > sigma_floor) & nondeg)


def render_affinity(
    p,
    limbs,
    lattice=(56, 56),
    sigma_y: float = 1.5,
    alpha: float = 0.5,
    sigma_floor: float = SIGMA_FLOOR,
    window: float | None = None,
) -> np.ndarray:
    """Rotated anisotropic Gaussian per limb, centred at its midpoint. Shape (L, H, W).

    Pixel offsets from the midpoint are rotated into the limb frame (limb along
    local x); the along-limb deviation is ``max(alpha * length, sigma_floor)``
    with the limb length measured in lattice cells.
    """
    return _limb_terms(p, limbs, lattice, sigma_y, alpha, sigma_floor, window)["val"]


def render_maps(p, tree: KinematicTree, cfg: MapConfig = MapConfig()) -> SpatialMaps:
    heat = render_heatmaps(p, cfg.lattice, cfg.sigma, cfg.window)
    aff = render_affinity(p, tree.limbs, cfg.lattice, cfg.sigma_y, cfg.alpha, cfg.sigma_floor, cfg.window)
    return SpatialMaps(heat, aff, cfg)


class MapsJacobian:
    """Derivatives of every map pixel w.r.t. the normalized landmarks.

    Stores per-pixel partials only (heat: w.r.t. its own joint; affinity:
    w.r.t. both endpoints), so products never materialize the full
    ``(C*H*W, 2J)`` matrix unless :meth:`dense` is called.
    """

    def __init__(self, p, limbs, cfg: MapConfig = MapConfig()):
        pts = _points(p)
        self.joint_count = len(pts)
        self.limbs = np.asarray(limbs, dtype=int).reshape(-1, 2)
        self.cfg = cfg
        h, w = cfg.lattice
        scale = np.array([w, h], dtype=float)

        hv, hx, hy = _heat_terms(pts, cfg.lattice, cfg.sigma, cfg.window)
        s2 = cfg.sigma ** 2
        # d heat / d landmark (normalized): (J, H, W, 2)
        self.heat_grad = np.stack([hv * hx / s2 * scale[0], hv * hy / s2 * scale[1]], axis=-1)

        t = _limb_terms(pts, self.limbs, cfg.lattice, cfg.sigma_y, cfg.alpha, cfg.sigma_floor, cfg.window)
        val, ex, ey, ux, uy = t["val"], t["ex"], t["ey"], t["ux"], t["uy"]
        ct, st, sx, L = t["cos"], t["sin"], t["sx"], t["length"]
        nondeg = t["nondeg"][:, None, None]
        stretched = t["stretched"][:, None, None]
        sy2 = cfg.sigma_y ** 2

        k_ux = -ux / sx ** 2
        k_uy = -uy / sy2
        k_sx = ux ** 2 / sx ** 3

        # gradients w.r.t. the offset e = u - mu
        ge_x = val * (k_ux * ct + k_uy * -st)
        ge_y = val * (k_ux * st + k_uy * ct)
        # gradients w.r.t. the limb vector d = b - a
        dux_dx = (ex - ux * ct) / L
        dux_dy = (ey - ux * st) / L
        duy_dx = (ey - uy * ct) / L
        duy_dy = (-ex - uy * st) / L
        dsx_dx = np.where(stretched, self.cfg.alpha * ct, 0.0)
        dsx_dy = np.where(stretched, self.cfg.alpha * st, 0.0)
        gd_x = np.where(nondeg, val * (k_ux * dux_dx + k_uy * duy_dx + k_sx * dsx_dx), 0.0)
        gd_y = np.where(nondeg, val * (k_ux * dux_dy + k_uy * duy_dy + k_sx * dsx_dy), 0.0)

        # (L, H, W, 4): d/d(a_x, a_y, b_x, b_y), normalized units
        self.aff_grad = np.stack([
            (-gd_x - 0.5 * ge_x) * scale[0],
            (-gd_y - 0.5 * ge_y) * scale[1],
            (gd_x - 0.5 * ge_x) * scale[0],
            (gd_y - 0.5 * ge_y) * scale[1],
        ], axis=-1)

    @property
    def channel_count(self) -> int:
        return self.joint_count + len(self.limbs)

    def jvp(self, tangent) -> np.ndarray:
        """Map tangent ``(J, 2)`` to pixel tangent ``(J + L, H, W)``."""
        t = np.asarray(tangent, dtype=float).reshape(self.joint_count, 2)
        heat = np.einsum("jhwk,jk->jhw", self.heat_grad, t)
        ends = np.concatenate([t[self.limbs[:, 0]], t[self.limbs[:, 1]]], axis=1)
        aff = np.einsum("lhwk,lk->lhw", self.aff_grad, ends)
        return np.concatenate([heat, aff], axis=0)

    def vjp(self, cotangent) -> np.ndarray:
        """Pull a pixel cotangent ``(J + L, H, W)`` back to ``(J, 2)``."""
        c = np.asarray(cotangent, dtype=float)
        J = self.joint_count
        g = np.einsum("jhwk,jhw->jk", self.heat_grad, c[:J])
        ga = np.einsum("lhwk,lhw->lk", self.aff_grad, c[J:])
        np.add.at(g, self.limbs[:, 0], ga[:, :2])
        np.add.at(g, self.limbs[:, 1], ga[:, 2:])
        return g

    def dense(self) -> np.ndarray:
        """Full ``((J + L) * H * W, 2J)`` matrix; only sensible for small lattices."""
        cols = []
        for k in range(2 * self.joint_count):
            e = np.zeros(2 * self.joint_count)
            e[k] = 1.0
            cols.append(self.jvp(e).ravel())
        return np.stack(cols, axis=1)


def maps_jacobian(p, tree_or_limbs, cfg: MapConfig = MapConfig()) -> MapsJacobian:
    limbs = tree_or_limbs.limbs if isinstance(tree_or_limbs, KinematicTree) else tree_or_limbs
    return MapsJacobian(p, limbs, cfg)


def soft_argmax(heat) -> np.ndarray:
    """Intensity-weighted centroid of a single (H, W) map, in normalized coordinates.

    Raises:
        ValueError: negative entries or an all-zero map.
    """
    m = np.asarray(heat, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a single (H, W) map, got shape {m.shape}")
    if np.any(m < 0):
        raise ValueError("map must be nonnegative")
    total = m.sum()
    if not total > 0:
        raise ValueError("cannot locate the peak of an all-zero map")
    h, w = m.shape
    cx = (m.sum(axis=0) @ np.arange(w)) / total
    cy = (m.sum(axis=1) @ np.arange(h)) / total
    return from_lattice([cx, cy], (h, w))[0]

"""Fitting kinematic and camera parameters through the differentiable chain.

Projected gradient descent: after every step each bone direction is put
back on the unit sphere and each (sin, cos) pair on the unit circle.  A
backtracking line search halves the step until the objective decreases.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .camera import BehindCameraError, PerspectiveCamera
from .maps import MapConfig, MapsJacobian, render_maps, soft_argmax
from .pipeline import (
    maps_vjp_state,
    pack_state,
    split_state,
    state_landmark_jacobian,
    state_landmarks,
    state_maps,
)
from .skeleton import CameraParams, KinematicTree, Landmarks2D, LocalKinematicParams
from .synth import perturb_directions, synth_pose

log = logging.getLogger(__name__)

OBJECTIVES = ("landmark_l2", "landmark_l1", "heatmap_l2")
_UNIT_SLACK = 4e-16


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 2000
    step_size: float = 1.0
    objective: str = "landmark_l2"
    tol: float = 1e-12
    seed: int = 0
    max_halvings: int = 20
    error_lattice: int = 256
    camera: PerspectiveCamera = field(default_factory=PerspectiveCamera)
    maps: MapConfig = field(default_factory=MapConfig)

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not self.tol >= 0:
            raise ValueError("tol must be nonnegative")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")


@dataclass
class FitResult:
    params: LocalKinematicParams
    camera: CameraParams
    objective_trace: list[float]
    converged: bool
    reprojection_error: float
    """Mean landmark distance to the target, in ``error_lattice`` pixels."""
    landmarks: Landmarks2D
    iterations: int
    line_search_failed: bool = False
    seed: int = 0

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


def _project_state(x: np.ndarray, tree: KinematicTree) -> np.ndarray:
    x = x.copy()
    n = tree.param_size
    dirs = x[1:n].reshape(-1, 3)
    pairs = x[n:n + 6].reshape(3, 2)
    for block in (dirs, pairs):
        norm = np.linalg.norm(block, axis=1)
        # leave blocks that are already unit to rounding, so a fixed point stays bit-exact
        off = np.abs(norm - 1.0) > _UNIT_SLACK
        block[off] /= norm[off, None]
    return x


class _Objective:
    def __init__(self, kind, tree, cam, map_cfg, target_points=None, target_maps=None):
        self.kind = kind
        self.tree = tree
        self.cam = cam
        self.map_cfg = map_cfg
        self.target_points = target_points
        self.target_maps = target_maps

    def value(self, x) -> float:
        try:
            if self.kind == "heatmap_l2":
                r = state_maps(x, self.tree, self.cam, self.map_cfg) - self.target_maps
                return float(np.mean(r * r))
            r = state_landmarks(x, self.tree, self.cam) - self.target_points
        except BehindCameraError:
            return np.inf
        return float(np.mean(r * r)) if self.kind == "landmark_l2" else float(np.mean(np.abs(r)))

    def gradient(self, x) -> np.ndarray:
        if self.kind == "heatmap_l2":
            r = state_maps(x, self.tree, self.cam, self.map_cfg) - self.target_maps
            return maps_vjp_state(x, self.tree, 2.0 * r / r.size, self.cam, self.map_cfg)
        lm, jac = state_landmark_jacobian(x, self.tree, self.cam)
        r = (lm - self.target_points).ravel()
        w = 2.0 * r / r.size if self.kind == "landmark_l2" else np.sign(r) / r.size
        return jac.T @ w


def _descend(obj: _Objective, x0, tree, cfg: FitConfig, target_points) -> FitResult:
    x = _project_state(np.asarray(x0, dtype=float), tree)
    f = obj.value(x)
    if not np.isfinite(f):
        state_landmarks(x, tree, obj.cam)  # re-raises the behind-camera error
        raise ValueError("initial objective is not finite")
    trace = [f]
    step = cfg.step_size
    converged = failed = False
    it = 0
    for it in range(cfg.max_iters):
        if f == 0.0:
            converged = True
            break
        g = obj.gradient(x)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
        if not np.any(g):
            converged = True
            break
        for _ in range(cfg.max_halvings + 1):
            x_try = _project_state(x - step * g, tree)
            f_try = obj.value(x_try)
            if f_try < f:
                break
            step *= 0.5
        else:
            failed = True
            log.debug("line search failed at iteration %d (objective %.3g)", it, f)
            break
        decrease = f - f_try
        x, f = x_try, f_try
        trace.append(f)
        step *= 2.0
        if decrease <= cfg.tol * f:
            converged = True
            it += 1
            break
    else:
        it = cfg.max_iters

    v, c = split_state(x, tree)
    lm = state_landmarks(x, tree, cfg.camera)
    err = float(np.mean(np.linalg.norm(lm - target_points, axis=1)) * cfg.error_lattice)
    return FitResult(v, c, trace, converged, err, Landmarks2D(lm), it, failed, cfg.seed)


def _points(target) -> np.ndarray:
    return target.points if isinstance(target, Landmarks2D) else np.asarray(target, dtype=float).reshape(-1, 2)


def fit_pose_to_landmarks(
    target,
    tree: KinematicTree,
    init: tuple[LocalKinematicParams, CameraParams],
    cfg: FitConfig = FitConfig(),
) -> FitResult:
    """Fit parameters and camera so the projected skeleton matches ``target``.

    ``cfg.objective`` may be ``landmark_l2`` (default) or ``landmark_l1``.
    """
    pts = _points(target).copy()
    if pts.shape != (tree.joint_count, 2) or not np.all(np.isfinite(pts)):
        raise ValueError("target must hold one finite 2D point per joint")
    if np.any((pts < 0) | (pts > 1)):
        log.warning("target has out-of-frame landmarks")
    kind = cfg.objective if cfg.objective != "heatmap_l2" else "landmark_l2"
    obj = _Objective(kind, tree, cfg.camera, cfg.maps, target_points=pts)
    return _descend(obj, pack_state(*init), tree, cfg, pts)


def fit_pose_to_heatmaps(
    target_maps,
    tree: KinematicTree,
    init: tuple[LocalKinematicParams, CameraParams],
    cfg: FitConfig = FitConfig(objective="heatmap_l2"),
    target_landmarks=None,
) -> FitResult:
    """Fit to stacked heat + affinity maps ``(J + L, H, W)`` rendered with ``cfg.maps``.

    The reported reprojection error is measured against ``target_landmarks``
    when given, otherwise against soft-argmax estimates from the heat channels.
    """
    m = np.asarray(target_maps, dtype=float)
    h, w = cfg.maps.lattice
    if m.shape != (tree.joint_count + tree.limb_count, h, w):
        raise ValueError(f"target maps have shape {m.shape}, expected "
                         f"{(tree.joint_count + tree.limb_count, h, w)}")
    if target_landmarks is None:
        ref = np.array([soft_argmax(m[j]) for j in range(tree.joint_count)])
    else:
        ref = _points(target_landmarks)
    obj = _Objective("heatmap_l2", tree, cfg.camera, cfg.maps, target_maps=m)
    return _descend(obj, pack_state(*init), tree, cfg, ref)


def fit_multistart(
    target,
    tree: KinematicTree,
    cfg: FitConfig = FitConfig(),
    init: tuple[LocalKinematicParams, CameraParams] | None = None,
    restarts: int = 8,
    spread: float = 0.5,
) -> FitResult:
    """Best of several seeded restarts; ties go to the lowest seed.

    Restart ``i`` uses seed ``cfg.seed + i``; restart 0 starts from ``init``
    (or the seed's synthetic pose), the others from perturbed copies.
    """
    if init is None:
        init = synth_pose(cfg.seed, tree)
    best = None
    for i in range(restarts):
        seed = cfg.seed + i
        v0, c0 = init
        if i:
            v0 = perturb_directions(v0, spread, np.random.default_rng(seed))
        run_cfg = replace(cfg, seed=seed)
        try:
            if cfg.objective == "heatmap_l2":
                res = fit_pose_to_heatmaps(target, tree, (v0, c0), run_cfg)
            else:
                res = fit_pose_to_landmarks(target, tree, (v0, c0), run_cfg)
        except (BehindCameraError, FloatingPointError) as exc:
            log.info("restart %d failed: %s", seed, exc)
            continue
        if best is None or res.objective < best.objective:
            best = res
    if best is None:
        raise RuntimeError("every restart failed")
    return best


# ---------------------------------------------------------------- gradcheck

STAGES = ("fk", "project", "maps", "full_chain")


@dataclass(frozen=True)
class GradcheckReport:
    stage: str
    seed: int
    eps: float
    max_rel_error: float
    worst_index: int
    coords: int


def relative_errors(analytic, numeric, floor: float = 1e-8) -> np.ndarray:
    """Per-coordinate ``|a - n| / max(|a|, |n|)``; below ``floor`` the absolute difference is used."""
    a, n = np.ravel(analytic), np.ravel(numeric)
    diff = np.abs(a - n)
    denom = np.maximum(np.abs(a), np.abs(n))
    return np.where(denom >= floor, diff / np.where(denom >= floor, denom, 1.0), diff)


def _stage_problem(stage, seed, tree, cam, map_cfg, point=None, weights=None):
    """Return (x0, f, grad) for a seeded scalarized stage objective ``w . out(x)``."""
    from .camera import project, projection_jacobian
    from .kinematics import fk_jacobian, fk_positions, forward_kinematics
    from .skeleton import Pose3D

    rng = np.random.default_rng(seed)
    v, c = synth_pose(seed, tree)
    if stage == "fk":
        x0 = pack_state(v, c)[:tree.param_size] if point is None else point
        w = rng.normal(size=3 * tree.joint_count)
        return x0, lambda x: w @ fk_positions(x[0], x[1:], tree).ravel(), lambda x: fk_jacobian(x, tree).T @ w
    if stage == "project":
        pose = forward_kinematics(v, tree)
        x0 = np.concatenate([pose.joints.ravel(), c.pack()]) if point is None else point
        w = rng.normal(size=2 * tree.joint_count)
        n = 3 * tree.joint_count

        def f(x):
            return w @ project(Pose3D(x[:n]), CameraParams.unpack(x[n:]), cam).points.ravel()

        def g(x):
            dp, dc = projection_jacobian(Pose3D(x[:n]), CameraParams.unpack(x[n:]), cam)
            return np.concatenate([dp.T @ w, dc.T @ w])
        return x0, f, g
    channels = tree.joint_count + tree.limb_count
    w = rng.normal(size=(channels,) + map_cfg.lattice) if weights is None else np.asarray(weights, float)
    if stage == "maps":
        lm = project(forward_kinematics(v, tree), c, cam).points.ravel()
        x0 = lm if point is None else point
        return (x0,
                lambda x: np.vdot(w, render_maps(x.reshape(-1, 2), tree, map_cfg).stack()),
                lambda x: MapsJacobian(x.reshape(-1, 2), tree.limbs, map_cfg).vjp(w).ravel())
    if stage == "full_chain":
        x0 = pack_state(v, c) if point is None else point
        return (x0,
                lambda x: np.vdot(w, state_maps(x, tree, cam, map_cfg)),
                lambda x: maps_vjp_state(x, tree, w, cam, map_cfg))
    raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")


def gradcheck(
    stage: str,
    seed: int = 0,
    eps: float = 1e-6,
    tree: KinematicTree | None = None,
    cam: PerspectiveCamera = PerspectiveCamera(),
    map_cfg: MapConfig = MapConfig(),
    point=None,
    floor: float = 1e-8,
    weights=None,
) -> GradcheckReport:
    """Compare the analytic gradient of a random linear functional of a stage's
    output against central differences at a seeded point (or ``point``).

    ``weights`` overrides the random map weights of the ``maps`` and
    ``full_chain`` stages, e.g. to probe a single pixel.
    """
    from .skeleton import default_h36m_tree

    if not 1e-8 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-8, 1e-3]")
    tree = tree or default_h36m_tree()
    x0, f, g = _stage_problem(stage, seed, tree, cam, map_cfg, point, weights)
    x0 = np.asarray(x0, dtype=float)
    analytic = g(x0)
    numeric = np.empty_like(x0)
    for k in range(x0.size):
        xp, xm = x0.copy(), x0.copy()
        xp[k] += eps
        xm[k] -= eps
        numeric[k] = (f(xp) - f(xm)) / (2 * eps)
    err = relative_errors(analytic, numeric, floor)
    k = int(np.argmax(err))
    return GradcheckReport(stage, seed, eps, float(err[k]), k, x0.size)

import numpy as np
import pytest

from kinepose.ik import (
    FitConfig,
    fit_multistart,
    fit_pose_to_heatmaps,
    fit_pose_to_landmarks,
    gradcheck,
    relative_errors,
)
from kinepose.kinematics import forward_kinematics
from kinepose.maps import MapConfig, from_lattice
from kinepose.pipeline import run_chain
from kinepose.skeleton import CameraParams
from kinepose.synth import perturb_directions, synth_pose


def _problem(tree, seed, max_angle, map_cfg=None):
    v, c = synth_pose(seed, tree)
    out = run_chain(v, c, tree, map_cfg=map_cfg)
    v0 = perturb_directions(v, max_angle, np.random.default_rng(seed + 1000))
    return v, c, v0, out


def _assert_unit(res):
    assert np.all(np.abs(np.linalg.norm(res.params.bone_dirs, axis=1) - 1) <= 1e-12)
    pairs = res.camera.angles_sincos
    assert np.all(np.abs(np.hypot(pairs[:, 0], pairs[:, 1]) - 1) <= 1e-12)


def test_fixed_point_landmarks(tree):
    v, c = synth_pose(0, tree)
    target = run_chain(v, c, tree).landmarks
    res = fit_pose_to_landmarks(target, tree, (v, c))
    assert res.converged and res.iterations == 0
    assert res.objective_trace == [0.0]
    assert res.reprojection_error == 0.0


def test_perturbed_landmark_fit_seed3(tree):
    v, c, v0, out = _problem(tree, 3, 0.2)
    res = fit_pose_to_landmarks(out.landmarks, tree, (v0, c), FitConfig(max_iters=2000))
    assert res.iterations <= 2000
    assert res.reprojection_error < 2.0
    _assert_unit(res)
    trace = np.array(res.objective_trace)
    assert np.all(np.diff(trace) < 0)


def test_fit_does_not_mutate_inputs(tree):
    v, c, v0, out = _problem(tree, 5, 0.2)
    target = out.landmarks.points.copy()
    dirs0 = v0.bone_dirs.copy()
    parent = tree.parent.copy()
    fit_pose_to_landmarks(target, tree, (v0, c), FitConfig(max_iters=20))
    assert np.array_equal(target, out.landmarks.points)
    assert np.array_equal(v0.bone_dirs, dirs0)
    assert np.array_equal(tree.parent, parent)


def test_l1_objective_decreases(tree):
    v, c, v0, out = _problem(tree, 6, 0.2)
    res = fit_pose_to_landmarks(out.landmarks, tree, (v0, c), FitConfig(max_iters=200, objective="landmark_l1"))
    assert np.all(np.diff(res.objective_trace) < 0)
    assert res.objective < res.objective_trace[0]
    _assert_unit(res)


def test_degenerate_target_terminates(tree):
    v, c = synth_pose(1, tree)
    target = np.full((tree.joint_count, 2), 0.5)
    res = fit_pose_to_landmarks(target, tree, (v, c), FitConfig(max_iters=300))
    assert np.isfinite(res.objective)
    assert np.all(np.diff(res.objective_trace) < 0)
    _assert_unit(res)


def test_target_shape_checked(tree):
    v, c = synth_pose(1, tree)
    with pytest.raises(ValueError):
        fit_pose_to_landmarks(np.zeros((3, 2)), tree, (v, c))


def test_config_validation():
    with pytest.raises(ValueError):
        FitConfig(max_iters=0)
    with pytest.raises(ValueError):
        FitConfig(step_size=0.0)
    with pytest.raises(ValueError):
        FitConfig(tol=-1.0)
    with pytest.raises(ValueError):
        FitConfig(objective="huber")


def test_heatmap_fixed_point(tree):
    v, c, _, out = _problem(tree, 2, 0.0, MapConfig())
    res = fit_pose_to_heatmaps(out.maps.stack(), tree, (v, c))
    assert res.iterations == 0 and res.converged
    assert res.objective == 0.0


def test_heatmap_fit_seed4(tree):
    v, c, v0, out = _problem(tree, 4, 0.1, MapConfig())
    cfg = FitConfig(objective="heatmap_l2", max_iters=150)
    res = fit_pose_to_heatmaps(out.maps.stack(), tree, (v0, c), cfg, target_landmarks=out.landmarks)
    assert res.reprojection_error < 3.0
    assert np.all(np.diff(res.objective_trace) < 0)
    _assert_unit(res)


def test_heatmap_sigma_mismatch(tree):
    v, c, v0, out = _problem(tree, 4, 0.1, MapConfig(sigma=2.5))
    cfg = FitConfig(objective="heatmap_l2", max_iters=150, maps=MapConfig(sigma=2.0))
    res = fit_pose_to_heatmaps(out.maps.stack(), tree, (v0, c), cfg, target_landmarks=out.landmarks)
    assert res.reprojection_error < 5.0


def test_heatmap_shape_checked(tree):
    v, c = synth_pose(0, tree)
    with pytest.raises(ValueError):
        fit_pose_to_heatmaps(np.zeros((3, 56, 56)), tree, (v, c))


def test_multistart_not_worse_than_single(tree):
    v, c, v0, out = _problem(tree, 8, 0.2)
    cfg = FitConfig(max_iters=60, seed=10)
    single = fit_pose_to_landmarks(out.landmarks, tree, (v0, c), cfg)
    best = fit_multistart(out.landmarks, tree, cfg, init=(v0, c), restarts=3)
    assert best.objective <= single.objective
    assert best.seed in (10, 11, 12)


def test_behind_camera_init_raises(tree):
    from kinepose.camera import BehindCameraError

    v, _ = synth_pose(0, tree)
    c = CameraParams.from_angles(0.0, 0.0, 0.0, translation=(0.0, 0.0, -5.0))
    target = np.full((tree.joint_count, 2), 0.5)
    with pytest.raises(BehindCameraError):
        fit_pose_to_landmarks(target, tree, (v, c))


def test_fk_is_camera_independent(tree):
    v, c = synth_pose(9, tree)
    other = CameraParams.from_angles(0.3, -0.2, 0.1, translation=(0.1, 0.2, 7.0))
    a = run_chain(v, c, tree).pose.joints
    b = run_chain(v, other, tree).pose.joints
    assert a.tobytes() == b.tobytes() == forward_kinematics(v, tree).joints.tobytes()


# ---------------------------------------------------------------- gradcheck


def test_perturb_survives_parallel_draw(tree):
    # same seed as synth_pose: the first axis draw is parallel to the first direction
    v, _ = synth_pose(6, tree)
    out = perturb_directions(v, 0.2, np.random.default_rng(6))
    cosines = np.sum(out.bone_dirs * v.bone_dirs, axis=1)
    assert np.all(cosines >= np.cos(0.2) - 1e-12)


def test_relative_errors_fallback():
    err = relative_errors([1.0, 1e-12, 0.0], [1.0 + 1e-9, 3e-12, 0.0])
    assert err[0] == pytest.approx(1e-9, rel=1e-3)
    assert err[1] == pytest.approx(2e-12)
    assert err[2] == 0.0


def test_gradcheck_fk_seed7(tree):
    assert gradcheck("fk", 7, 1e-6, tree).max_rel_error < 1e-6


def test_gradcheck_project(tree):
    assert gradcheck("project", 3, 1e-6, tree).max_rel_error < 1e-5


def test_gradcheck_full_chain_seed13(tree):
    rep = gradcheck("full_chain", 13, 1e-5, tree)
    assert rep.coords == tree.param_size + 9
    assert rep.max_rel_error < 1e-5


def test_gradcheck_maps_at_peak(tree):
    cfg = MapConfig()
    cells = np.stack([np.arange(tree.joint_count) * 3 + 2, np.full(tree.joint_count, 20)], axis=1)
    point = from_lattice(cells, cfg.lattice)
    weights = np.zeros((tree.joint_count + tree.limb_count,) + cfg.lattice)
    weights[0, 20, 2] = 1.0  # peak pixel of joint 0
    rep = gradcheck("maps", 0, 1e-5, tree, map_cfg=cfg, point=point.ravel(), weights=weights)
    assert rep.max_rel_error < 1e-6


def test_gradcheck_rejects_eps(tree):
    with pytest.raises(ValueError):
        gradcheck("fk", 0, 1e-2, tree)
    with pytest.raises(ValueError):
        gradcheck("bogus", 0, 1e-6, tree)

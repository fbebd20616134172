import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import central_diff, fk_oracle, max_rel_err, random_unit

from kinepose.kinematics import fk_jacobian, fk_positions, forward_kinematics, root_joints
from kinepose.skeleton import LocalKinematicParams, rest_params, tree_from_dict


def _random_params(tree, seed):
    rng = np.random.default_rng(seed)
    return LocalKinematicParams(rng.uniform(-math.pi, math.pi), random_unit(rng, tree.bone_count))


def test_root_joints_zero_angle(tree):
    roots = root_joints(0.0, tree)
    assert set(roots) == {tree.index(n) for n in ("pelvis", "left_hip", "right_hip", "neck")}
    for name in ("left_hip", "right_hip"):
        j = tree.index(name)
        assert np.array_equal(roots[j], tree.bone_length[j] * tree.rest_offset[j])
    assert np.array_equal(roots[tree.index("neck")], [0.0, 0.0, 1.0])
    assert np.array_equal(roots[tree.index("pelvis")], [0.0, 0.0, 0.0])


def test_root_joints_pi_negates_yz(tree):
    r0, rpi = root_joints(0.0, tree), root_joints(math.pi, tree)
    for name in ("left_hip", "right_hip"):
        j = tree.index(name)
        assert rpi[j][0] == r0[j][0]
        assert np.allclose(rpi[j][1:], -r0[j][1:], atol=1e-15)


def test_root_joints_quarter_radian(tree):
    # frozen from a scalar rotation-matrix oracle
    roots = root_joints(0.25, tree)
    expected = {
        "left_hip": [0.25957092329493203, 0.01926566223915548, -0.07545044756860816],
        "right_hip": [-0.25957092329493203, 0.01926566223915548, -0.07545044756860816],
    }
    for name, want in expected.items():
        assert np.allclose(roots[tree.index(name)], want, rtol=0, atol=1e-15)


def test_rest_pose(tree):
    p = forward_kinematics(rest_params(tree), tree).joints
    for j in range(tree.joint_count):
        want = np.zeros(3)
        k = j
        while tree.parent[k] >= 0:
            want += tree.bone_length[k] * tree.rest_offset[k]
            k = tree.parent[k]
        assert np.allclose(p[j], want, atol=1e-15)


def test_single_chain_step():
    cfg = {
        "joints": [
            {"name": "pelvis", "parent": None, "length": 0.0, "rest_offset": [0, 0, 1]},
            {"name": "neck", "parent": "pelvis", "length": 1.0, "rest_offset": [0, 0, 1], "role": "neck"},
            {"name": "head", "parent": "neck", "length": 0.4, "rest_offset": [0, 0, 1]},
        ],
    }
    tree = tree_from_dict(cfg)
    p = forward_kinematics(LocalKinematicParams(0.0, [[0.0, 1.0, 0.0]]), tree).joints
    assert np.array_equal(p[2], p[1] + 0.4 * np.array([0.0, 1.0, 0.0]))


def test_matches_recursive_oracle(tree):
    v = _random_params(tree, 7)
    dirs = {tree.joint_names[j]: v.bone_dirs[b].tolist() for b, j in enumerate(tree.bone_joints)}
    want = fk_oracle(v.trunk_hipline_angle, dirs)
    got = forward_kinematics(v, tree).joints
    for j, name in enumerate(tree.joint_names):
        assert np.allclose(got[j], want[name], rtol=0, atol=1e-14)


def test_non_finite_rejected(tree):
    dirs = np.tile([0.0, 0.0, 1.0], (13, 1))
    dirs[2] = [np.nan, 0.0, 1.0]
    with pytest.raises(ValueError):
        fk_positions(0.0, dirs, tree)


def test_wrong_bone_count(tree):
    with pytest.raises(ValueError, match="directions"):
        forward_kinematics(LocalKinematicParams(0.0, np.tile([0.0, 0.0, 1.0], (12, 1))), tree)


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_bone_lengths_conserved(tree, seed):
    p = forward_kinematics(_random_params(tree, seed), tree).joints
    for j in range(1, tree.joint_count):
        assert abs(np.linalg.norm(p[j] - p[tree.parent[j]]) - tree.bone_length[j]) < 1e-9
    assert np.array_equal(p[tree.index("pelvis")], [0.0, 0.0, 0.0])
    neck = p[tree.index("neck")]
    assert neck[0] == 0.0 and neck[1] == 0.0


def test_leaf_jacobian_block(tree):
    v = _random_params(tree, 1)
    jac = fk_jacobian(v, tree)
    for b, j in enumerate(tree.bone_joints):
        if not tree.children(j):
            block = jac[3 * j:3 * j + 3, 1 + 3 * b:4 + 3 * b]
            assert np.array_equal(block, tree.bone_length[j] * np.eye(3))


def test_jacobian_sparsity(tree):
    jac = fk_jacobian(_random_params(tree, 2), tree)
    for j in range(tree.joint_count):
        allowed = {j, *tree.ancestors(j)}
        for b, k in enumerate(tree.bone_joints):
            block = jac[3 * j:3 * j + 3, 1 + 3 * b:4 + 3 * b]
            if k not in allowed:
                assert not block.any()


def test_jacobian_finite_differences(tree):
    v = _random_params(tree, 7)
    x = np.concatenate([[v.trunk_hipline_angle], v.bone_dirs.ravel()])
    numeric = central_diff(lambda z: fk_positions(z[0], z[1:], tree), x, 1e-6)
    assert max_rel_err(fk_jacobian(v, tree), numeric) < 1e-6

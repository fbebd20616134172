"""Kinematic tree, parameter containers and packing.

The tree places four joints by a fixed canonical rule (pelvis at the origin,
neck on +z, two hips rotated by the trunk/hip-line angle) and every other
joint by a free unit direction from its parent.  Those "bone" joints are
the ones that consume a 3-vector of the packed parameter vector, in
depth-first order from the pelvis (children visited in index order).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

ROOT = -1

ROLE_PELVIS = "pelvis"
ROLE_HIP = "hip"
ROLE_NECK = "neck"
ROLE_BONE = "bone"
ROLES = (ROLE_PELVIS, ROLE_HIP, ROLE_NECK, ROLE_BONE)

UNIT_TOL = 1e-9
RENORM_FLAG_TOL = 1e-6
DEGENERATE_NORM = 1e-12


class TreeError(ValueError):
    """Raised when a kinematic tree is structurally invalid."""


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class KinematicTree:
    """Joint connectivity with canonical bone lengths and mirror map.

    Attributes:
        joint_names: J joint names.
        parent: (J,) parent index per joint, ``ROOT`` (-1) for the pelvis.
        bone_length: (J,) length to the parent in canonical units (0 for the pelvis).
        rest_offset: (J, 3) unit rest direction of each bone.
        mirror: (J,) involutive left/right permutation.
        limbs: (L, 2) joint index pairs used for affinity maps.
        roles: per-joint role, one of ``ROLES``.
    """

    joint_names: tuple[str, ...]
    parent: np.ndarray
    bone_length: np.ndarray
    rest_offset: np.ndarray
    mirror: np.ndarray
    limbs: np.ndarray
    roles: tuple[str, ...]
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "roles", tuple(self.roles))
        object.__setattr__(self, "parent", _frozen(self.parent, int))
        object.__setattr__(self, "bone_length", _frozen(self.bone_length))
        object.__setattr__(self, "rest_offset", _frozen(self.rest_offset).reshape(-1, 3))
        object.__setattr__(self, "mirror", _frozen(self.mirror, int))
        object.__setattr__(self, "limbs", _frozen(self.limbs, int).reshape(-1, 2))

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    @property
    def limb_count(self) -> int:
        return len(self.limbs)

    def index(self, name: str) -> int:
        return self.joint_names.index(name)

    def children(self, j: int) -> list[int]:
        return [int(k) for k in np.flatnonzero(self.parent == j)]

    @cached_property
    def order(self) -> tuple[int, ...]:
        """Cached :func:`topological_order`."""
        return tuple(topological_order(self))

    @cached_property
    def bone_joints(self) -> tuple[int, ...]:
        """Joints that consume a direction vector, in parameter order."""
        return tuple(j for j in self.order if self.roles[j] == ROLE_BONE)

    @cached_property
    def bone_slot(self) -> dict[int, int]:
        return {j: b for b, j in enumerate(self.bone_joints)}

    @cached_property
    def bone_count(self) -> int:
        return sum(r == ROLE_BONE for r in self.roles)

    @cached_property
    def param_size(self) -> int:
        return 1 + 3 * self.bone_count

    def ancestors(self, j: int) -> list[int]:
        out = []
        k = int(self.parent[j])
        while k != ROOT:
            out.append(k)
            k = int(self.parent[k])
        return out


def topological_order(tree: KinematicTree) -> list[int]:
    """Depth-first order from the root(s); every parent precedes its children.

    Raises:
        TreeError: on cycles, dangling parent indices, or missing roots.
    """
    J = tree.joint_count
    parent = tree.parent
    if parent.shape != (J,):
        raise TreeError(f"parent array has shape {parent.shape}, expected ({J},)")
    bad = [j for j in range(J) if parent[j] != ROOT and not 0 <= parent[j] < J]
    if bad:
        raise TreeError(f"parent index out of range for joints {bad}")
    roots = [j for j in range(J) if parent[j] == ROOT]
    if not roots:
        raise TreeError("no root joint")
    order: list[int] = []
    stack = list(reversed(roots))
    while stack:
        j = stack.pop()
        order.append(j)
        stack.extend(reversed(tree.children(j)))
    if len(order) != J:
        missing = sorted(set(range(J)) - set(order))
        raise TreeError(f"cycle through joints {missing}")
    return order


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_tree(tree: KinematicTree) -> ValidationReport:
    """Check tree invariants; never raises, returns every violation found."""
    J = tree.joint_count
    problems: list[str] = []

    try:
        topological_order(tree)
    except TreeError as exc:
        problems.append(f"cycle: {exc}")

    roots = [j for j in range(J) if tree.parent.shape == (J,) and tree.parent[j] == ROOT]
    if len(roots) != 1:
        problems.append(f"root: expected exactly one root, found {len(roots)}")
    elif tree.roles[roots[0]] != ROLE_PELVIS:
        problems.append(f"root: root joint {tree.joint_names[roots[0]]!r} is not the pelvis")

    if len(tree.roles) != J or any(r not in ROLES for r in tree.roles):
        problems.append("roles: unknown or missing joint roles")
    else:
        for j, r in enumerate(tree.roles):
            if r in (ROLE_HIP, ROLE_NECK) and (
                tree.parent[j] == ROOT or tree.roles[tree.parent[j]] != ROLE_PELVIS
            ):
                problems.append(f"roles: {r} joint {tree.joint_names[j]!r} must hang off the pelvis")
        if tree.roles.count(ROLE_NECK) > 1:
            problems.append("roles: more than one neck joint")

    if tree.mirror.shape != (J,) or sorted(tree.mirror.tolist()) != list(range(J)):
        problems.append("mirror: not a permutation of joint indices")
    elif np.any(tree.mirror[tree.mirror] != np.arange(J)):
        problems.append("mirror: not an involution")

    if tree.bone_length.shape != (J,):
        problems.append("length: bone_length has wrong shape")
    else:
        for j in range(J):
            if tree.parent.shape == (J,) and tree.parent[j] != ROOT:
                if not np.isfinite(tree.bone_length[j]) or tree.bone_length[j] <= 0:
                    problems.append(
                        f"length: non-positive bone length {tree.bone_length[j]} "
                        f"at joint {j} ({tree.joint_names[j]})"
                    )

    if tree.rest_offset.shape != (J, 3):
        problems.append("rest_offset: wrong shape")
    else:
        norms = np.linalg.norm(tree.rest_offset, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            problems.append("rest_offset: not all unit vectors")

    if tree.limbs.size and (tree.limbs.min() < 0 or tree.limbs.max() >= J):
        problems.append("limbs: joint index out of range")
    if J == 17 and tree.limb_count != 16:
        problems.append(f"limbs: expected 16 limbs for 17 joints, found {tree.limb_count}")

    return ValidationReport(tuple(problems))


def tree_from_dict(cfg: dict) -> KinematicTree:
    joints = cfg["joints"]
    names = [j["name"] for j in joints]
    index = {n: i for i, n in enumerate(names)}
    parent = [ROOT if j.get("parent") is None else index[j["parent"]] for j in joints]
    lengths = [float(j.get("length", 0.0)) for j in joints]
    rest = np.array([j["rest_offset"] for j in joints], dtype=float)
    norms = np.linalg.norm(rest, axis=1, keepdims=True)
    rest = rest / np.where(norms > 0, norms, 1.0)
    roles = [j.get("role", ROLE_PELVIS if p == ROOT else ROLE_BONE) for j, p in zip(joints, parent)]
    mirror = list(range(len(names)))
    for a, b in cfg.get("mirror_pairs", []):
        mirror[index[a]], mirror[index[b]] = index[b], index[a]
    limbs = [(index[a], index[b]) for a, b in cfg.get("limbs", [])]
    return KinematicTree(
        joint_names=names,
        parent=parent,
        bone_length=lengths,
        rest_offset=rest,
        mirror=mirror,
        limbs=np.array(limbs, dtype=int).reshape(-1, 2),
        roles=roles,
        name=cfg.get("name", "custom"),
    )


def tree_to_dict(tree: KinematicTree) -> dict:
    names = tree.joint_names
    joints = []
    for j, n in enumerate(names):
        p = int(tree.parent[j])
        joints.append({
            "name": n,
            "parent": None if p == ROOT else names[p],
            "length": float(tree.bone_length[j]),
            "rest_offset": tree.rest_offset[j].tolist(),
            "role": tree.roles[j],
        })
    pairs = [[names[j], names[int(m)]] for j, m in enumerate(tree.mirror) if j < m]
    return {
        "name": tree.name,
        "joints": joints,
        "mirror_pairs": pairs,
        "limbs": [[names[a], names[b]] for a, b in tree.limbs],
    }


def load_tree(path: str | Path) -> KinematicTree:
    """Load and validate a tree config file."""
    with open(path) as fh:
        tree = tree_from_dict(json.load(fh))
    report = validate_tree(tree)
    if not report.ok:
        raise TreeError(f"invalid tree {path}: " + "; ".join(report.violations))
    return tree


def default_h36m_tree() -> KinematicTree:
    """The shipped 17-joint Human3.6M-style skeleton (16 limbs)."""
    text = resources.files("kinepose").joinpath("data/h36m17.json").read_text()
    tree = tree_from_dict(json.loads(text))
    report = validate_tree(tree)
    if not report.ok:  # pragma: no cover - shipped config is tested
        raise TreeError("; ".join(report.violations))
    return tree


@dataclass(frozen=True, eq=False)
class LocalKinematicParams:
    """Trunk/hip-line angle plus one unit direction per bone joint.

    ``renormalized`` records whether unpacking had to rescale a direction by
    more than ``RENORM_FLAG_TOL``; it does not take part in comparisons.
    """

    trunk_hipline_angle: float
    bone_dirs: np.ndarray
    renormalized: bool = field(default=False, compare=False)

    def __post_init__(self):
        dirs = _frozen(self.bone_dirs).reshape(-1, 3)
        object.__setattr__(self, "bone_dirs", dirs)
        object.__setattr__(self, "trunk_hipline_angle", float(self.trunk_hipline_angle))
        if not np.all(np.isfinite(dirs)) or not np.isfinite(self.trunk_hipline_angle):
            raise ValueError("kinematic parameters must be finite")
        norms = np.linalg.norm(dirs, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_TOL)
        if bad.size:
            raise ValueError(f"bone directions {bad.tolist()} are not unit vectors")

    @cached_property
    def bone_count(self) -> int:
        return len(self.bone_dirs)


def pack_params(v: LocalKinematicParams) -> np.ndarray:
    """Flatten to ``[angle, d0x, d0y, d0z, d1x, ...]`` (length 40 for 13 bones)."""
    return np.concatenate([[v.trunk_hipline_angle], v.bone_dirs.ravel()])


def unpack_params(vec) -> LocalKinematicParams:
    """Inverse of :func:`pack_params`.

    Direction blocks whose norm is off unity by more than ``UNIT_TOL`` are
    rescaled; blocks already unit pass through untouched so the round trip
    is bit-exact.

    Raises:
        ValueError: wrong length, non-finite entries or a zero-norm block.
    """
    vec = np.asarray(vec, dtype=float)
    if vec.ndim != 1 or (vec.size - 1) % 3 or vec.size < 1:
        raise ValueError(f"packed parameter vector has invalid length {vec.size}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("packed parameter vector contains non-finite values")
    dirs = vec[1:].reshape(-1, 3).copy()
    norms = np.linalg.norm(dirs, axis=1)
    zero = np.flatnonzero(norms < DEGENERATE_NORM)
    if zero.size:
        raise ValueError(f"degenerate (zero-norm) direction block(s) {zero.tolist()}")
    off = np.abs(norms - 1.0)
    fix = off > UNIT_TOL
    dirs[fix] /= norms[fix, None]
    return LocalKinematicParams(vec[0], dirs, renormalized=bool(np.any(off > RENORM_FLAG_TOL)))


def rest_params(tree: KinematicTree, angle: float = 0.0) -> LocalKinematicParams:
    """Parameters reproducing the tree's rest pose."""
    return LocalKinematicParams(angle, tree.rest_offset[list(tree.bone_joints)])


@dataclass(frozen=True, eq=False)
class CameraParams:
    """Extrinsics: one (sin, cos) pair per rotation axis (x, y, z) plus translation."""

    angles_sincos: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 5.0]))

    def __post_init__(self):
        sc = _frozen(self.angles_sincos).reshape(3, 2)
        t = _frozen(self.translation).reshape(3)
        object.__setattr__(self, "angles_sincos", sc)
        object.__setattr__(self, "translation", t)
        if not (np.all(np.isfinite(sc)) and np.all(np.isfinite(t))):
            raise ValueError("camera parameters must be finite")

    @classmethod
    def from_angles(cls, alpha: float, beta: float, gamma: float, translation=(0.0, 0.0, 5.0)):
        a = np.array([alpha, beta, gamma], dtype=float)
        return cls(np.stack([np.sin(a), np.cos(a)], axis=1), np.asarray(translation, dtype=float))

    def pack(self) -> np.ndarray:
        """``[s_x, c_x, s_y, c_y, s_z, c_z, tx, ty, tz]``"""
        return np.concatenate([self.angles_sincos.ravel(), self.translation])

    @classmethod
    def unpack(cls, vec) -> "CameraParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (9,):
            raise ValueError(f"packed camera vector must have length 9, got {vec.shape}")
        return cls(vec[:6].reshape(3, 2), vec[6:])


@dataclass(frozen=True, eq=False)
class Pose3D:
    joints: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "joints", _frozen(self.joints).reshape(-1, 3))


@dataclass(frozen=True, eq=False)
class Landmarks2D:
    """Normalized image coordinates, x to the right and y down, in [0, 1]^2."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points).reshape(-1, 2))

    @property
    def out_of_frame(self) -> np.ndarray:
        p = self.points
        return np.flatnonzero(np.any((p < 0.0) | (p > 1.0), axis=1))

"""Differentiable kinematic-structure-preserving pose pipeline."""

from .camera import (
    BehindCameraError,
    PerspectiveCamera,
    project,
    projection_jacobian,
    rotation_from_sincos,
)
from .ik import FitConfig, FitResult, fit_multistart, fit_pose_to_heatmaps, fit_pose_to_landmarks, gradcheck
from .kinematics import fk_jacobian, forward_kinematics, root_joints
from .losses import (
    EnergyModel,
    SpatialTransform,
    apply_transform,
    invert_transform,
    loss_paired,
    loss_prior,
    loss_unpaired,
)
from .maps import (
    MapConfig,
    SpatialMaps,
    maps_jacobian,
    render_affinity,
    render_heatmaps,
    render_maps,
    soft_argmax,
)
from .pipeline import pack_state, run_chain, split_state
from .skeleton import (
    CameraParams,
    KinematicTree,
    Landmarks2D,
    LocalKinematicParams,
    Pose3D,
    default_h36m_tree,
    load_tree,
    pack_params,
    unpack_params,
    validate_tree,
)

from .synth import synth_pose
from .video import Clip, ClipClass, build_manifest, classify_clip, clip_motion_score, median_background

__version__ = "0.1.0"

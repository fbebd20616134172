"""Command-line entry point: every pipeline stage on files.

Structured results are JSON on stdout (or ``--output``); diagnostics go to
stderr.  Exit status is 0 on success, 1 on invalid input or configuration
and 2 on runtime failure.

Settings resolve as: command-line flag, then ``--config`` JSON file, then
the built-in default.  The effective settings are echoed under ``meta``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .camera import BehindCameraError, PerspectiveCamera, project
from .formats import (
    MAP_MAGIC,
    FormatError,
    camera_from_json,
    camera_to_json,
    dump_json,
    landmarks_from_json,
    landmarks_to_json,
    params_from_json,
    params_to_json,
    pose_from_json,
    pose_to_json,
    read_map_dump,
    write_map_dump,
    write_pgm16,
    write_ppm,
)
from .ik import STAGES, FitConfig, fit_multistart, gradcheck
from .kinematics import forward_kinematics
from .losses import image_l1, loss_paired, loss_prior, loss_unpaired, mean_abs
from .maps import MapConfig, render_maps
from .skeleton import TreeError, default_h36m_tree, load_tree
from .synth import synth_pose
from .video import Clip, build_manifest, classify_clip, median_background, motion_statistics

log = logging.getLogger("kinepose")

DEFAULTS = {
    "seed": 0,
    "focal": 1.1,
    "principal_point": [0.5, 0.5],
    "z_min": 0.1,
    "height": 56,
    "width": 56,
    "sigma": 2.0,
    "sigma_y": 1.5,
    "alpha": 0.5,
    "map_window": None,
    "lambda1": 1.0,
    "lambda2": 1.0,
    "w3": 1.0,
    "w2": 1.0,
    "threshold": 0.02,
    "gap_s": 1.0,
    "window": 121,
    "fps": 25.0,
    "max_iters": 2000,
    "step_size": 1.0,
    "objective": "landmark_l2",
    "tol": 1e-12,
    "restarts": 8,
    "eps": 1e-6,
    "gradcheck_limit": 1e-4,
}

# settings each subcommand reads (and echoes)
_KEYS = {
    "synth": ["seed"],
    "fk": [],
    "project": ["focal", "principal_point", "z_min"],
    "render": ["height", "width", "sigma", "sigma_y", "alpha", "map_window"],
    "fit": ["seed", "focal", "principal_point", "z_min", "height", "width", "sigma", "sigma_y",
            "alpha", "map_window", "max_iters", "step_size", "objective", "tol", "restarts"],
    "loss": ["lambda1", "lambda2", "w3", "w2"],
    "bgextract": ["window", "fps"],
    "score": ["fps"],
    "classify": ["fps", "threshold"],
    "manifest": ["fps", "threshold", "gap_s", "window"],
    "gradcheck": ["seed", "eps", "gradcheck_limit"],
}


class UsageError(Exception):
    """Invalid command line or configuration (exit status 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- helpers


def _read_json(path):
    if str(path) == "-":
        return json.load(sys.stdin)
    with open(path) as fh:
        return json.load(fh)


def _emit(obj, args) -> None:
    text = dump_json(obj)
    if args.output:
        Path(args.output).write_text(text)
        log.info("wrote %s", args.output)
    else:
        sys.stdout.write(text)


def _resolve(args) -> dict:
    """Merge defaults < config file < flags for the subcommand's settings."""
    eff = dict(DEFAULTS)
    if args.config:
        cfg = _read_json(args.config)
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(cfg) - set(DEFAULTS))
        if unknown:
            raise UsageError(f"unknown config keys: {unknown}")
        eff.update(cfg)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            eff[key] = val
    return {k: eff[k] for k in _KEYS[args.command]}


def _meta(args, eff) -> dict:
    return {"command": args.command, "version": __version__,
            "tree": args.tree or "h36m17 (built-in)", "config": eff}


def _camera_model(eff) -> PerspectiveCamera:
    return PerspectiveCamera(eff["focal"], tuple(eff["principal_point"]), eff["z_min"])


def _map_config(eff) -> MapConfig:
    return MapConfig(height=eff["height"], width=eff["width"], sigma=eff["sigma"],
                     sigma_y=eff["sigma_y"], alpha=eff["alpha"], window=eff["map_window"])


def _clips(dirs, fps) -> list[Clip]:
    return [Clip.from_directory(d, fps) for d in dirs]


# ---------------------------------------------------------------- commands


def cmd_synth(args, tree, eff):
    v, c = synth_pose(eff["seed"], tree)
    return {"params": params_to_json(v, tree), "camera": camera_to_json(c)}


def cmd_fk(args, tree, eff):
    v = params_from_json(_read_json(args.params), tree)
    return pose_to_json(forward_kinematics(v, tree), tree)


def cmd_project(args, tree, eff):
    pose = pose_from_json(_read_json(args.pose), tree)
    cam = camera_from_json(_read_json(args.camera))
    lm = project(pose, cam, _camera_model(eff), tree.joint_names)
    if lm.out_of_frame.size:
        log.warning("%d landmarks fall outside the frame", lm.out_of_frame.size)
    return landmarks_to_json(lm, tree)


def _channel_names(tree) -> list[str]:
    names = [f"heat_{n}" for n in tree.joint_names]
    names += [f"limb_{tree.joint_names[a]}__{tree.joint_names[b]}" for a, b in tree.limbs]
    return names


def cmd_render(args, tree, eff):
    lm = landmarks_from_json(_read_json(args.landmarks), tree)
    maps = render_maps(lm, tree, _map_config(eff)).stack()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for k, name in enumerate(_channel_names(tree)):
        path = out / f"{k:02d}_{name}.pgm"
        write_pgm16(path, maps[k])
        files.append(str(path))
    write_map_dump(out / "maps.bin", maps)
    return {"channels": files, "dump": str(out / "maps.bin"), "shape": list(maps.shape)}


def cmd_fit(args, tree, eff):
    is_dump = Path(args.target).read_bytes()[:len(MAP_MAGIC)] == MAP_MAGIC
    objective = eff["objective"]
    if is_dump:
        target = read_map_dump(args.target)
        objective = "heatmap_l2"
    else:
        target = landmarks_from_json(_read_json(args.target), tree)
        if objective == "heatmap_l2":
            raise UsageError("heatmap_l2 needs a map dump target")
    init = None
    if args.init:
        obj = _read_json(args.init)
        init = (params_from_json(obj, tree), camera_from_json(obj))
    cfg = FitConfig(max_iters=eff["max_iters"], step_size=eff["step_size"], objective=objective,
                    tol=eff["tol"], seed=eff["seed"], camera=_camera_model(eff), maps=_map_config(eff))
    if eff["restarts"] < 1:
        raise UsageError("restarts must be positive")
    res = fit_multistart(target, tree, cfg, init=init, restarts=eff["restarts"])
    log.info("best restart seed %d: objective %.3g, error %.3f px", res.seed, res.objective,
             res.reprojection_error)
    return {
        "params": params_to_json(res.params, tree),
        "camera": camera_to_json(res.camera),
        "landmarks": landmarks_to_json(res.landmarks, tree),
        "objective_trace": res.objective_trace,
        "converged": res.converged,
        "line_search_failed": res.line_search_failed,
        "iterations": res.iterations,
        "reprojection_error": res.reprojection_error,
        "restart_seed": res.seed,
    }


def _arr(obj, key):
    return np.asarray(obj[key], dtype=float)


def cmd_loss(args, tree, eff):
    """Evaluate every loss whose inputs are present in the JSON file."""
    obj = _read_json(args.inputs)
    out = {}
    if {"p", "p_hat", "f", "f_hat"} <= obj.keys():
        if "image" in obj and "image_hat" in obj:
            img = image_l1(_arr(obj, "image"), _arr(obj, "image_hat"))
        else:
            img = float(obj.get("image_diff", 0.0))
        out["paired"] = {
            "image": img,
            "pose": eff["lambda1"] * mean_abs(_arr(obj, "p"), _arr(obj, "p_hat")),
            "appearance": eff["lambda2"] * mean_abs(_arr(obj, "f"), _arr(obj, "f_hat")),
            "total": loss_paired(img, _arr(obj, "p"), _arr(obj, "p_hat"), _arr(obj, "f"),
                                 _arr(obj, "f_hat"), eff["lambda1"], eff["lambda2"]),
        }
    if {"p", "p_tilde", "f", "f_tilde"} <= obj.keys():
        out["unpaired"] = {
            "pose": mean_abs(_arr(obj, "p"), _arr(obj, "p_tilde")),
            "appearance": eff["lambda2"] * mean_abs(_arr(obj, "f"), _arr(obj, "f_tilde")),
            "total": loss_unpaired(_arr(obj, "p"), _arr(obj, "p_tilde"), _arr(obj, "f"),
                                   _arr(obj, "f_tilde"), eff["lambda2"]),
        }
    if {"p3", "p3_gt", "p2", "p2_gt"} <= obj.keys():
        out["prior"] = {
            "pose3d": eff["w3"] * mean_abs(_arr(obj, "p3"), _arr(obj, "p3_gt")),
            "pose2d": eff["w2"] * mean_abs(_arr(obj, "p2"), _arr(obj, "p2_gt")),
            "total": loss_prior(_arr(obj, "p3"), _arr(obj, "p3_gt"), _arr(obj, "p2"),
                                _arr(obj, "p2_gt"), eff["w3"], eff["w2"]),
        }
    if not out:
        raise UsageError("loss input holds no complete set of paired, unpaired or prior fields")
    out["total"] = sum(v["total"] for v in out.values())
    return out


def cmd_bgextract(args, tree, eff):
    clip = Clip.from_directory(args.frames, eff["fps"])
    center = clip.count // 2 if args.center is None else args.center
    bg = median_background(clip, center, eff["window"])
    write_ppm(args.out, bg)
    return {"background": str(args.out), "center": center, "frames": clip.count}


def cmd_score(args, tree, eff):
    out = {}
    for clip in _clips(args.frames, eff["fps"]):
        s = motion_statistics(clip)
        out[clip.source_id] = {"score": s.score, "mean_l2": s.mean_l2}
    return {"scores": out}


def cmd_classify(args, tree, eff):
    out = {}
    for clip in _clips(args.frames, eff["fps"]):
        score = motion_statistics(clip).score
        out[clip.source_id] = {"score": score, "class": classify_clip(score, eff["threshold"]).value}
    return {"clips": out}


def cmd_manifest(args, tree, eff):
    man = build_manifest(_clips(args.frames, eff["fps"]), gap_s=eff["gap_s"], threshold=eff["threshold"],
                         window=eff["window"], background_dir=args.background_dir)
    return man.to_json()


def cmd_gradcheck(args, tree, eff):
    rows = []
    for stage in args.stages or STAGES:
        rep = gradcheck(stage, eff["seed"], eff["eps"], tree)
        rows.append({"stage": stage, "seed": rep.seed, "eps": rep.eps, "coords": rep.coords,
                     "max_rel_error": rep.max_rel_error, "worst_index": rep.worst_index,
                     "pass": rep.max_rel_error <= eff["gradcheck_limit"]})
    if not args.quiet:
        print(f"{'stage':<12}{'coords':>7}{'max rel err':>14}  status", file=sys.stderr)
        for r in rows:
            status = "ok" if r["pass"] else "FAIL"
            print(f"{r['stage']:<12}{r['coords']:>7}{r['max_rel_error']:>14.3e}  {status}", file=sys.stderr)
    return {"stages": rows, "ok": all(r["pass"] for r in rows)}


COMMANDS = {
    "synth": cmd_synth, "fk": cmd_fk, "project": cmd_project, "render": cmd_render, "fit": cmd_fit,
    "loss": cmd_loss, "bgextract": cmd_bgextract, "score": cmd_score, "classify": cmd_classify,
    "manifest": cmd_manifest, "gradcheck": cmd_gradcheck,
}


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--tree", default=argparse.SUPPRESS, help="kinematic tree JSON (default: built-in 17-joint tree)")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    g.add_argument("--config", default=argparse.SUPPRESS, help="JSON file of default settings")
    g.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="only report errors")
    g.add_argument("-o", "--output", default=argparse.SUPPRESS, help="write the JSON result here instead of stdout")

    parser = _Parser(prog="kinepose", description=__doc__.split("\n")[0], parents=[common])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[common], description=help_)

    def intrinsics(p):
        p.add_argument("--focal", type=float)
        p.add_argument("--principal-point", dest="principal_point", type=float, nargs=2, metavar=("X", "Y"))
        p.add_argument("--z-min", dest="z_min", type=float)

    def lattice(p):
        p.add_argument("--height", type=int)
        p.add_argument("--width", type=int)
        p.add_argument("--sigma", type=float, help="heat-map std in cells")
        p.add_argument("--sigma-y", dest="sigma_y", type=float, help="affinity cross-limb std in cells")
        p.add_argument("--alpha", type=float, help="affinity along-limb std as a fraction of limb length")
        p.add_argument("--map-window", dest="map_window", type=float, help="truncate Gaussians at this many stds")

    def video(p, *extra):
        p.add_argument("frames", nargs="+", help="directories of .ppm frames, one per clip")
        p.add_argument("--fps", type=float)
        if "threshold" in extra:
            p.add_argument("--threshold", type=float)
        if "window" in extra:
            p.add_argument("--window", type=int, help="median window in frames")
        if "gap" in extra:
            p.add_argument("--gap-s", dest="gap_s", type=float, help="source/target gap in seconds")

    add("synth", "generate seeded kinematic parameters and camera")

    p = add("fk", "kinematic parameters JSON -> 3D pose JSON")
    p.add_argument("params", help="parameter JSON (or synth output); '-' for stdin")

    p = add("project", "3D pose JSON + camera JSON -> landmarks JSON")
    p.add_argument("pose")
    p.add_argument("--camera", required=True, help="camera JSON (or synth output)")
    intrinsics(p)

    p = add("render", "landmarks JSON -> per-channel 16-bit PGM files and a map dump")
    p.add_argument("landmarks")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    lattice(p)

    p = add("fit", "fit parameters and camera to landmarks JSON or a map dump")
    p.add_argument("target")
    p.add_argument("--init", help="initial params + camera JSON (default: synth pose of --seed)")
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--step-size", dest="step_size", type=float)
    p.add_argument("--objective", choices=["landmark_l2", "landmark_l1", "heatmap_l2"])
    p.add_argument("--tol", type=float)
    intrinsics(p)
    lattice(p)

    p = add("loss", "evaluate loss terms from a JSON file of arrays")
    p.add_argument("inputs")
    for w in ("lambda1", "lambda2", "w3", "w2"):
        p.add_argument(f"--{w}", type=float)

    p = add("bgextract", "temporal median background of one clip")
    p.add_argument("frames", help="directory of .ppm frames")
    p.add_argument("--center", type=int, help="target frame index (default: middle frame)")
    p.add_argument("--out", required=True, help="output .ppm path")
    p.add_argument("--window", type=int)
    p.add_argument("--fps", type=float)

    video(add("score", "background-motion scores"))
    video(add("classify", "paired/unpaired classification"), "threshold")
    p = add("manifest", "paired/unpaired tuple manifest")
    video(p, "threshold", "window", "gap")
    p.add_argument("--background-dir", dest="background_dir", help="write median backgrounds here")

    p = add("gradcheck", "compare analytic gradients with central differences")
    p.add_argument("stages", nargs="*", metavar="STAGE",
                   help=f"any of {', '.join(STAGES)} (default: all)")
    p.add_argument("--eps", type=float)
    return parser


def _setup_logging(quiet: bool) -> None:
    root = logging.getLogger("kinepose")
    for h in list(root.handlers):
        root.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("kinepose: %(levelname)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(logging.ERROR if quiet else logging.INFO)
    root.propagate = False


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"kinepose: error: {exc}", file=sys.stderr)
        return 1
    for name, default in (("tree", None), ("seed", None), ("config", None), ("quiet", False), ("output", None)):
        if not hasattr(args, name):
            setattr(args, name, default)
    _setup_logging(args.quiet)
    if args.command is None:
        print("kinepose: error: a subcommand is required (see --help)", file=sys.stderr)
        return 1
    try:
        eff = _resolve(args)
        tree = load_tree(args.tree) if args.tree else default_h36m_tree()
        result = COMMANDS[args.command](args, tree, eff)
        result["meta"] = {**result.get("meta", {}), **_meta(args, eff)}
        _emit(result, args)
    except (UsageError, FormatError, TreeError, FileNotFoundError, IsADirectoryError,
            json.JSONDecodeError, KeyError) as exc:
        log.error("%s", exc)
        return 1
    except BehindCameraError as exc:
        log.error("%s", exc)
        return 2
    except ValueError as exc:
        log.error("%s", exc)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.error("%s: %s", type(exc).__name__, exc)
        return 2
    if args.command == "gradcheck" and not result["ok"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

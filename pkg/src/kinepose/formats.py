"""On-disk formats: netpbm images, the raw map dump and JSON records.

JSON floats are written with ``repr`` precision (shortest round-trip), so a
value read back is bit-identical to the one written.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .skeleton import CameraParams, KinematicTree, Landmarks2D, LocalKinematicParams, Pose3D

MAP_MAGIC = b"KPMAP1"


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------- netpbm


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        if data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif data[pos:pos + 1].isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("truncated netpbm header")
    return data[start:pos], pos


def _read_netpbm(path) -> tuple[bytes, np.ndarray]:
    data = Path(path).read_bytes()
    magic, pos = _read_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"{path}: unsupported netpbm magic {magic!r}")
    w, pos = _read_token(data, pos)
    h, pos = _read_token(data, pos)
    maxval, pos = _read_token(data, pos)
    w, h, maxval = int(w), int(h), int(maxval)
    pos += 1  # single whitespace after maxval
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = w * h * channels
    pixels = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    if pixels.size != count:
        raise FormatError(f"{path}: truncated pixel data")
    shape = (h, w, 3) if channels == 3 else (h, w)
    return magic, pixels.reshape(shape).astype(np.uint16 if maxval > 255 else np.uint8)


def read_ppm(path) -> np.ndarray:
    """Binary P6, maxval 255, as an (H, W, 3) uint8 array."""
    magic, img = _read_netpbm(path)
    if magic != b"P6" or img.dtype != np.uint8:
        raise FormatError(f"{path}: expected an 8-bit P6 image")
    return img


def write_ppm(path, image) -> None:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise FormatError("PPM frames must be (H, W, 3) uint8")
    h, w, _ = img.shape
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes())


def write_pgm16(path, values) -> None:
    """Write a map in [0, 1] as 16-bit P5, pixel = round(65535 * v)."""
    v = np.clip(np.asarray(values, dtype=float), 0.0, 1.0)
    h, w = v.shape
    px = np.rint(65535.0 * v).astype(">u2")
    Path(path).write_bytes(b"P5\n%d %d\n65535\n" % (w, h) + px.tobytes())


def read_pgm(path) -> np.ndarray:
    magic, img = _read_netpbm(path)
    if magic != b"P5":
        raise FormatError(f"{path}: expected a P5 image")
    return img


# ---------------------------------------------------------------- map dump


def write_map_dump(path, maps: np.ndarray) -> None:
    """``KPMAP1`` + uint32 H, W, C (little-endian) + float64 LE data in (C, H, W) order."""
    m = np.asarray(maps, dtype="<f8")
    c, h, w = m.shape
    Path(path).write_bytes(MAP_MAGIC + struct.pack("<III", h, w, c) + m.tobytes())


def read_map_dump(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:6] != MAP_MAGIC:
        raise FormatError(f"{path}: bad map dump magic")
    h, w, c = struct.unpack("<III", data[6:18])
    body = np.frombuffer(data, dtype="<f8", offset=18)
    if body.size != c * h * w:
        raise FormatError(f"{path}: expected {c * h * w} values, found {body.size}")
    return body.reshape(c, h, w).astype(float)


# ---------------------------------------------------------------- JSON


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, allow_nan=False) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _by_name(names, rows) -> dict:
    return {n: [float(x) for x in r] for n, r in zip(names, rows)}


def _from_names(names, table, width) -> np.ndarray:
    if isinstance(table, dict):
        missing = [n for n in names if n not in table]
        if missing:
            raise FormatError(f"missing joints {missing}")
        rows = [table[n] for n in names]
    else:
        rows = table
    arr = np.asarray(rows, dtype=float)
    if arr.shape != (len(names), width):
        raise FormatError(f"expected {len(names)} rows of {width} values, got shape {arr.shape}")
    return arr


def params_to_json(v: LocalKinematicParams, tree: KinematicTree) -> dict:
    names = [tree.joint_names[j] for j in tree.bone_joints]
    return {"trunk_hipline_angle": v.trunk_hipline_angle, "bone_dirs": _by_name(names, v.bone_dirs)}


def params_from_json(obj, tree: KinematicTree) -> LocalKinematicParams:
    from .skeleton import unpack_params

    obj = obj.get("params", obj)
    if "packed" in obj:
        return unpack_params(obj["packed"])
    names = [tree.joint_names[j] for j in tree.bone_joints]
    dirs = _from_names(names, obj["bone_dirs"], 3)
    return unpack_params(np.concatenate([[obj["trunk_hipline_angle"]], dirs.ravel()]))


def camera_to_json(c: CameraParams) -> dict:
    return {"angles_sincos": c.angles_sincos.tolist(), "translation": c.translation.tolist()}


def camera_from_json(obj) -> CameraParams:
    obj = obj.get("camera", obj)
    return CameraParams(obj["angles_sincos"], obj.get("translation", (0.0, 0.0, 5.0)))


def pose_to_json(p: Pose3D, tree: KinematicTree) -> dict:
    return {"joints": _by_name(tree.joint_names, p.joints)}


def pose_from_json(obj, tree: KinematicTree) -> Pose3D:
    obj = obj.get("pose", obj)
    return Pose3D(_from_names(tree.joint_names, obj["joints"], 3))


def landmarks_to_json(lm: Landmarks2D, tree: KinematicTree) -> dict:
    return {
        "points": _by_name(tree.joint_names, lm.points),
        "out_of_frame": [tree.joint_names[j] for j in lm.out_of_frame],
    }


def landmarks_from_json(obj, tree: KinematicTree) -> Landmarks2D:
    if isinstance(obj, dict):
        obj = obj.get("landmarks", obj)
        obj = obj.get("points", obj) if isinstance(obj, dict) else obj
    return Landmarks2D(_from_names(tree.joint_names, obj, 2))

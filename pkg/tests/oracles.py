"""Independent reference implementations used as test oracles.

Deliberately naive: explicit loops, scalar math, no package internals.
"""

import json
import math
from importlib import resources

import numpy as np


def shipped_config():
    return json.loads(resources.files("kinepose").joinpath("data/h36m17.json").read_text())


def random_unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def central_diff(f, x, eps):
    """Central finite differences of vector-valued ``f`` at ``x``; returns (out, n)."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[k] += eps
        xm[k] -= eps
        cols.append((np.ravel(f(xp)) - np.ravel(f(xm))) / (2 * eps))
    return np.stack(cols, axis=1)


def max_rel_err(analytic, numeric, floor=1e-8):
    a, n = np.ravel(analytic), np.ravel(numeric)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def fk_oracle(angle, dirs, cfg=None):
    """Recursive FK straight off the JSON config; dirs keyed by joint name."""
    cfg = cfg or shipped_config()
    joints = {j["name"]: j for j in cfg["joints"]}
    cache = {}

    def unit(v):
        n = math.sqrt(sum(c * c for c in v))
        return [c / n for c in v]

    def pos(name):
        if name in cache:
            return cache[name]
        j = joints[name]
        role = j.get("role", "bone" if j["parent"] else "pelvis")
        if role == "pelvis":
            out = [0.0, 0.0, 0.0]
        elif role == "neck":
            out = [0.0, 0.0, j["length"]]
        elif role == "hip":
            x, y, z = unit(j["rest_offset"])
            c, s = math.cos(angle), math.sin(angle)
            L = j["length"]
            out = [L * x, L * (c * y - s * z), L * (s * y + c * z)]
        else:
            par = pos(j["parent"])
            d = dirs[name]
            out = [par[k] + j["length"] * d[k] for k in range(3)]
        cache[name] = out
        return out

    return {name: pos(name) for name in joints}


def euler_oracle(a, b, g):
    ca, sa, cb, sb, cg, sg = (math.cos(a), math.sin(a), math.cos(b), math.sin(b),
                              math.cos(g), math.sin(g))
    return np.array([
        [cg * cb, cg * sb * sa - sg * ca, cg * sb * ca + sg * sa],
        [sg * cb, sg * sb * sa + cg * ca, sg * sb * ca - cg * sa],
        [-sb, cb * sa, cb * ca],
    ])


def pinhole_oracle(points3d, R, t, focal, pp=(0.5, 0.5)):
    out = []
    for p in points3d:
        q = [sum(R[r][k] * p[k] for k in range(3)) + t[r] for r in range(3)]
        out.append([pp[0] + focal * q[0] / q[2], pp[1] + focal * q[1] / q[2]])
    return np.array(out)


def heat_oracle(points, H, W, sigma):
    out = np.zeros((len(points), H, W))
    for j, (px, py) in enumerate(points):
        cx, cy = px * W - 0.5, py * H - 0.5
        for r in range(H):
            for c in range(W):
                out[j, r, c] = math.exp(-0.5 * ((c - cx) ** 2 + (r - cy) ** 2) / sigma ** 2)
    return out


def affinity_oracle(points, limbs, H, W, sigma_y, alpha, floor=0.5):
    """Midpoint, slope via atan2, rotate offsets into the limb frame, evaluate."""
    out = np.zeros((len(limbs), H, W))
    for l, (j1, j2) in enumerate(limbs):
        ax, ay = points[j1][0] * W - 0.5, points[j1][1] * H - 0.5
        bx, by = points[j2][0] * W - 0.5, points[j2][1] * H - 0.5
        mx, my = (ax + bx) / 2, (ay + by) / 2
        length = math.hypot(bx - ax, by - ay)
        theta = math.atan2(by - ay, bx - ax) if length > 0 else 0.0
        sx = max(alpha * length, floor)
        c, s = math.cos(-theta), math.sin(-theta)
        for r in range(H):
            for col in range(W):
                ex, ey = col - mx, r - my
                ux = c * ex - s * ey
                uy = s * ex + c * ey
                out[l, r, col] = math.exp(-0.5 * (ux / sx) ** 2 - 0.5 * (uy / sigma_y) ** 2)
    return out

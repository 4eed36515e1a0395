"""Synthetic wireframe scenes rendered straight to depth-bearing pixel chains."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import numpy as np
from scipy import ndimage

from .dataset import Keyframe
from .errors import InputError
from .fitting import backproject_xyz
from .types import TUM_DEFAULT_INTRINSICS, CameraIntrinsics, EdgeSegment, LineSegment3D, Pose


@dataclass(eq=False)
class SyntheticScene:
    segments: List[LineSegment3D]
    poses: List[Pose]
    intrinsics: CameraIntrinsics = TUM_DEFAULT_INTRINSICS
    depth_sigma: float = 0.0
    outlier_fraction: float = 0.0
    dropout_fraction: float = 0.0
    seed: int = 0
    join_chains: bool = False
    near: float = 0.05
    name: str = "custom"
    params: dict = field(default_factory=dict)


def bresenham(x0, y0, x1, y1):
    """Integer pixels from (x0, y0) to (x1, y1) inclusive, 8-connected."""
    pts = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        pts.append((x, y))
        if x == x1 and y == y1:
            return pts
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy


def _clip_to_box(a, b, xmax, ymax):
    # Liang-Barsky against [0, xmax] x [0, ymax]
    t0, t1 = 0.0, 1.0
    d = b - a
    for p, q in ((-d[0], a[0]), (d[0], xmax - a[0]), (-d[1], a[1]), (d[1], ymax - a[1])):
        if p == 0:
            if q < 0:
                return None
            continue
        r = q / p
        if p < 0:
            t0 = max(t0, r)
        else:
            t1 = min(t1, r)
        if t0 > t1:
            return None
    return a + t0 * d, a + t1 * d


def _round_half_up(v):
    return int(math.floor(v + 0.5))


def project_segment_to_chain(A, B, intrinsics: CameraIntrinsics, near=0.05):
    """Pixels and true ray depths of a camera-frame 3D segment, or None if not visible."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A[2] < near and B[2] < near:
        return None
    if A[2] < near or B[2] < near:
        t = (near - A[2]) / (B[2] - A[2])
        C = A + t * (B - A)
        A, B = (C, B) if A[2] < near else (A, C)
    za, zb = A[2], B[2]
    a2 = np.array([intrinsics.fx * A[0] / za + intrinsics.cx, intrinsics.fy * A[1] / za + intrinsics.cy])
    b2 = np.array([intrinsics.fx * B[0] / zb + intrinsics.cx, intrinsics.fy * B[1] / zb + intrinsics.cy])
    clipped = _clip_to_box(a2, b2, intrinsics.width - 1, intrinsics.height - 1)
    if clipped is None:
        return None
    ca, cb = clipped
    pix = bresenham(_round_half_up(ca[0]), _round_half_up(ca[1]), _round_half_up(cb[0]), _round_half_up(cb[1]))
    pix = [(x, y) for x, y in pix if 0 <= x < intrinsics.width and 0 <= y < intrinsics.height]
    if len(pix) < 2:
        return None
    P = np.array(pix, dtype=float)
    d = b2 - a2
    dd = float(d @ d)
    s = np.clip((P - a2) @ d / dd, 0.0, 1.0) if dd > 0 else np.zeros(len(P))
    # perspective-correct: inverse depth is affine in the image parameter
    depth = 1.0 / ((1.0 - s) / za + s / zb)
    return np.array(pix, dtype=np.int64), depth


def _join(chains):
    """Concatenate chains whose ends are 8-adjacent, as a detector would trace them."""
    chains = [list(c) for c in chains]
    merged = True
    while merged:
        merged = False
        for i in range(len(chains)):
            for j in range(len(chains)):
                if i == j:
                    continue
                a, b = chains[i], chains[j]
                for bb in (b, b[::-1]):
                    end, start = a[-1], bb[0]
                    if max(abs(end[0] - start[0]), abs(end[1] - start[1])) == 1:
                        if not ({(p[0], p[1]) for p in a} & {(p[0], p[1]) for p in bb}):
                            chains[i] = a + bb
                            del chains[j]
                            merged = True
                            break
                if merged:
                    break
            if merged:
                break
    return chains


def render_synthetic(scene: SyntheticScene, with_images=False) -> List[Keyframe]:
    """One keyframe per pose with noisy depth-bearing chains.

    Depth noise is Gaussian, outliers draw uniformly from [0.5, 1.5] times the
    true depth, and dropout removes depth. With `with_images`, a rasterized
    line image and a dense depth map (true depth spread over a 5x5
    neighbourhood) are attached for the edge-detection path.
    """
    rng = np.random.default_rng(scene.seed)
    intr = scene.intrinsics
    keyframes = []
    for kf_id, pose in enumerate(scene.poses):
        cam_from_world = pose.inverse()
        raw = []
        for seg in scene.segments:
            A, B = cam_from_world.transform(np.stack([seg.p1, seg.p2]))
            res = project_segment_to_chain(A, B, intr, scene.near)
            if res is not None:
                pix, depth = res
                raw.append([(int(x), int(y), float(z)) for (x, y), z in zip(pix, depth)])
        if scene.join_chains:
            raw = _join(raw)
        chains = []
        image = depth_img = None
        if with_images:
            image = np.zeros((intr.height, intr.width), dtype=np.uint8)
            depth_img = np.full((intr.height, intr.width), np.inf)
        for c in raw:
            xs = np.array([p[0] for p in c])
            ys = np.array([p[1] for p in c])
            true_z = np.array([p[2] for p in c])
            if with_images:
                image[ys, xs] = 255
                depth_img[ys, xs] = np.minimum(depth_img[ys, xs], true_z)
            z = true_z + rng.normal(0.0, scene.depth_sigma, len(c)) if scene.depth_sigma > 0 else true_z.copy()
            if scene.outlier_fraction > 0:
                hit = rng.random(len(c)) < scene.outlier_fraction
                z[hit] = true_z[hit] * rng.uniform(0.5, 1.5, int(hit.sum()))
            if scene.dropout_fraction > 0:
                z[rng.random(len(c)) < scene.dropout_fraction] = np.nan
            z[~(z > 0)] = np.nan
            chains.append(EdgeSegment(xs, ys, z, kf_id))
        if with_images:
            depth_img = ndimage.grey_erosion(depth_img, size=(5, 5))
            depth_img[~np.isfinite(depth_img)] = np.nan
        keyframes.append(Keyframe(float(kf_id), image, depth_img, pose, intr, kf_id, chains))
    return keyframes


def cube_edges(side=5.0, center=(0.0, 0.0, 0.0)):
    h = side / 2.0
    c = np.asarray(center, dtype=float)
    corners = [c + h * np.array([sx, sy, sz]) for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    edges = []
    for i in range(8):
        for j in range(i + 1, 8):
            if np.count_nonzero(corners[i] != corners[j]) == 1:
                edges.append(LineSegment3D(corners[i], corners[j], "world"))
    return edges


def cube_scene(side=5.0, n_keyframes=20, radius=11.0, height=4.0, arc_deg=360.0, depth_sigma=0.01,
               dropout_fraction=0.1, outlier_fraction=0.0, seed=0, intrinsics=TUM_DEFAULT_INTRINSICS):
    """Wireframe cube seen by a camera orbiting it and looking at its centre."""
    poses = []
    for k in range(n_keyframes):
        a = math.radians(arc_deg) * k / n_keyframes
        eye = (radius * math.cos(a), radius * math.sin(a), height)
        poses.append(Pose.look_at(eye, (0.0, 0.0, 0.0)))
    params = dict(side=side, n_keyframes=n_keyframes, radius=radius, height=height, arc_deg=arc_deg)
    return SyntheticScene(cube_edges(side), poses, intrinsics, depth_sigma, outlier_fraction, dropout_fraction,
                          seed, name="cube", params=params)


def depth_step_scene(row=240, start=200, length=120, step_at=60, z_near=2.0, z_far=3.0,
                     intrinsics=TUM_DEFAULT_INTRINSICS, depth_sigma=0.0, seed=0):
    """Two fronto-parallel segments at different depths that abut in the image.

    Rendered as one straight chain of `length` pixels whose depth jumps at
    index `step_at`.
    """
    def bp(x, z):
        return backproject_xyz(x, row, z, intrinsics)

    a = LineSegment3D(bp(start, z_near), bp(start + step_at - 1, z_near), "world")
    b = LineSegment3D(bp(start + step_at, z_far), bp(start + length - 1, z_far), "world")
    params = dict(row=row, start=start, length=length, step_at=step_at, z_near=z_near, z_far=z_far)
    return SyntheticScene([a, b], [Pose()], intrinsics, depth_sigma, seed=seed, join_chains=True,
                          name="depth_step", params=params)


def dense_scene(n_segments=60, n_keyframes=5, depth_range=(2.0, 4.0), pixel_length=(140, 220),
                depth_sigma=0.002, dropout_fraction=0.05, seed=0, intrinsics=TUM_DEFAULT_INTRINSICS):
    """Random segments filling the view of a slowly translating camera (several thousand edge pixels)."""
    rng = np.random.default_rng(seed)
    segs = []
    margin = 40
    while len(segs) < n_segments:
        c = np.array([rng.uniform(margin, intrinsics.width - margin), rng.uniform(margin, intrinsics.height - margin)])
        z = rng.uniform(*depth_range)
        ang = rng.uniform(0, math.pi)
        half = rng.uniform(*pixel_length) / 2.0
        d = np.array([math.cos(ang), math.sin(ang)]) * half
        a2, b2 = c - d, c + d
        if not all(0 <= p[0] < intrinsics.width and 0 <= p[1] < intrinsics.height for p in (a2, b2)):
            continue
        dz = rng.uniform(-0.3, 0.3)
        A = backproject_xyz(a2[0], a2[1], z - dz, intrinsics)
        B = backproject_xyz(b2[0], b2[1], z + dz, intrinsics)
        segs.append(LineSegment3D(A, B, "world"))
    poses = [Pose(np.eye(3), (0.02 * k, -0.01 * k, 0.0)) for k in range(n_keyframes)]
    params = dict(n_segments=n_segments, n_keyframes=n_keyframes)
    return SyntheticScene(segs, poses, intrinsics, depth_sigma, 0.0, dropout_fraction, seed,
                          name="dense", params=params)


PRESETS = {"cube": cube_scene, "depth_step": depth_step_scene, "dense": dense_scene}


def _intrinsics_from(d):
    return CameraIntrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                            int(d["width"]), int(d["height"]))


def scene_from_dict(d) -> SyntheticScene:
    """Build a scene from a preset name plus keyword overrides, or from explicit geometry."""
    noise_keys = ("depth_sigma", "outlier_fraction", "dropout_fraction", "seed")
    if "preset" in d:
        name = d["preset"]
        if name not in PRESETS:
            raise InputError(f"unknown scene preset {name!r}; choose from {sorted(PRESETS)}")
        kwargs = dict(d.get("params", {}))
        if "intrinsics" in d:
            kwargs["intrinsics"] = _intrinsics_from(d["intrinsics"])
        try:
            return PRESETS[name](**kwargs)
        except TypeError as exc:
            raise InputError(f"bad parameters for preset {name!r}: {exc}") from exc
    try:
        segs = [LineSegment3D(s[:3], s[3:6], "world") for s in d["segments"]]
        poses = [Pose(p["R"], p["t"]) for p in d["poses"]]
        intr = _intrinsics_from(d["intrinsics"]) if "intrinsics" in d else TUM_DEFAULT_INTRINSICS
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise InputError(f"malformed scene description: {exc}") from exc
    extra = {k: d[k] for k in noise_keys if k in d}
    return SyntheticScene(segs, poses, intr, join_chains=bool(d.get("join_chains", False)), **extra)


def scene_to_dict(scene: SyntheticScene) -> dict:
    intr = scene.intrinsics
    return {
        "intrinsics": dict(fx=intr.fx, fy=intr.fy, cx=intr.cx, cy=intr.cy, width=intr.width, height=intr.height),
        "segments": [list(s.p1) + list(s.p2) for s in scene.segments],
        "poses": [{"R": p.rotation.tolist(), "t": p.translation.tolist()} for p in scene.poses],
        "depth_sigma": scene.depth_sigma,
        "outlier_fraction": scene.outlier_fraction,
        "dropout_fraction": scene.dropout_fraction,
        "seed": scene.seed,
        "join_chains": scene.join_chains,
    }


def load_scene(path) -> SyntheticScene:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read scene file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}") from exc
    return scene_from_dict(d)


def sample_segments(segments, spacing=0.002):
    """Dense points along segments, used as a ground-truth cloud."""
    pts = []
    for s in segments:
        n = max(2, int(math.ceil(s.length / spacing)) + 1)
        t = np.linspace(0.0, 1.0, n)[:, None]
        pts.append(s.p1 + t * (s.p2 - s.p1))
    return np.concatenate(pts) if pts else np.empty((0, 3))

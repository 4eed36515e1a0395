"""TUM RGB-D ingestion and semi-dense depth emulation."""
from __future__ import annotations

import bisect
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image
from scipy import ndimage

from .edges import attach_depth, to_grayscale
from .errors import InputError
from .types import TUM_DEFAULT_INTRINSICS, CameraIntrinsics, Pose

TUM_DEPTH_SCALE = 5000.0
MAX_TIME_DIFF = 0.02


@dataclass(eq=False)
class Keyframe:
    """A posed frame. Synthetic keyframes carry their chains and may omit the image."""

    timestamp: float
    image: Optional[np.ndarray]
    depth: Optional[np.ndarray]
    pose: Pose
    intrinsics: CameraIntrinsics
    keyframe_id: int = 0
    chains: Optional[list] = None

    def __post_init__(self):
        if self.image is not None and self.depth is not None and self.image.shape[:2] != self.depth.shape:
            raise InputError("image and depth resolutions differ")


def read_tum_list(path, min_fields):
    """Parse a TUM text list into (line number, fields) tuples, skipping comments."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"missing file {path}")
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) < min_fields:
            raise InputError(f"{path}:{lineno}: expected {min_fields} fields, got {len(fields)}")
        try:
            float(fields[0])
        except ValueError:
            raise InputError(f"{path}:{lineno}: bad timestamp {fields[0]!r}") from None
        rows.append((lineno, fields))
    return rows


def _nearest(sorted_times, t):
    k = bisect.bisect_left(sorted_times, t)
    best = None
    for j in (k - 1, k):
        if 0 <= j < len(sorted_times) and (best is None or abs(sorted_times[j] - t) < abs(sorted_times[best] - t)):
            best = j
    return best


def associate(times_a, times_b, max_dt=MAX_TIME_DIFF):
    """Mutual nearest-timestamp pairs (i, j) with |ta - tb| <= max_dt."""
    a, b = list(times_a), list(times_b)
    order_a = sorted(range(len(a)), key=a.__getitem__)
    order_b = sorted(range(len(b)), key=b.__getitem__)
    sa = [a[i] for i in order_a]
    sb = [b[j] for j in order_b]
    pairs = []
    for i, t in enumerate(a):
        k = _nearest(sb, t)
        if k is None:
            continue
        j = order_b[k]
        if abs(b[j] - t) > max_dt or order_a[_nearest(sa, b[j])] != i:
            continue
        pairs.append((i, j))
    return pairs


def read_depth_png(path) -> np.ndarray:
    """16-bit TUM depth PNG in metres; zero readings become NaN."""
    try:
        raw = np.array(Image.open(path))
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read depth image {path}: {exc}") from exc
    depth = raw.astype(float) / TUM_DEPTH_SCALE
    depth[raw == 0] = np.nan
    return depth


def read_gray(path) -> np.ndarray:
    try:
        img = np.array(Image.open(path).convert("RGB"))
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc
    return to_grayscale(img)


class TumSequence:
    """Associated rgb / depth / pose triples of a TUM RGB-D directory.

    Iterating yields every `keyframe_stride`-th associated frame. ``skipped``
    counts rgb frames without a depth or pose partner inside the time window.
    """

    def __init__(self, root, keyframe_stride=10, intrinsics: CameraIntrinsics = TUM_DEFAULT_INTRINSICS,
                 max_dt=MAX_TIME_DIFF):
        self.root = Path(root)
        if not self.root.is_dir():
            raise InputError(f"not a directory: {self.root}")
        if keyframe_stride < 1:
            raise InputError("keyframe stride must be >= 1")
        self.intrinsics = intrinsics
        self.stride = keyframe_stride
        rgb = read_tum_list(self.root / "rgb.txt", 2)
        depth = read_tum_list(self.root / "depth.txt", 2)
        gt = read_tum_list(self.root / "groundtruth.txt", 8)
        for g_line, g in gt:
            try:
                [float(v) for v in g[1:8]]
            except ValueError:
                raise InputError(f"{self.root / 'groundtruth.txt'}:{g_line}: unparseable pose") from None
        rgb_t = [float(f[0]) for _, f in rgb]
        depth_t = [float(f[0]) for _, f in depth]
        gt_t = [float(f[0]) for _, f in gt]
        gt_order = sorted(range(len(gt_t)), key=gt_t.__getitem__)
        gt_sorted = [gt_t[k] for k in gt_order]
        depth_of = dict(associate(rgb_t, depth_t, max_dt))
        self.frames = []
        self.skipped = 0
        for i, (_, fields) in enumerate(rgb):
            k = _nearest(gt_sorted, rgb_t[i])
            if i not in depth_of or k is None or abs(gt_sorted[k] - rgb_t[i]) > max_dt:
                self.skipped += 1
                continue
            vals = [float(v) for v in gt[gt_order[k]][1][1:8]]
            pose = Pose.from_quaternion(vals[:3], vals[3:7])
            self.frames.append((rgb_t[i], fields[1], depth[depth_of[i]][1][1], pose))
        if not self.frames:
            raise InputError(f"{self.root}: no rgb/depth/pose associations within {max_dt} s")

    def __len__(self):
        return len(self.frames[:: self.stride])

    def __iter__(self):
        for kf_id, (t, rgb_name, depth_name, pose) in enumerate(self.frames[:: self.stride]):
            image = read_gray(self.root / rgb_name)
            depth = read_depth_png(self.root / depth_name)
            yield Keyframe(t, image, depth, pose, self.intrinsics, kf_id)


def load_tum_sequence(root, keyframe_stride=10, intrinsics=TUM_DEFAULT_INTRINSICS) -> TumSequence:
    return TumSequence(root, keyframe_stride, intrinsics)


def mask_to_semidense(dense_depth, segments) -> np.ndarray:
    """Keep depth only on chain pixels and their 8-neighbours; NaN elsewhere."""
    dense = np.asarray(dense_depth, dtype=float)
    mask = np.zeros(dense.shape, dtype=bool)
    for es in segments:
        mask[es.ys, es.xs] = True
    mask = ndimage.binary_dilation(mask, structure=np.ones((3, 3), dtype=bool))
    return np.where(mask, dense, np.nan)


def attach_depth_semidense(chains, dense_depth):
    """Attach depth to detected chains after masking the dense map down to the chain neighbourhood."""
    if dense_depth is None:
        raise InputError("keyframe has no depth map")
    return attach_depth(chains, mask_to_semidense(dense_depth, chains), np.shape(dense_depth))

"""Baseline: image-only 2D segments first, then a RANSAC depth line per segment."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .edge_aided import _segment_from_lines, grow_lines
from .errors import DegenerateInputError
from .fitting import Line2D, build_local_frame, tls_fit_line2d
from .types import Config, LineSegment3D, Pose


@dataclass(frozen=True, eq=False)
class LineSegment2D:
    a: np.ndarray
    b: np.ndarray
    support: np.ndarray
    chain: object
    line: Line2D

    @property
    def length(self):
        return float(np.linalg.norm(self.b - self.a))


def detect_2d_segments(es, cfg: Config) -> List[LineSegment2D]:
    """Grow image-plane segments on a chain, ignoring depth."""
    out = []
    for st in grow_lines(es, cfg, 1.0, use_depth=False):
        idx = np.asarray(st.pixels)
        P = np.column_stack([es.xs[idx], es.ys[idx]]).astype(float)
        line = tls_fit_line2d(P)
        a = P[0] - (line.normal @ P[0] - line.offset) * line.normal
        b = P[-1] - (line.normal @ P[-1] - line.offset) * line.normal
        if not np.linalg.norm(b - a) > 0:
            continue
        out.append(LineSegment2D(a, b, idx, es, line))
    return out


def ransac_line2d(pts, iterations, inlier_tol, rng):
    """Best two-point consensus set; returns the boolean inlier mask."""
    n = len(pts)
    best = None
    best_count = -1
    for _ in range(iterations):
        i, j = rng.choice(n, size=2, replace=False)
        d = pts[j] - pts[i]
        norm = np.hypot(d[0], d[1])
        if norm == 0:
            continue
        normal = np.array([-d[1], d[0]]) / norm
        inliers = np.abs((pts - pts[i]) @ normal) < inlier_tol
        count = int(inliers.sum())
        if count > best_count:
            best, best_count = inliers, count
    return best


def ransac_depth_fit(
    seg: LineSegment2D,
    intrinsics,
    iterations: int,
    inlier_tol: float,
    min_support: int,
    rng=None,
) -> Optional[LineSegment3D]:
    """Lift a 2D segment to 3D with a RANSAC line in the (D, Zf) plane.

    Returns None when fewer than two supporting pixels carry depth or the
    consensus is below ``max(min_support, half the depth-bearing pixels)``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    es = seg.chain
    idx = seg.support[~np.isnan(es.depth[seg.support])]
    if len(idx) < 2:
        return None
    axis = build_local_frame(seg.a, seg.b)
    P = np.column_stack([es.xs[idx], es.ys[idx]]).astype(float)
    D = (P - axis.origin) @ axis.direction
    pts = np.column_stack([D, es.depth[idx] * intrinsics.fx])
    inliers = ransac_line2d(pts, iterations, inlier_tol, rng)
    if inliers is None or inliers.sum() < max(min_support, 0.5 * len(idx)):
        return None
    try:
        l_depth = tls_fit_line2d(pts[inliers])
        return _segment_from_lines(seg.line, l_depth, axis, seg.a, None, seg.b, None, intrinsics, es.keyframe_id)
    except DegenerateInputError:
        return None


def fit_edge_segment_decoupled(es, cfg: Config, intrinsics, rng=None) -> List[LineSegment3D]:
    rng = np.random.default_rng(0) if rng is None else rng
    out = []
    for seg in detect_2d_segments(es, cfg):
        s3 = ransac_depth_fit(seg, intrinsics, cfg.ransac_iterations, cfg.ransac_inlier_tol, cfg.L, rng)
        if s3 is not None:
            out.append(s3)
    return out


def fit_keyframe_decoupled(segments, cfg: Config, intrinsics, pose: Optional[Pose] = None, seed=0):
    pose = pose or Pose()
    rng = np.random.default_rng(seed)
    out = []
    for es in segments:
        for seg in fit_edge_segment_decoupled(es, cfg, intrinsics, rng):
            out.append(seg.transformed(pose, "world"))
    return out

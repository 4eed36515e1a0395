"""Alignment to ground truth and the accuracy / compactness / timing metrics."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import AlignmentError, InputError
from .types import LineSegment3D, Sim3


class PointCloud:
    """Finite 3D points with a k-d tree for nearest-neighbour queries."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise InputError("point cloud contains non-finite coordinates")
        self.points = pts
        self.tree = cKDTree(pts) if len(pts) else None

    def __len__(self):
        return len(self.points)

    def nearest(self, queries):
        """(distances, indices) of the nearest cloud point to each query."""
        if self.tree is None:
            raise InputError("point cloud is empty")
        q = np.asarray(queries, dtype=float).reshape(-1, 3)
        return self.tree.query(q)

    def median_spacing(self):
        if len(self.points) < 2:
            return 0.0
        d, _ = self.tree.query(self.points, k=2)
        return float(np.median(d[:, 1]))


def umeyama_sim3(src, dst) -> Sim3:
    """Closed-form least-squares similarity mapping paired `src` points onto `dst`."""
    X = np.asarray(src, dtype=float).reshape(-1, 3)
    Y = np.asarray(dst, dtype=float).reshape(-1, 3)
    if len(X) != len(Y):
        raise AlignmentError("source and destination must be paired")
    if len(X) < 3:
        raise AlignmentError("need at least three point pairs")
    mx, my = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - mx, Y - my
    sv = np.linalg.svd(Xc, compute_uv=False)
    if sv[1] <= 1e-12 * max(sv[0], 1.0):
        raise AlignmentError("source points are collinear or coincident")
    cov = Yc.T @ Xc / len(X)
    U, D, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    var_x = (Xc ** 2).sum() / len(X)
    s = float(np.trace(np.diag(D) @ S) / var_x)
    if not s > 0:
        raise AlignmentError("degenerate scale estimate")
    t = my - s * R @ mx
    return Sim3(s, R, t)


@dataclass
class IcpResult:
    transform: Sim3
    rms_history: List[float] = field(default_factory=list)
    iterations: int = 0


def icp_align(src: PointCloud, dst: PointCloud, max_iters=50, tol=1e-10, init: Optional[Sim3] = None,
              rejection_radius: Optional[float] = None) -> IcpResult:
    """Point-to-point ICP estimating a similarity transform.

    Correspondences farther than `rejection_radius` (default five times the
    median nearest-neighbour spacing of `dst`) are dropped. An update that
    would raise the RMS is discarded and iteration stops, so the recorded
    history never increases.
    """
    if len(src) == 0 or len(dst) == 0:
        raise AlignmentError("ICP needs two non-empty clouds")
    radius = rejection_radius if rejection_radius is not None else 5.0 * dst.median_spacing()
    T = init or Sim3()
    prev_T = T
    history = []
    it = 0
    while it < max_iters:
        it += 1
        dist, idx = dst.nearest(T.transform(src.points))
        keep = dist <= radius
        if keep.sum() < 3:
            if not history:
                raise AlignmentError("no correspondences within the rejection radius")
            T = prev_T
            break
        rms = math.sqrt(float(np.mean(dist[keep] ** 2)))
        if history and rms > history[-1]:
            T = prev_T
            break
        history.append(rms)
        if rms <= tol or (len(history) > 1 and history[-2] - rms < tol):
            break
        prev_T = T
        T = umeyama_sim3(src.points[keep], dst.points[idx[keep]])
    return IcpResult(T, history, it)


def icp_sim3(src: PointCloud, dst: PointCloud, max_iters=50, tol=1e-10, init=None, rejection_radius=None) -> Sim3:
    return icp_align(src, dst, max_iters, tol, init, rejection_radius).transform


def segment_endpoints(segments):
    if not segments:
        return np.empty((0, 3))
    return np.concatenate([np.stack([s.p1, s.p2]) for s in segments])


def mean_vertex_distance(segments, gt: PointCloud, align: Optional[Sim3] = None) -> float:
    """Mean distance in millimetres from aligned segment endpoints to their nearest ground-truth point."""
    if len(gt) == 0:
        raise InputError("ground-truth cloud is empty")
    if not segments:
        raise InputError("no segments to evaluate")
    pts = segment_endpoints(segments)
    if align is not None:
        pts = align.transform(pts)
    dist, _ = gt.nearest(pts)
    return float(dist.mean() * 1000.0)


def point_segment_distance(points, a, b):
    """Euclidean distance from each point to the closed segment [a, b]."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    u = b - a
    t = np.clip((P - a) @ u / float(u @ u), 0.0, 1.0)
    return np.linalg.norm(P - (a + t[:, None] * u), axis=1)


def endpoint_errors(segments, gt_segments):
    """Distance from every endpoint to the nearest ground-truth segment, in metres."""
    pts = segment_endpoints(segments)
    if len(pts) == 0:
        return np.empty(0)
    d = np.stack([point_segment_distance(pts, g.p1, g.p2) for g in gt_segments])
    return d.min(axis=0)


def count_vertices(obj) -> int:
    """Point count of a cloud, or two per segment / cluster representative."""
    if isinstance(obj, PointCloud):
        return len(obj)
    if isinstance(obj, np.ndarray):
        return int(obj.reshape(-1, 3).shape[0])
    return 2 * len(obj)


def timed_fit(fit, *args, **kwargs):
    t0 = time.perf_counter()
    out = fit(*args, **kwargs)
    return out, (time.perf_counter() - t0) * 1000.0


def time_keyframe_fit(fit, *args, **kwargs) -> float:
    """Wall-clock milliseconds of one keyframe fit call."""
    return timed_fit(fit, *args, **kwargs)[1]


@dataclass
class EvalReport:
    method: str
    mean_distance_mm: Optional[float]
    vertex_count: int
    per_keyframe_ms: List[float] = field(default_factory=list)

    @property
    def mean_fit_ms(self):
        return float(np.mean(self.per_keyframe_ms)) if self.per_keyframe_ms else None

    CSV_HEADER = "method,mean_distance_mm,vertex_count,mean_fit_ms,keyframes"

    def csv_row(self):
        def fmt(v):
            return "" if v is None else repr(float(v))
        return f"{self.method},{fmt(self.mean_distance_mm)},{self.vertex_count},{fmt(self.mean_fit_ms)},{len(self.per_keyframe_ms)}"

    def text(self):
        lines = [f"method: {self.method}"]
        if self.mean_distance_mm is not None:
            lines.append(f"  average vertex distance: {self.mean_distance_mm:.2f} mm")
        lines.append(f"  vertices: {self.vertex_count}")
        if self.per_keyframe_ms:
            lines.append(f"  fit time: {self.mean_fit_ms:.2f} ms/keyframe over {len(self.per_keyframe_ms)} keyframes")
        return "\n".join(lines)


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def read_ply_points(path) -> np.ndarray:
    """xyz of the vertex element of an ascii or binary little-endian PLY file."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise InputError(f"{path}: not a PLY file")
    body_start = data.index(b"\n", end) + 1
    header = data[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements = []
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise InputError(f"{path}: property before element")
            if parts[1] == "list":
                elements[-1][2].append((parts[-1], None))
            else:
                if parts[1] not in _PLY_TYPES:
                    raise InputError(f"{path}: unknown property type {parts[1]}")
                elements[-1][2].append((parts[2], _PLY_TYPES[parts[1]]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise InputError(f"{path}: unsupported PLY format {fmt}")
    if not elements or elements[0][0] != "vertex":
        raise InputError(f"{path}: vertex must be the first element")
    _, count, props = elements[0]
    names = [p[0] for p in props]
    if not {"x", "y", "z"} <= set(names) or any(t is None for _, t in props):
        raise InputError(f"{path}: vertex element needs scalar x, y, z")
    if fmt == "ascii":
        rows = data[body_start:].decode("ascii").split("\n")
        try:
            table = np.array([r.split()[:len(props)] for r in rows[:count]], dtype=float).reshape(count, len(props))
        except ValueError as exc:
            raise InputError(f"{path}: malformed ascii vertex data") from exc
        cols = [names.index(c) for c in "xyz"]
        return table[:, cols]
    dtype = np.dtype([(n, "<" + t) for n, t in props])
    if len(data) - body_start < count * dtype.itemsize:
        raise InputError(f"{path}: truncated binary vertex data")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=body_start)
    return np.column_stack([arr["x"], arr["y"], arr["z"]]).astype(float)


def write_ply_points(path, points, binary=False):
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    fmt, ptype = ("binary_little_endian", "float") if binary else ("ascii", "double")
    header = (f"ply\nformat {fmt} 1.0\nelement vertex {len(pts)}\n"
              + "".join(f"property {ptype} {c}\n" for c in "xyz") + "end_header\n")
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        if binary:
            f.write(pts.astype("<f4").tobytes())
        else:
            for p in pts.tolist():
                f.write(f"{p[0]!r} {p[1]!r} {p[2]!r}\n".encode("ascii"))

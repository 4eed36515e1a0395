"""Planar total-least-squares lines and the p1-xz local frame."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateInputError


def _canonical_sign(n):
    # first nonzero component positive
    if n[0] < 0 or (n[0] == 0 and n[1] < 0):
        return -n
    return n


@dataclass(frozen=True, eq=False)
class Line2D:
    """The line ``normal . p = offset`` with the rms orthogonal residual of its fit."""

    normal: np.ndarray
    offset: float
    rms: float = 0.0

    @property
    def direction(self):
        return np.array([-self.normal[1], self.normal[0]])

    def distance(self, p):
        return abs(float(self.normal @ np.asarray(p, dtype=float)) - self.offset)


def tls_fit_line2d(points) -> Line2D:
    """Total least squares line through 2D points.

    The normal is the eigenvector of the 2x2 scatter matrix with the smallest
    eigenvalue, which is the right singular vector of the centered data with
    the smallest singular value.
    """
    P = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(P) < 2:
        raise DegenerateInputError("need at least two points to fit a line")
    centroid = P.mean(axis=0)
    Q = P - centroid
    if not np.any(Q):
        raise DegenerateInputError("all points coincide")
    scatter = Q.T @ Q
    evals, evecs = np.linalg.eigh(scatter)
    n = _canonical_sign(evecs[:, 0])
    c = float(n @ centroid)
    rms = math.sqrt(max(evals[0], 0.0) / len(P))
    return Line2D(n, c, rms)


def point_line_distance(p, line: Line2D) -> float:
    return line.distance(p)


class Axis(NamedTuple):
    """x-axis of the local frame: anchor pixel and unit direction in image coordinates."""

    origin: np.ndarray
    direction: np.ndarray


def build_local_frame(p1, pn) -> Axis:
    a = np.array([p1[0], p1[1]], dtype=float)
    b = np.array([pn[0], pn[1]], dtype=float)
    d = b - a
    norm = math.hypot(d[0], d[1])
    if norm == 0:
        raise DegenerateInputError("axis endpoints coincide")
    return Axis(a, d / norm)


class FrameSample(NamedTuple):
    D: float
    Zf: float


def to_frame_sample(p, axis: Axis, intrinsics) -> FrameSample:
    """Position along the axis and focal-scaled depth of one pixel.

    Raises DegenerateInputError for a pixel without depth; callers treat that
    pixel as an outlier.
    """
    depth = p[2] if len(p) > 2 else None
    if depth is None or not math.isfinite(depth):
        raise DegenerateInputError("pixel has no depth")
    D = (p[0] - axis.origin[0]) * axis.direction[0] + (p[1] - axis.origin[1]) * axis.direction[1]
    return FrameSample(float(D), float(depth) * intrinsics.fx)


def backproject(p, intrinsics) -> np.ndarray:
    depth = p[2] if len(p) > 2 else None
    if depth is None or not math.isfinite(depth):
        raise DegenerateInputError("cannot backproject a pixel without depth")
    return backproject_xyz(p[0], p[1], depth, intrinsics)


def backproject_xyz(x, y, z, intrinsics):
    return np.array([
        (x - intrinsics.cx) * z / intrinsics.fx,
        (y - intrinsics.cy) * z / intrinsics.fy,
        z,
    ], dtype=float)


def project_point(X, intrinsics) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.array([intrinsics.fx * X[0] / X[2] + intrinsics.cx, intrinsics.fy * X[1] / X[2] + intrinsics.cy])


def point_on_line_at(line: Line2D, axis: Axis, D: float) -> np.ndarray:
    """Image point of `line` whose projection onto the axis lies at parameter D."""
    u = axis.direction
    v = np.array([-u[1], u[0]])
    nv = float(line.normal @ v)
    if abs(nv) < 1e-12:
        raise DegenerateInputError("image line is perpendicular to the axis")
    base = axis.origin + D * u
    t = (line.offset - float(line.normal @ base)) / nv
    return base + t * v


def zf_at(line: Line2D, D: float) -> float:
    """Evaluate the (D, Zf) line as a function of D."""
    nz = float(line.normal[1])
    if abs(nz) < 1e-12:
        raise DegenerateInputError("depth line is vertical in the (D, Zf) plane")
    return (line.offset - float(line.normal[0]) * D) / nz


def project_onto_line(point, a, b):
    """Orthogonal projection of a 3D point onto the infinite line through a and b."""
    u = b - a
    t = float((point - a) @ u) / float(u @ u)
    return a + t * u


@dataclass(frozen=True, eq=False)
class PlanarFit:
    """Image-plane line over (x, y) and depth-plane line over (D, Zf), sharing one axis."""

    l_im: Line2D
    l_depth: Line2D
    axis: Axis

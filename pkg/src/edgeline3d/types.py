"""Geometric value types and run configuration shared by every stage."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, DegenerateInputError, InputError


class Pixel(NamedTuple):
    x: int
    y: int
    depth: Optional[float] = None


@dataclass(eq=False)
class EdgeSegment:
    """An ordered, 8-connected, one-pixel-wide chain.

    Coordinates are stored as integer arrays and depth as a float array
    with NaN marking pixels the semi-dense map does not cover.
    """

    xs: np.ndarray
    ys: np.ndarray
    depth: np.ndarray = None
    keyframe_id: int = 0

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=np.int64)
        self.ys = np.asarray(self.ys, dtype=np.int64)
        if self.depth is None:
            self.depth = np.full(len(self.xs), np.nan)
        else:
            self.depth = np.asarray(self.depth, dtype=float)
        if not (len(self.xs) == len(self.ys) == len(self.depth)):
            raise InputError("xs, ys and depth must have equal length")
        if len(self.xs) == 0:
            raise InputError("an edge segment needs at least one pixel")
        if len(self.xs) > 1:
            dx = np.abs(np.diff(self.xs))
            dy = np.abs(np.diff(self.ys))
            if np.any(np.maximum(dx, dy) != 1):
                raise InputError("consecutive chain pixels must be 8-connected")
        key = self.xs * (int(self.ys.max()) + 1 if len(self.ys) else 1) + self.ys
        if len(np.unique(key)) != len(key):
            raise InputError("chain pixels must not repeat")
        bad = ~np.isnan(self.depth) & ~(np.isfinite(self.depth) & (self.depth > 0))
        if np.any(bad):
            raise InputError("depth values must be finite and positive")

    @classmethod
    def from_pixels(cls, pixels, keyframe_id=0):
        xs = [p[0] for p in pixels]
        ys = [p[1] for p in pixels]
        zs = [np.nan if len(p) < 3 or p[2] is None else p[2] for p in pixels]
        return cls(xs, ys, zs, keyframe_id)

    def __len__(self):
        return len(self.xs)

    @property
    def pixels(self):
        return [
            Pixel(int(x), int(y), None if math.isnan(z) else float(z))
            for x, y, z in zip(self.xs, self.ys, self.depth)
        ]

    def with_depth(self, depth):
        return EdgeSegment(self.xs, self.ys, depth, self.keyframe_id)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ConfigError("principal point must lie inside the image")

    def project(self, points):
        """Pinhole projection of camera-frame points, shape (N, 3) -> (N, 2)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        u = self.fx * p[:, 0] / p[:, 2] + self.cx
        v = self.fy * p[:, 1] / p[:, 2] + self.cy
        return np.column_stack([u, v])


TUM_DEFAULT_INTRINSICS = CameraIntrinsics(525.0, 525.0, 319.5, 239.5, 640, 480)


def _check_rotation(R):
    R = np.asarray(R, dtype=float).reshape(3, 3)
    if not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or np.linalg.det(R) < 0:
        raise DegenerateInputError("rotation must be orthonormal with det +1")
    return R


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid world-from-camera transform."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _check_rotation(self.rotation))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    def transform(self, points):
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def inverse(self):
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def compose(self, other):
        """self * other: apply `other` first."""
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    @classmethod
    def from_quaternion(cls, t, q):
        """Build from translation and an (x, y, z, w) quaternion, normalized here."""
        x, y, z, w = np.asarray(q, dtype=float) / np.linalg.norm(q)
        R = np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ])
        return cls(R, t)

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 0.0, 1.0)):
        """Camera at `eye` looking at `target`; camera y axis points down in the image."""
        eye = np.asarray(eye, dtype=float)
        z = np.asarray(target, dtype=float) - eye
        z /= np.linalg.norm(z)
        x = np.cross(z, up)
        if np.linalg.norm(x) < 1e-9:
            x = np.cross(z, (1.0, 0.0, 0.0))
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        return cls(np.column_stack([x, y, z]), eye)


@dataclass(frozen=True, eq=False)
class Sim3:
    scale: float = 1.0
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not self.scale > 0:
            raise DegenerateInputError("Sim3 scale must be positive")
        object.__setattr__(self, "rotation", _check_rotation(self.rotation))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    def transform(self, points):
        p = np.asarray(points, dtype=float)
        return self.scale * p @ self.rotation.T + self.translation

    def inverse(self):
        Rt = self.rotation.T
        return Sim3(1.0 / self.scale, Rt, -(Rt @ self.translation) / self.scale)

    def compose(self, other):
        return Sim3(
            self.scale * other.scale,
            self.rotation @ other.rotation,
            self.scale * self.rotation @ other.translation + self.translation,
        )


FRAMES = ("camera", "world", "aligned")


@dataclass(frozen=True, eq=False)
class LineSegment3D:
    p1: np.ndarray
    p2: np.ndarray
    frame: str = "camera"
    keyframe_id: int = 0

    def __post_init__(self):
        p1 = np.asarray(self.p1, dtype=float).reshape(3)
        p2 = np.asarray(self.p2, dtype=float).reshape(3)
        if not (np.all(np.isfinite(p1)) and np.all(np.isfinite(p2))):
            raise DegenerateInputError("segment endpoints must be finite")
        if not np.linalg.norm(p2 - p1) > 0:
            raise DegenerateInputError("segment endpoints coincide")
        if self.frame not in FRAMES:
            raise ValueError(f"unknown frame tag {self.frame!r}")
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "p2", p2)

    @property
    def length(self):
        return float(np.linalg.norm(self.p2 - self.p1))

    def transformed(self, T, frame):
        """Apply a Pose or Sim3 to both endpoints."""
        a, b = T.transform(np.stack([self.p1, self.p2]))
        return LineSegment3D(a, b, frame, self.keyframe_id)


OUTLIER_MODES = ("consecutive", "total")


@dataclass(frozen=True)
class Config:
    """Thresholds for fitting and clustering.

    Image-dependent thresholds are stored as multipliers of min(width, height);
    ``L``, ``e1`` and ``e2`` stay ``None`` until :func:`resolve_config` runs.
    """

    L_factor: float = 0.02
    e1_factor: float = 0.002
    e2_factor: float = 0.003
    lambda_alpha: float = 10.0
    lambda_d: float = 0.02
    lambda_C: int = 3
    fold_angle: bool = True
    outlier_mode: str = "consecutive"
    gradient_threshold: float = 36.0
    anchor_threshold: float = 8.0
    scan_interval: int = 1
    ransac_iterations: int = 100
    ransac_tol: Optional[float] = None
    L: Optional[int] = None
    e1: Optional[float] = None
    e2: Optional[float] = None

    def __post_init__(self):
        for name in ("L_factor", "e1_factor", "e2_factor", "lambda_alpha", "lambda_d"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if int(self.lambda_C) != self.lambda_C or self.lambda_C < 1:
            raise ConfigError("lambda_C must be an integer >= 1")
        if self.outlier_mode not in OUTLIER_MODES:
            raise ConfigError(f"outlier_mode must be one of {OUTLIER_MODES}")
        if self.gradient_threshold < 0 or self.anchor_threshold < 0:
            raise ConfigError("edge thresholds must be non-negative")
        if self.scan_interval < 1 or self.ransac_iterations < 1:
            raise ConfigError("scan_interval and ransac_iterations must be >= 1")
        if self.L is not None and self.L < 2:
            raise ConfigError("resolved L must be >= 2")

    @property
    def resolved(self):
        return self.L is not None

    @property
    def ransac_inlier_tol(self):
        return self.e2 if self.ransac_tol is None else self.ransac_tol


def resolve_config(cfg: Config, intrinsics: CameraIntrinsics) -> Config:
    """Turn the resolution-relative factors into absolute thresholds.

    ``L`` rounds half up and is clamped to at least 2.
    """
    if intrinsics.width <= 0 or intrinsics.height <= 0:
        raise ConfigError("image size must be set before resolving")
    side = min(intrinsics.width, intrinsics.height)
    L = max(2, int(math.floor(cfg.L_factor * side + 0.5)))
    return dataclasses.replace(cfg, L=L, e1=cfg.e1_factor * side, e2=cfg.e2_factor * side)


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "on": True,
               "false": False, "0": False, "no": False, "off": False}


def parse_bool(text):
    try:
        return _BOOL_WORDS[str(text).strip().lower()]
    except KeyError:
        raise ConfigError(f"not a boolean: {text!r}") from None


def _coerce(name, raw):
    ftype = {f.name: f.type for f in dataclasses.fields(Config)}[name]
    if "bool" in ftype:
        return parse_bool(raw)
    if ftype == "str":
        return raw
    if raw.lower() in ("none", ""):
        return None
    if "int" in ftype:
        return int(raw)
    return float(raw)


def parse_config_text(text, base: Optional[Config] = None) -> Config:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name for f in dataclasses.fields(Config)} - {"L", "e1", "e2"}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(key, raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r}") from exc
    return dataclasses.replace(base or Config(), **values)


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def dump_config(cfg: Config) -> str:
    lines = []
    for f in dataclasses.fields(Config):
        if f.name in ("L", "e1", "e2"):
            continue
        lines.append(f"{f.name} = {getattr(cfg, f.name)}")
    return "\n".join(lines) + "\n"

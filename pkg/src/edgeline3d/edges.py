"""Edge Drawing style detector: Sobel gradient, anchor scan, smart routing into pixel chains."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import ndimage

from .errors import InputError
from .types import EdgeSegment

EDGE_HORIZONTAL = 0
EDGE_VERTICAL = 1

DEFAULT_GRADIENT_THRESHOLD = 36.0
DEFAULT_ANCHOR_THRESHOLD = 8.0

_LEFT, _RIGHT, _UP, _DOWN = (-1, 0), (1, 0), (0, -1), (0, 1)


@dataclass(eq=False)
class GradientMap:
    magnitude: np.ndarray
    direction: np.ndarray
    anchors: Optional[np.ndarray] = None

    def __post_init__(self):
        self.magnitude = np.asarray(self.magnitude, dtype=float)
        self.direction = np.asarray(self.direction, dtype=np.int8)
        if self.anchors is None:
            self.anchors = np.zeros(self.magnitude.shape, dtype=bool)

    @property
    def shape(self):
        return self.magnitude.shape


def to_grayscale(image) -> np.ndarray:
    """8-bit luminance; 3- or 4-channel input is converted with Rec. 601 weights."""
    img = np.asarray(image)
    if img.ndim == 3:
        img = np.rint(0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2])
    elif img.ndim != 2:
        raise InputError(f"expected a 2D or RGB image, got shape {img.shape}")
    elif img.dtype.kind == "f":
        img = np.rint(img)
    return np.clip(img, 0, 255).astype(np.uint8)


def compute_gradient(image) -> GradientMap:
    """|Gx| + |Gy| from 3x3 Sobel; the one-pixel border ring is left at zero."""
    I = np.asarray(image, dtype=float)
    if I.ndim != 2 or I.shape[0] < 3 or I.shape[1] < 3:
        raise InputError("image must be 2D and at least 3x3")
    gx = (I[:-2, 2:] + 2 * I[1:-1, 2:] + I[2:, 2:]) - (I[:-2, :-2] + 2 * I[1:-1, :-2] + I[2:, :-2])
    gy = (I[2:, :-2] + 2 * I[2:, 1:-1] + I[2:, 2:]) - (I[:-2, :-2] + 2 * I[:-2, 1:-1] + I[:-2, 2:])
    mag = np.zeros_like(I)
    mag[1:-1, 1:-1] = np.abs(gx) + np.abs(gy)
    direction = np.full(I.shape, EDGE_HORIZONTAL, dtype=np.int8)
    direction[1:-1, 1:-1] = np.where(np.abs(gx) >= np.abs(gy), EDGE_VERTICAL, EDGE_HORIZONTAL)
    return GradientMap(mag, direction)


def extract_anchors(g: GradientMap, gradient_threshold: float = DEFAULT_GRADIENT_THRESHOLD,
                    anchor_threshold: float = DEFAULT_ANCHOR_THRESHOLD, scan_interval: int = 1) -> set:
    """Pixels that beat both neighbours across the edge by at least `anchor_threshold`.

    Vertical edges compare against left/right neighbours, horizontal edges
    against up/down. Only every `scan_interval`-th row and column is sampled.
    Also records the result in ``g.anchors``.
    """
    G = g.magnitude
    P = np.pad(G, 1, mode="constant", constant_values=np.inf)
    left, right = P[1:-1, :-2], P[1:-1, 2:]
    up, down = P[:-2, 1:-1], P[2:, 1:-1]
    vertical = g.direction == EDGE_VERTICAL
    n1 = np.where(vertical, left, up)
    n2 = np.where(vertical, right, down)
    thr = anchor_threshold
    with np.errstate(invalid="ignore"):
        is_max = (G - n1 >= thr) & (G - n2 >= thr) & (G > n1) & (G > n2)
    mask = is_max & (G >= gradient_threshold) & (G > 0)
    sampled = np.zeros_like(mask)
    sampled[::scan_interval, ::scan_interval] = True
    mask &= sampled
    g.anchors = mask
    ys, xs = np.nonzero(mask)
    return set(zip(xs.tolist(), ys.tolist()))


def _forward(heading):
    dx, dy = heading
    if dx:
        return [(dx, -1), (dx, 0), (dx, 1)]
    return [(-1, dy), (0, dy), (1, dy)]


def _walk(x, y, heading, G, vert, visited, thr, W, H):
    path = []
    last = heading
    while True:
        if vert[y][x]:
            if heading[0]:
                heading = _pick_turn(x, y, (_UP, _DOWN), last[1], G, visited, W, H)
        elif heading[1]:
            heading = _pick_turn(x, y, (_LEFT, _RIGHT), last[0], G, visited, W, H)
        best = None
        best_g = -1.0
        # middle candidate first so that ties keep going straight
        for dx, dy in sorted(_forward(heading), key=lambda d: abs(d[0]) + abs(d[1])):
            nx, ny = x + dx, y + dy
            if 0 <= nx < W and 0 <= ny < H and G[ny][nx] > best_g:
                best, best_g = (nx, ny), G[ny][nx]
        if best is None or best_g < thr or best_g <= 0:
            break
        nx, ny = best
        if visited[ny][nx]:
            break
        visited[ny][nx] = True
        path.append(best)
        last = (nx - x, ny - y)
        x, y = nx, ny
    return path


def _pick_turn(x, y, options, last_component, G, visited, W, H):
    if last_component < 0:
        return options[0]
    if last_component > 0:
        return options[1]
    scores = []
    for h in options:
        s = -1.0
        for dx, dy in _forward(h):
            nx, ny = x + dx, y + dy
            if 0 <= nx < W and 0 <= ny < H and not visited[ny][nx]:
                s = max(s, G[ny][nx])
        scores.append(s)
    return options[0] if scores[0] >= scores[1] else options[1]


def link_edge_segments(g: GradientMap, anchors, gradient_threshold: float = DEFAULT_GRADIENT_THRESHOLD,
                       keyframe_id: int = 0) -> List[EdgeSegment]:
    """Route chains from anchors along maximal-gradient neighbours.

    Anchors are visited strongest first. Each walk goes both ways from its
    anchor and stops at weak pixels or at pixels already claimed, so chains
    never share a pixel and never branch.
    """
    H, W = g.shape
    G = g.magnitude.tolist()
    vert = (g.direction == EDGE_VERTICAL).tolist()
    visited = [[False] * W for _ in range(H)]
    order = sorted(anchors, key=lambda p: (-g.magnitude[p[1], p[0]], p[1], p[0]))
    chains = []
    for x, y in order:
        if visited[y][x]:
            continue
        visited[y][x] = True
        if vert[y][x]:
            first, second = _UP, _DOWN
        else:
            first, second = _LEFT, _RIGHT
        back = _walk(x, y, first, G, vert, visited, gradient_threshold, W, H)
        fwd = _walk(x, y, second, G, vert, visited, gradient_threshold, W, H)
        pixels = back[::-1] + [(x, y)] + fwd
        if len(pixels) < 2:
            continue
        xs, ys = zip(*pixels)
        chains.append(EdgeSegment(xs, ys, keyframe_id=keyframe_id))
    return chains


def attach_depth(segments, depth_map, image_shape=None) -> List[EdgeSegment]:
    """Copy per-pixel depth from a sparse map; NaN or non-positive entries mean no depth."""
    depth = np.asarray(depth_map, dtype=float)
    if image_shape is not None and tuple(image_shape[:2]) != depth.shape:
        raise InputError(f"depth map {depth.shape} does not match image {tuple(image_shape[:2])}")
    out = []
    for es in segments:
        if es.xs.max() >= depth.shape[1] or es.ys.max() >= depth.shape[0] or es.xs.min() < 0 or es.ys.min() < 0:
            raise InputError("edge pixels fall outside the depth map")
        z = depth[es.ys, es.xs]
        z = np.where(np.isfinite(z) & (z > 0), z, np.nan)
        out.append(es.with_depth(z))
    return out


def detect_edges(image, gradient_threshold=DEFAULT_GRADIENT_THRESHOLD, anchor_threshold=DEFAULT_ANCHOR_THRESHOLD,
                 scan_interval=1, sigma=1.0, keyframe_id=0) -> List[EdgeSegment]:
    """Grayscale conversion, optional Gaussian smoothing, then anchors and linking."""
    gray = to_grayscale(image).astype(float)
    if sigma:
        gray = ndimage.gaussian_filter(gray, sigma, truncate=2.0)
    g = compute_gradient(gray)
    anchors = extract_anchors(g, gradient_threshold, anchor_threshold, scan_interval)
    return link_edge_segments(g, anchors, gradient_threshold, keyframe_id)

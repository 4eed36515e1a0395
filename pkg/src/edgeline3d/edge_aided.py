"""Incremental 3D line growing along edge chains, testing image and depth planes together."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import DegenerateInputError
from .fitting import (
    Axis,
    PlanarFit,
    backproject_xyz,
    point_on_line_at,
    project_onto_line,
    tls_fit_line2d,
    zf_at,
)
from .types import Config, LineSegment3D, Pose


@dataclass(eq=False)
class FitState:
    """One grown line: chain indices of accepted and rejected pixels plus its axis."""

    chain: object
    pixels: List[int]
    outliers: List[int]
    axis: Axis
    L: int
    e1: float
    e2: float
    fit: Optional[PlanarFit] = None
    segment: Optional[LineSegment3D] = None


def _tls_angle(n, sx, sy, sxx, sxy, syy):
    # returns (mean x, mean y, normal x, normal y) of the TLS line of accumulated sums
    mx = sx / n
    my = sy / n
    a = sxx / n - mx * mx
    b = sxy / n - mx * my
    c = syy / n - my * my
    th = 0.5 * math.atan2(2.0 * b, a - c)
    return mx, my, -math.sin(th), math.cos(th)


def grow_lines(es, cfg: Config, fx: float, use_depth: bool = True) -> List[FitState]:
    """Run the seed / grow / close loop over one chain.

    With ``use_depth=False`` only the image-plane test is applied and depth is
    ignored entirely, which is the image-only growth of the decoupled baseline.
    """
    if not cfg.resolved:
        raise ValueError("config must be resolved for the image size first")
    L, e1, e2 = cfg.L, cfg.e1, cfg.e2
    consecutive = cfg.outlier_mode == "consecutive"
    xs = es.xs.tolist()
    ys = es.ys.tolist()
    zs = es.depth.tolist()
    m = len(xs)
    atan2, sin, cos = math.atan2, math.sin, math.cos
    states = []
    i = 0
    while i < m:
        # seed window: L consecutive usable pixels
        if use_depth:
            run = 0
            j = i
            while j < m and run < L:
                run = run + 1 if zs[j] == zs[j] else 0
                j += 1
            if run < L:
                break
            start = j - L
        else:
            if m - i < L:
                break
            start, j = i, i + L
        x0, y0 = xs[start], ys[start]
        ux, uy = xs[j - 1] - x0, ys[j - 1] - y0
        norm = math.hypot(ux, uy)
        ux, uy = ux / norm, uy / norm
        z0 = zs[start] * fx if use_depth else 0.0

        n = 0
        sx = sy = sxx = sxy = syy = 0.0
        sd = sz = sdd = sdz = szz = 0.0
        for k in range(start, j):
            x = xs[k] - x0
            y = ys[k] - y0
            n += 1
            sx += x
            sy += y
            sxx += x * x
            sxy += x * y
            syy += y * y
            if use_depth:
                d = x * ux + y * uy
                z = zs[k] * fx - z0
                sd += d
                sz += z
                sdd += d * d
                sdz += d * z
                szz += z * z
        accepted = list(range(start, j))
        outliers = []
        bad = 0

        mx, my, nx, ny = _tls_angle(n, sx, sy, sxx, sxy, syy)
        if use_depth:
            md, mz, nd, nz = _tls_angle(n, sd, sz, sdd, sdz, szz)

        i = j
        while i < m:
            x = xs[i] - x0
            y = ys[i] - y0
            ok = abs(nx * (x - mx) + ny * (y - my)) < e1
            if ok and use_depth:
                zr = zs[i]
                if zr != zr:
                    ok = False
                else:
                    d = x * ux + y * uy
                    z = zr * fx - z0
                    ok = abs(nd * (d - md) + nz * (z - mz)) < e2
            if ok:
                n += 1
                sx += x
                sy += y
                sxx += x * x
                sxy += x * y
                syy += y * y
                # inlined _tls_angle; this is the hot path
                mx = sx / n
                my = sy / n
                th = 0.5 * atan2(2.0 * (sxy / n - mx * my), (sxx / n - mx * mx) - (syy / n - my * my))
                nx = -sin(th)
                ny = cos(th)
                if use_depth:
                    sd += d
                    sz += z
                    sdd += d * d
                    sdz += d * z
                    szz += z * z
                    md = sd / n
                    mz = sz / n
                    th = 0.5 * atan2(2.0 * (sdz / n - md * mz), (sdd / n - md * md) - (szz / n - mz * mz))
                    nd = -sin(th)
                    nz = cos(th)
                accepted.append(i)
                if consecutive:
                    bad = 0
            else:
                outliers.append(i)
                bad += 1
            i += 1
            if bad > L:
                break
        if len(accepted) > L:
            axis = Axis(np.array([float(x0), float(y0)]), np.array([ux, uy]))
            states.append(FitState(es, accepted, outliers, axis, L, e1, e2))
    return states


def segment_from_fit(state: FitState, intrinsics) -> LineSegment3D:
    """Refit both planar lines on the accepted pixels and build the 3D segment.

    Two points on the image line, taken at the axis parameters of the first and
    last accepted pixels and lifted with the depth line, define the 3D line.
    The endpoints are the 3D points of the first and last accepted pixels
    projected onto it.
    """
    es = state.chain
    idx = np.asarray(state.pixels)
    P = np.column_stack([es.xs[idx], es.ys[idx]]).astype(float)
    Z = es.depth[idx]
    fx = intrinsics.fx
    l_im = tls_fit_line2d(P)
    D = (P - state.axis.origin) @ state.axis.direction
    l_depth = tls_fit_line2d(np.column_stack([D, Z * fx]))
    state.fit = PlanarFit(l_im, l_depth, state.axis)
    state.segment = _segment_from_lines(
        l_im, l_depth, state.axis, P[0], Z[0], P[-1], Z[-1], intrinsics, es.keyframe_id)
    return state.segment


def _segment_from_lines(l_im, l_depth, axis, first_xy, first_z, last_xy, last_z, intrinsics, keyframe_id):
    fx = intrinsics.fx
    Da = float((first_xy - axis.origin) @ axis.direction)
    Db = float((last_xy - axis.origin) @ axis.direction)
    za = zf_at(l_depth, Da) / fx
    zb = zf_at(l_depth, Db) / fx
    if not (za > 0 and zb > 0):
        raise DegenerateInputError("fitted depth is not positive at the segment ends")
    a_img = point_on_line_at(l_im, axis, Da)
    b_img = point_on_line_at(l_im, axis, Db)
    A = backproject_xyz(a_img[0], a_img[1], za, intrinsics)
    B = backproject_xyz(b_img[0], b_img[1], zb, intrinsics)
    if not np.linalg.norm(B - A) > 1e-12:
        raise DegenerateInputError("fitted 3D line has coincident support points")
    if first_z is None:
        return LineSegment3D(A, B, "camera", keyframe_id)
    first = backproject_xyz(first_xy[0], first_xy[1], first_z, intrinsics)
    last = backproject_xyz(last_xy[0], last_xy[1], last_z, intrinsics)
    return LineSegment3D(project_onto_line(first, A, B), project_onto_line(last, A, B), "camera", keyframe_id)


def fit_states(es, cfg: Config, intrinsics) -> List[FitState]:
    """Grow lines on one chain and attach the final planar fits; degenerate fits are dropped."""
    out = []
    for st in grow_lines(es, cfg, intrinsics.fx, use_depth=True):
        try:
            segment_from_fit(st, intrinsics)
        except DegenerateInputError:
            continue
        out.append(st)
    return out


def fit_edge_segment(es, cfg: Config, intrinsics) -> List[LineSegment3D]:
    """Camera-frame 3D segments extracted from one edge chain."""
    return [st.segment for st in fit_states(es, cfg, intrinsics)]


def fit_keyframe(segments, cfg: Config, intrinsics, pose: Optional[Pose] = None) -> List[LineSegment3D]:
    """All segments of one keyframe, mapped to the world frame by its world-from-camera pose."""
    pose = pose or Pose()
    out = []
    for es in segments:
        for seg in fit_edge_segment(es, cfg, intrinsics):
            out.append(seg.transformed(pose, "world"))
    return out

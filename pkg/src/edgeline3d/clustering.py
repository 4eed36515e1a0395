"""Greedy incremental merging of registered 3D segments."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DegenerateInputError
from .types import LineSegment3D


@dataclass(eq=False)
class Cluster:
    representative: LineSegment3D
    members: List[int] = field(default_factory=list)
    endpoints: List[np.ndarray] = field(default_factory=list)

    @property
    def size(self):
        return len(self.members)

    def add(self, seg_id, seg):
        self.members.append(seg_id)
        self.endpoints.append(seg.p1)
        self.endpoints.append(seg.p2)


def angle_measure(a: LineSegment3D, b: LineSegment3D, fold: bool = True) -> float:
    """Angle between segment directions in degrees; folded into [0, 90] by default."""
    va = a.p2 - a.p1
    vb = b.p2 - b.p1
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0 or nb == 0:
        raise DegenerateInputError("zero-length segment")
    cos = float(np.clip(va @ vb / (na * nb), -1.0, 1.0))
    alpha = math.degrees(math.acos(cos))
    return min(alpha, 180.0 - alpha) if fold else alpha


def distance_measure(rep: LineSegment3D, cand: LineSegment3D) -> float:
    """Excess path length through the nearer candidate endpoint; zero when it lies on `rep`."""
    p1i, p2i = rep.p1, rep.p2
    base = np.linalg.norm(p2i - p1i)
    d1 = np.linalg.norm(cand.p1 - p1i) + np.linalg.norm(cand.p1 - p2i) - base
    d2 = np.linalg.norm(cand.p2 - p1i) + np.linalg.norm(cand.p2 - p2i) - base
    return max(0.0, float(min(d1, d2)))


def assign(segment, clusters, lambda_alpha, lambda_d, fold=True) -> Optional[int]:
    """Index of the first cluster accepting `segment`, or None for a new cluster."""
    for k, c in enumerate(clusters):
        rep = c.representative
        if angle_measure(rep, segment, fold) < lambda_alpha and distance_measure(rep, segment) < lambda_d:
            return k
    return None


def refit_cluster(c: Cluster) -> LineSegment3D:
    """Principal-direction line through the endpoint centroid, clipped to the extreme projections."""
    P = np.asarray(c.endpoints, dtype=float)
    if len(P) < 2:
        raise DegenerateInputError("cluster needs at least two endpoints")
    centroid = P.mean(axis=0)
    Q = P - centroid
    if not np.any(Q):
        raise DegenerateInputError("all cluster endpoints coincide")
    u = np.linalg.svd(Q, full_matrices=False)[2][0]
    # keep the orientation of the first member
    if u @ (P[1] - P[0]) < 0:
        u = -u
    t = Q @ u
    rep = c.representative
    return LineSegment3D(centroid + t.min() * u, centroid + t.max() * u, rep.frame, rep.keyframe_id)


def _first_match(A, B, seg, lambda_alpha, lambda_d, fold):
    v = B - A
    w = seg.p2 - seg.p1
    lv = np.linalg.norm(v, axis=1)
    cos = np.clip(v @ w / (lv * np.linalg.norm(w)), -1.0, 1.0)
    alpha = np.degrees(np.arccos(cos))
    if fold:
        alpha = np.minimum(alpha, 180.0 - alpha)
    d1 = np.linalg.norm(seg.p1 - A, axis=1) + np.linalg.norm(seg.p1 - B, axis=1) - lv
    d2 = np.linalg.norm(seg.p2 - A, axis=1) + np.linalg.norm(seg.p2 - B, axis=1) - lv
    d = np.maximum(np.minimum(d1, d2), 0.0)
    hits = np.flatnonzero((alpha < lambda_alpha) & (d < lambda_d))
    return int(hits[0]) if len(hits) else None


def cluster_incremental(segments, lambda_alpha, lambda_d, lambda_C, fold=True, ids=None, keep_all=False):
    """Cluster segments in arrival order, refitting the touched cluster after every assignment.

    Clusters with fewer than ``lambda_C`` members are dropped unless ``keep_all``.
    """
    clusters: List[Cluster] = []
    cap = 64
    A = np.empty((cap, 3))
    B = np.empty((cap, 3))
    for n, seg in enumerate(segments):
        seg_id = n if ids is None else ids[n]
        M = len(clusters)
        k = _first_match(A[:M], B[:M], seg, lambda_alpha, lambda_d, fold) if M else None
        if k is None:
            c = Cluster(seg)
            c.add(seg_id, seg)
            clusters.append(c)
            if M == cap:
                cap *= 2
                A = np.resize(A, (cap, 3))
                B = np.resize(B, (cap, 3))
            k = M
        else:
            c = clusters[k]
            c.add(seg_id, seg)
            c.representative = refit_cluster(c)
        A[k] = c.representative.p1
        B[k] = c.representative.p2
    if keep_all:
        return clusters
    return [c for c in clusters if c.size >= lambda_C]

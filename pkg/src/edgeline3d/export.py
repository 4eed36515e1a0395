"""Segment and cluster serialization: CSV (lossless), OBJ polylines, PLY vertex+edge."""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import List, NamedTuple

from .clustering import Cluster
from .errors import InputError
from .types import LineSegment3D

SEGMENT_HEADER = ["kf_id", "method", "x1", "y1", "z1", "x2", "y2", "z2"]
CLUSTER_HEADER = ["cluster_id", "x1", "y1", "z1", "x2", "y2", "z2", "member_count", "member_ids"]


class SegmentRecord(NamedTuple):
    kf_id: int
    method: str
    segment: LineSegment3D


def _num(v):
    # repr round-trips doubles exactly
    return repr(float(v))


def _as_segments(items):
    return [it.representative if isinstance(it, Cluster) else it for it in items]


def _write_text(path, text):
    path = Path(path)
    try:
        path.write_text(text, encoding="ascii", newline="\n")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from exc
    return path


def segments_csv_text(segments, method) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SEGMENT_HEADER)
    for s in _as_segments(segments):
        w.writerow([s.keyframe_id, method] + [_num(v) for v in (*s.p1, *s.p2)])
    return buf.getvalue()


def write_segments_csv(path, segments, method="edge_aided"):
    return _write_text(path, segments_csv_text(segments, method))


def read_segments_csv(path) -> List[SegmentRecord]:
    """Parse a segment CSV; malformed rows raise InputError naming the row number."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != SEGMENT_HEADER:
        raise InputError(f"{path}: row 1: expected header {','.join(SEGMENT_HEADER)}")
    out = []
    for rowno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(SEGMENT_HEADER):
            raise InputError(f"{path}: row {rowno}: expected {len(SEGMENT_HEADER)} fields, got {len(row)}")
        try:
            kf = int(row[0])
            v = [float(x) for x in row[2:]]
            seg = LineSegment3D(v[:3], v[3:], "world", kf)
        except ValueError as exc:
            raise InputError(f"{path}: row {rowno}: {exc}") from exc
        out.append(SegmentRecord(kf, row[1], seg))
    return out


def clusters_csv_text(clusters) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CLUSTER_HEADER)
    for k, c in enumerate(clusters):
        r = c.representative
        w.writerow([k] + [_num(v) for v in (*r.p1, *r.p2)] + [c.size, ";".join(str(m) for m in c.members)])
    return buf.getvalue()


def write_clusters_csv(path, clusters):
    return _write_text(path, clusters_csv_text(clusters))


def read_clusters_csv(path) -> List[Cluster]:
    path = Path(path)
    try:
        rows = list(csv.reader(io.StringIO(path.read_text())))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0] != CLUSTER_HEADER:
        raise InputError(f"{path}: row 1: expected header {','.join(CLUSTER_HEADER)}")
    out = []
    for rowno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            v = [float(x) for x in row[1:7]]
            members = [int(m) for m in row[8].split(";") if m]
            if len(members) != int(row[7]):
                raise ValueError("member_count does not match member_ids")
            rep = LineSegment3D(v[:3], v[3:], "world")
        except (ValueError, IndexError) as exc:
            raise InputError(f"{path}: row {rowno}: {exc}") from exc
        out.append(Cluster(rep, members, []))
    return out


def obj_text(segments) -> str:
    segs = _as_segments(segments)
    lines = ["# line segments"]
    for s in segs:
        lines.append("v " + " ".join(_num(v) for v in s.p1))
        lines.append("v " + " ".join(_num(v) for v in s.p2))
    for k in range(len(segs)):
        lines.append(f"l {2 * k + 1} {2 * k + 2}")
    return "\n".join(lines) + "\n"


def ply_text(segments) -> str:
    segs = _as_segments(segments)
    lines = [
        "ply", "format ascii 1.0",
        f"element vertex {2 * len(segs)}",
        "property double x", "property double y", "property double z",
        f"element edge {len(segs)}",
        "property int vertex1", "property int vertex2",
        "end_header",
    ]
    for s in segs:
        lines.append(" ".join(_num(v) for v in s.p1))
        lines.append(" ".join(_num(v) for v in s.p2))
    for k in range(len(segs)):
        lines.append(f"{2 * k} {2 * k + 1}")
    return "\n".join(lines) + "\n"


EXPORT_FORMATS = ("obj", "ply", "csv")


def export_segments(items, path, fmt="obj", method="edge_aided"):
    """Write segments or cluster representatives in one of obj / ply / csv."""
    if fmt == "obj":
        text = obj_text(items)
    elif fmt == "ply":
        text = ply_text(items)
    elif fmt == "csv":
        text = segments_csv_text(items, method)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return _write_text(path, text)

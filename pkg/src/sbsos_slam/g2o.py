"""g2o text dialect for planar pose graphs with point landmarks.

Records::

    VERTEX_SE2 id x y theta
    VERTEX_XY id x y
    EDGE_SE2 i j dx dy dtheta i11 i12 i13 i22 i23 i33
    EDGE_SE2_XY i l dx dy i11 i12 i22

Pose and landmark ids share one namespace.  Dense indices follow ascending
id; the original ids are kept in ``pose_ids`` / ``landmark_ids``.  Only the
diagonal of the information matrix is used (``w_x2 = i11``, ``w_y2 = i22``,
``w_rot2 = i33``); nonzero off-diagonals are dropped with a warning.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .factor_graph import Assignment, FactorGraph, LandmarkFactor, RelPoseFactor

log = logging.getLogger(__name__)

SKIPPED_3D = ("VERTEX_SE3", "EDGE_SE3", "VERTEX_TRACKXYZ", "EDGE_SE3_TRACKXYZ", "PARAMS_SE3OFFSET")


class G2OError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class G2OData:
    graph: FactorGraph
    initial: Assignment | None = None


def fmt(v: float) -> str:
    """17 significant digits: enough for an exact float round trip."""
    s = "%.17g" % v
    return "0" if s == "-0" else s


def _floats(tok, lineno, count, what):
    if len(tok) != count:
        raise G2OError(f"{what} expects {count} fields, got {len(tok)}", lineno)
    out = []
    for t in tok:
        try:
            v = float(t)
        except ValueError:
            raise G2OError(f"{what}: cannot read number {t!r}", lineno) from None
        if not math.isfinite(v):
            raise G2OError(f"{what}: non-finite value {t!r}", lineno)
        out.append(v)
    return out


def _int(t, lineno, what):
    try:
        return int(t)
    except ValueError:
        raise G2OError(f"{what}: cannot read id {t!r}", lineno) from None


def parse_g2o(stream: TextIO | Iterable[str]) -> G2OData:
    pose_vertex: dict[int, tuple[float, float, float]] = {}
    land_vertex: dict[int, tuple[float, float]] = {}
    pose_edges = []
    land_edges = []
    pose_ids: set[int] = set()
    land_ids: set[int] = set()
    for lineno, raw in enumerate(stream, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *tok = line.split()
        if tag == "VERTEX_SE2":
            if len(tok) != 4:
                raise G2OError(f"VERTEX_SE2 expects 4 fields, got {len(tok)}", lineno)
            vid = _int(tok[0], lineno, tag)
            pose_vertex[vid] = tuple(_floats(tok[1:], lineno, 3, tag))
            pose_ids.add(vid)
        elif tag == "VERTEX_XY":
            if len(tok) != 3:
                raise G2OError(f"VERTEX_XY expects 3 fields, got {len(tok)}", lineno)
            vid = _int(tok[0], lineno, tag)
            land_vertex[vid] = tuple(_floats(tok[1:], lineno, 2, tag))
            land_ids.add(vid)
        elif tag == "EDGE_SE2":
            if len(tok) != 11:
                raise G2OError(f"EDGE_SE2 expects 11 fields, got {len(tok)}", lineno)
            i, j = _int(tok[0], lineno, tag), _int(tok[1], lineno, tag)
            dx, dy, dth, i11, i12, i13, i22, i23, i33 = _floats(tok[2:], lineno, 9, tag)
            if i12 or i13 or i23:
                log.warning("line %d: off-diagonal information dropped", lineno)
            pose_edges.append((lineno, i, j, dth, dx, dy, i33, i11, i22))
            pose_ids.update((i, j))
        elif tag == "EDGE_SE2_XY":
            if len(tok) != 7:
                raise G2OError(f"EDGE_SE2_XY expects 7 fields, got {len(tok)}", lineno)
            i, ell = _int(tok[0], lineno, tag), _int(tok[1], lineno, tag)
            dx, dy, i11, i12, i22 = _floats(tok[2:], lineno, 5, tag)
            if i12:
                log.warning("line %d: off-diagonal information dropped", lineno)
            land_edges.append((lineno, i, ell, dx, dy, i11, i22))
            pose_ids.add(i)
            land_ids.add(ell)
        else:
            if tag.startswith(SKIPPED_3D):
                log.warning("line %d: 3D record %s skipped", lineno, tag)
            else:
                log.warning("line %d: unknown record %s skipped", lineno, tag)
    if not pose_edges and not land_edges:
        raise G2OError("no factors")
    both = pose_ids & land_ids
    if both:
        raise G2OError(f"ids used both as pose and landmark: {sorted(both)[:5]}")
    pids = sorted(pose_ids)
    lids = sorted(land_ids)
    pmap = {v: k for k, v in enumerate(pids)}
    lmap = {v: k for k, v in enumerate(lids)}
    edges = []
    for lineno, i, j, dth, dx, dy, wr, wx, wy in pose_edges:
        try:
            edges.append(RelPoseFactor(pmap[i], pmap[j], dth, dx, dy, wr, wx, wy))
        except ValueError as e:
            raise G2OError(str(e), lineno) from None
    lands = []
    for lineno, i, ell, dx, dy, wx, wy in land_edges:
        try:
            lands.append(LandmarkFactor(pmap[i], lmap[ell], dx, dy, wx, wy))
        except ValueError as e:
            raise G2OError(str(e), lineno) from None
    try:
        graph = FactorGraph(len(pids), len(lids), edges, lands, tuple(pids), tuple(lids))
    except ValueError as e:
        raise G2OError(str(e)) from None
    initial = None
    if pose_vertex or land_vertex:
        initial = _vertices_to_assignment(graph, pose_vertex, land_vertex)
    return G2OData(graph, initial)


def _vertices_to_assignment(graph: FactorGraph, pose_vertex, land_vertex) -> Assignment:
    poses = np.tile([1.0, 0.0, 0.0, 0.0], (graph.n, 1))
    lm = np.zeros((graph.w, 2))
    missing = 0
    for k, vid in enumerate(graph.pose_ids):
        if vid in pose_vertex:
            x, y, th = pose_vertex[vid]
            poses[k] = (math.cos(th), math.sin(th), x, y)
        else:
            missing += 1
    for k, vid in enumerate(graph.landmark_ids):
        if vid in land_vertex:
            lm[k] = land_vertex[vid]
        else:
            missing += 1
    if missing:
        log.warning("%d variables have no vertex record; set to identity/zero", missing)
    return Assignment(poses, lm)


def read_g2o(path) -> G2OData:
    with open(path, encoding="utf-8") as fh:
        return parse_g2o(fh)


def read_estimate(path, graph: FactorGraph) -> Assignment:
    """Vertex records of ``path`` as an assignment for ``graph`` (ids matched by value)."""
    pose_vertex, land_vertex = {}, {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tag, *tok = line.split()
            if tag == "VERTEX_SE2":
                if len(tok) != 4:
                    raise G2OError("VERTEX_SE2 expects 4 fields", lineno)
                pose_vertex[_int(tok[0], lineno, tag)] = tuple(_floats(tok[1:], lineno, 3, tag))
            elif tag == "VERTEX_XY":
                if len(tok) != 3:
                    raise G2OError("VERTEX_XY expects 3 fields", lineno)
                land_vertex[_int(tok[0], lineno, tag)] = tuple(_floats(tok[1:], lineno, 2, tag))
    if not pose_vertex and not land_vertex:
        raise G2OError("no vertex records in estimate")
    return _vertices_to_assignment(graph, pose_vertex, land_vertex)


def vertex_lines(graph: FactorGraph, a: Assignment) -> list[str]:
    recs = []
    for k, vid in enumerate(graph.pose_ids):
        c, s, x, y = a.poses[k]
        recs.append((vid, f"VERTEX_SE2 {vid} {fmt(x)} {fmt(y)} {fmt(math.atan2(s, c))}"))
    for k, vid in enumerate(graph.landmark_ids):
        lx, ly = a.landmarks[k]
        recs.append((vid, f"VERTEX_XY {vid} {fmt(lx)} {fmt(ly)}"))
    return [r for _, r in sorted(recs)]


def write_g2o(graph: FactorGraph, assignment: Assignment | None = None) -> str:
    """Vertices ascending by id (when ``assignment`` is given), then edges in order."""
    lines = vertex_lines(graph, assignment) if assignment is not None else []
    P, L = graph.pose_ids, graph.landmark_ids
    for f in graph.edges:
        lines.append(
            f"EDGE_SE2 {P[f.i]} {P[f.j]} {fmt(f.x)} {fmt(f.y)} {fmt(f.theta)} "
            f"{fmt(f.w_x2)} 0 0 {fmt(f.w_y2)} 0 {fmt(f.w_rot2)}"
        )
    for f in graph.land_edges:
        lines.append(f"EDGE_SE2_XY {P[f.i]} {L[f.ell]} {fmt(f.x)} {fmt(f.y)} {fmt(f.w_x2)} 0 {fmt(f.w_y2)}")
    return "".join(line + "\n" for line in lines)


def write_estimate(graph: FactorGraph, a: Assignment) -> str:
    return "".join(line + "\n" for line in vertex_lines(graph, a))

"""Field sources: a point or a polyline lying on the patch."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AnchorOffMesh, ConfigError, DisconnectedPolyline
from .mesh import ValidatedPatch

_EPS = 1e-12


@dataclass(frozen=True)
class Anchor:
    """A point on the mesh: a vertex, or barycentric coordinates in a triangle."""

    vertex: int | None = None
    triangle: int | None = None
    bary: tuple = ()

    def position(self, patch):
        if self.vertex is not None:
            return patch.vertices[self.vertex].copy()
        w = np.asarray(self.bary, dtype=float)
        return w @ patch.vertices[patch.triangles[self.triangle]]

    def to_json(self):
        if self.vertex is not None:
            return self.vertex
        return [self.triangle, *self.bary]


@dataclass(frozen=True)
class SourceSpec:
    kind: str  # "point" | "curve"
    anchors: tuple

    @classmethod
    def point(cls, vertex):
        return cls("point", (Anchor(vertex=int(vertex)),))

    @classmethod
    def curve(cls, vertices):
        return cls("curve", tuple(Anchor(vertex=int(v)) for v in vertices))

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind")
        if kind not in ("point", "curve"):
            raise ConfigError(f"source kind must be 'point' or 'curve', got {kind!r}")
        anchors = [Anchor(vertex=int(v)) for v in d.get("vertices", [])]
        for p in d.get("points", []):
            if len(p) != 4:
                raise ConfigError("surface points are [triangle, b0, b1, b2]")
            anchors.append(Anchor(triangle=int(p[0]), bary=tuple(float(x) for x in p[1:])))
        if not anchors:
            raise ConfigError("source has no anchors")
        if kind == "point" and len(anchors) != 1:
            raise ConfigError("a point source takes exactly one anchor")
        if kind == "curve" and len(anchors) < 2:
            raise ConfigError("a curve source needs at least two anchors")
        return cls(kind, tuple(anchors))

    def to_dict(self):
        verts = [a.vertex for a in self.anchors if a.vertex is not None]
        pts = [[a.triangle, *a.bary] for a in self.anchors if a.vertex is None]
        d = {"kind": self.kind, "vertices": verts}
        if pts:
            d["points"] = pts
        return d

    @classmethod
    def parse(cls, text):
        """CLI shorthand: ``point:7``, ``curve:0,5,9``, ``@file.json`` or inline JSON."""
        text = text.strip()
        if text.startswith("@"):
            return cls.from_dict(json.loads(Path(text[1:]).read_text(encoding="utf-8")))
        if text.startswith("{"):
            return cls.from_dict(json.loads(text))
        kind, _, rest = text.partition(":")
        try:
            verts = [int(x) for x in rest.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"cannot parse source {text!r}") from None
        return cls.from_dict({"kind": kind, "vertices": verts})


@dataclass(frozen=True)
class SubSegment:
    """Piece of the source polyline inside one triangle.

    ``p_anchor``/``q_anchor`` mark endpoints that are true polyline corners
    (as opposed to points where the polyline merely crosses an edge).
    """

    triangle: int
    p: np.ndarray
    q: np.ndarray
    p_anchor: bool
    q_anchor: bool
    piece: int = 0  # index of the anchor pair this piece belongs to


@dataclass(frozen=True)
class ResolvedSource:
    kind: str
    anchors: tuple
    point: np.ndarray | None = None
    point_triangle: int | None = None
    point_vertex: int | None = None
    segments: tuple = field(default=())

    @property
    def n_segments(self):
        return len(self.segments)

    def length(self):
        return float(sum(np.linalg.norm(s.q - s.p) for s in self.segments))


def _check_anchor(patch, a):
    if a.vertex is not None:
        if not 0 <= a.vertex < patch.n_vertices:
            raise AnchorOffMesh(f"vertex {a.vertex} not in mesh ({patch.n_vertices} vertices)")
        return
    if a.triangle is None or not 0 <= a.triangle < patch.n_triangles:
        raise AnchorOffMesh(f"triangle {a.triangle} not in mesh")
    w = np.asarray(a.bary, dtype=float)
    if w.shape != (3,) or np.any(w < -1e-9) or abs(w.sum() - 1.0) > 1e-6:
        raise AnchorOffMesh(f"barycentric coordinates {a.bary} do not describe a point in the triangle")


def resolve_source(patch: ValidatedPatch, source: SourceSpec) -> ResolvedSource:
    for a in source.anchors:
        _check_anchor(patch, a)
    if source.kind == "point":
        a = source.anchors[0]
        tri = a.triangle if a.vertex is None else patch.vertex_triangles[a.vertex][0]
        return ResolvedSource("point", source.anchors, point=a.position(patch),
                              point_triangle=tri, point_vertex=a.vertex)

    for a, b in zip(source.anchors, source.anchors[1:]):
        if a == b:
            raise DisconnectedPolyline("repeated consecutive anchor")
    segments = []
    for i, (a, b) in enumerate(zip(source.anchors, source.anchors[1:])):
        piece = _trace(patch, a, b)
        # interior trace points are edge crossings, only the ends are corners
        for k, (t, p, q) in enumerate(piece):
            segments.append(SubSegment(t, p, q, k == 0, k == len(piece) - 1, i))
    _check_simple(segments)
    return ResolvedSource("curve", source.anchors, segments=tuple(segments))


def _check_simple(segments):
    """Reject polylines that pass through the same point twice."""
    pts = [segments[0].p] + [s.q for s in segments]
    for i in range(len(pts)):
        for j in range(i + 2, len(pts)):
            if i == 0 and j == len(pts) - 1:
                continue
            if np.linalg.norm(pts[i] - pts[j]) < 1e-9:
                raise DisconnectedPolyline("source polyline intersects itself")


def _incident(patch, anchor):
    if anchor.vertex is not None:
        return set(patch.vertex_triangles[anchor.vertex])
    return {anchor.triangle}


def _trace(patch, a: Anchor, b: Anchor):
    """Walk from anchor ``a`` to ``b`` along the cut of the mesh by the plane
    through both points containing the mean surface normal.

    Returns a list of ``(triangle, p, q)`` pieces.
    """
    P, Q = a.position(patch), b.position(patch)
    ta, tb = _incident(patch, a), _incident(patch, b)
    common = sorted(ta & tb)
    if common:
        return [(common[0], P, Q)]

    normals = patch.face_normals
    n = normals[sorted(ta)].sum(axis=0) + normals[sorted(tb)].sum(axis=0)
    d = Q - P
    m = np.cross(d, n)
    if np.linalg.norm(m) < _EPS:
        raise DisconnectedPolyline("anchors are stacked along the surface normal")
    m /= np.linalg.norm(m)
    V = patch.vertices
    T = patch.triangles
    scale = max(np.ptp(V, axis=0).max(), 1.0)
    tiny = 1e-9 * scale

    def f(vi):
        val = float(m @ (V[vi] - P))
        return tiny if abs(val) < tiny else val

    def crossing(u, v):
        fu, fv = f(u), f(v)
        if (fu > 0) == (fv > 0):
            return None
        s = fu / (fu - fv)
        return V[u] + s * (V[v] - V[u])

    # first step: leave the start triangle(s) through an edge crossed by the plane
    best = None
    for t in sorted(ta):
        tri = T[t].tolist()
        for k in range(3):
            u, v = tri[k], tri[(k + 1) % 3]
            if a.vertex is not None and a.vertex in (u, v):
                continue
            X = crossing(u, v)
            if X is None:
                continue
            score = float((X - P) @ d)
            if score > 0 and (best is None or score > best[0] + 1e-15):
                best = (score, t, (min(u, v), max(u, v)), X)
    if best is None:
        raise DisconnectedPolyline("cannot leave the start anchor towards the next one")
    _, t, edge, X = best
    pieces = [(t, P, X)]
    cur_t, cur_edge, cur_pt = t, edge, X
    max_steps = 4 * patch.n_triangles + 8
    for _ in range(max_steps):
        nbrs = [x for x in patch.edge_triangles[cur_edge] if x != cur_t]
        if not nbrs:
            raise DisconnectedPolyline("source polyline runs off the mesh boundary")
        nt = nbrs[0]
        if nt in tb:
            pieces.append((nt, cur_pt, Q))
            return pieces
        tri = T[nt].tolist()
        nxt = None
        for k in range(3):
            u, v = tri[k], tri[(k + 1) % 3]
            e = (min(u, v), max(u, v))
            if e == cur_edge:
                continue
            X = crossing(u, v)
            if X is not None:
                nxt = (e, X)
                break
        if nxt is None:
            raise DisconnectedPolyline("source trace lost the cutting plane")
        pieces.append((nt, cur_pt, nxt[1]))
        cur_t, cur_edge, cur_pt = nt, nxt[0], nxt[1]
    raise DisconnectedPolyline("source trace did not reach the next anchor")

"""Geodesic distance from a point or polyline source on a triangle mesh.

Label-correcting front propagation. Each vertex is reached either along an
edge or through a triangle whose other two vertices are already labelled:

* for a straight source piece the front is treated as planar (exact for
  distance to a segment on a flat mesh);
* for a source point the virtual source is rebuilt from the two distances by
  circle intersection in the unfolded triangle (exact on a flat mesh).

Vertices are re-queued whenever their distance drops, so the result is the
fixed point of all edge and triangle updates. Every edge therefore satisfies
``|d(u) - d(v)| <= |uv|``.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstantField
from .mesh import ValidatedPatch
from .source import ResolvedSource

@dataclass(frozen=True, eq=False)
class GeodesicField:
    patch: ValidatedPatch
    distances: np.ndarray
    source: ResolvedSource
    side: np.ndarray  # +1 / -1 per vertex; both present when the source splits the patch

    @property
    def max_distance(self):
        d = self.distances
        return float(d[np.isfinite(d)].max())

    @property
    def two_sided(self):
        far = np.isfinite(self.distances) & (self.distances > 1e-9)
        return bool(np.any(self.side[far] > 0) and np.any(self.side[far] < 0))

    @property
    def signed(self):
        """Distance with the side sign applied (equals ``distances`` if one-sided)."""
        return self.side * self.distances

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["vertex_index", "distance"])
            for i, d in enumerate(self.distances.tolist()):
                w.writerow([i, repr(d)])


def _closest_on_segment(x, p, q):
    d = q - p
    dd = float(d @ d)
    t = 0.0 if dd == 0.0 else float(np.clip((x - p) @ d / dd, 0.0, 1.0))
    return t, p + t * d


class _Seeds:
    """Initial labels for one propagation run."""

    def __init__(self, n):
        self.dist = [math.inf] * n
        self.label = [-1] * n
        self.foot = [None] * n
        self.side = [0] * n

    def offer(self, v, d, label, foot=None, side=1):
        if d < self.dist[v] - 1e-15:
            self.dist[v] = d
            self.label[v] = label
            self.foot[v] = foot
            self.side[v] = side


def _corner_seeds(patch, anchors):
    s = _Seeds(patch.n_vertices)
    V = patch.vertices
    for k, a in enumerate(anchors):
        if a.vertex is not None:
            s.offer(a.vertex, 0.0, k)
            continue
        P = a.position(patch)
        for v in patch.triangles[a.triangle].tolist():
            s.offer(v, float(np.linalg.norm(V[v] - P)), k)
    return s


def _piece_seeds(patch, segments):
    """Seeds around the straight pieces; ``foot`` is the arclength of the
    foot point along its piece, negative or beyond the piece length when the
    closest point lies on the extension of the piece.

    Each seed vertex is measured against every sub-segment in the two-ring of
    triangles around it, so that crossing a short sub-segment does not clamp.
    Unseeded vertices start with side 0 (unknown).
    """
    s = _Seeds(patch.n_vertices)
    V = patch.vertices
    T = patch.triangles
    vtri = patch.vertex_triangles
    normals = patch.face_normals
    by_triangle = {}
    starts, lengths = [], {}
    for i, seg in enumerate(segments):
        by_triangle.setdefault(seg.triangle, []).append(i)
        starts.append(lengths.get(seg.piece, 0.0))
        lengths[seg.piece] = starts[-1] + float(np.linalg.norm(seg.q - seg.p))
    # vertices of the source triangles plus their neighbours, so that a source
    # running along mesh edges is seeded on both sides
    core = {v for seg in segments for v in T[seg.triangle].tolist()}
    seed_vertices = sorted({w for v in core for f in vtri[v] for w in T[f].tolist()})
    for v in seed_vertices:
        ring = {f for u in T[list(vtri[v])].ravel().tolist() for f in vtri[u]}
        for i in sorted(k for f in ring for k in by_triangle.get(f, ())):
            seg = segments[i]
            axis = seg.q - seg.p
            seg_len = float(np.linalg.norm(axis))
            t = float((V[v] - seg.p) @ axis) / (seg_len * seg_len)
            # past a true end the piece is extended as a straight line
            lo = -math.inf if seg.p_anchor else 0.0
            hi = math.inf if seg.q_anchor else 1.0
            t = min(max(t, lo), hi)
            c = seg.p + t * axis
            d = float(np.linalg.norm(V[v] - c))
            # vertices on the source get side 0, compatible with both sides
            sd = float(normals[seg.triangle] @ np.cross(axis, V[v] - c))
            sd = 0 if d <= 1e-12 * seg_len else (1 if sd > 0 else -1)
            s.offer(v, d, seg.piece, starts[i] + t * seg_len, sd)
    return s, lengths


def _propagate(patch, seeds, piece_len=None, ext=0.0):
    """Front propagation from ``seeds``.

    With ``piece_len`` the run models distance to straight pieces extended by
    ``ext`` at both ends (planar updates with a tracked foot point), otherwise
    distance to
    labelled points (circle updates). Triangle updates only combine two
    vertices with the same label.
    """
    T = patch.triangles.tolist()
    p = patch.vertices[patch.triangles]
    L01 = np.linalg.norm(p[:, 1] - p[:, 0], axis=1).tolist()
    L12 = np.linalg.norm(p[:, 2] - p[:, 1], axis=1).tolist()
    L20 = np.linalg.norm(p[:, 0] - p[:, 2], axis=1).tolist()
    vtri = patch.vertex_triangles
    dist, label, foot, side = seeds.dist, seeds.label, seeds.foot, seeds.side
    planar = piece_len is not None

    heap = [(d, v) for v, d in enumerate(dist) if d < math.inf]
    heapq.heapify(heap)

    def push(c, val, lb, ft, sd):
        if val < dist[c] - 1e-12 * (1.0 + val):
            dist[c] = val
            label[c] = lb
            foot[c] = ft
            side[c] = sd
            heapq.heappush(heap, (val, c))

    def tri_update(a, b, c, lab, lac, lbc):
        if label[a] != label[b] or lab <= 0.0:
            return
        da, db = dist[a], dist[b]
        if side[a] * side[b] < 0:
            # unsigned distance is not smooth across the source
            return
        cx = (lac * lac - lbc * lbc + lab * lab) / (2.0 * lab)
        cy2 = lac * lac - cx * cx
        if cy2 <= 0.0:
            return
        cy = math.sqrt(cy2)
        sd = side[a] or side[b]
        if planar:
            fa, fb = foot[a], foot[b]
            if fa is None or fb is None:
                return
            gx = (db - da) / lab
            if abs(gx) >= 1.0:
                return
            gy = math.sqrt(1.0 - gx * gx)
            x0 = cx - gx * cy / gy
            if not -1e-12 * lab <= x0 <= lab * (1.0 + 1e-12):
                return
            fc = fa + (x0 / lab) * (fb - fa)
            if -ext <= fc <= piece_len[label[a]] + ext:
                push(c, da + gx * cx + gy * cy, label[a], fc, sd)
            return
        sx = (da * da - db * db + lab * lab) / (2.0 * lab)
        h2 = da * da - sx * sx
        if h2 < 0.0:
            return
        sy = -math.sqrt(h2)
        t = -sy / (cy - sy)
        x0 = sx + t * (cx - sx)
        if -1e-12 * lab <= x0 <= lab * (1.0 + 1e-12):
            push(c, math.hypot(cx - sx, cy - sy), label[a], None, sd)

    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for f in vtri[v]:
            a0, a1, a2 = T[f]
            # rotate so v is the first corner: (v, o1, o2) with |v o1|, |o1 o2|, |o2 v|
            if v == a0:
                o1, o2, lv1, l12, l2v = a1, a2, L01[f], L12[f], L20[f]
            elif v == a1:
                o1, o2, lv1, l12, l2v = a2, a0, L12[f], L20[f], L01[f]
            else:
                o1, o2, lv1, l12, l2v = a0, a1, L20[f], L01[f], L12[f]
            push(o1, d + lv1, label[v], foot[v], side[v])
            push(o2, d + l2v, label[v], foot[v], side[v])
            if dist[o2] < math.inf:
                tri_update(v, o2, o1, l2v, lv1, l12)
            if dist[o1] < math.inf:
                tri_update(v, o1, o2, lv1, l2v, l12)
    return np.array(dist), np.array(side, dtype=np.int8), foot


_PIECE_GROUPS = 4


def compute_field(patch: ValidatedPatch, source: ResolvedSource) -> GeodesicField:
    """Per-vertex geodesic distance to ``source``.

    A curve source is the minimum over runs for its straight pieces (split
    into a few groups so that neighbouring pieces never share a run) and one
    run for its corner points. A final edge relaxation makes the result
    1-Lipschitz along every edge.
    """
    V = patch.vertices
    if source.kind == "point":
        seeds = _Seeds(patch.n_vertices)
        if source.point_vertex is not None:
            seeds.offer(source.point_vertex, 0.0, 0)
        else:
            for v in patch.triangles[source.point_triangle].tolist():
                seeds.offer(v, float(np.linalg.norm(V[v] - source.point)), 0)
        dist, side, _ = _propagate(patch, seeds)
        return GeodesicField(patch, dist, source, side)

    edge_len = np.linalg.norm(V[patch.edges[:, 0]] - V[patch.edges[:, 1]], axis=1)
    n_pieces = len(source.anchors) - 1
    piece_len = np.zeros(n_pieces)
    for sg in source.segments:
        piece_len[sg.piece] += np.linalg.norm(sg.q - sg.p)
    # extensions of two pieces in the same run must not meet
    gap = (_PIECE_GROUPS - 1) * float(piece_len.min())
    ext = min(3.0 * float(np.median(edge_len)), 0.45 * gap)
    best = np.full(patch.n_vertices, math.inf)
    best_any = np.full(patch.n_vertices, math.inf)
    side = np.zeros(patch.n_vertices, dtype=np.int8)
    side_any = np.zeros(patch.n_vertices, dtype=np.int8)
    for g in range(min(n_pieces, _PIECE_GROUPS)):
        segs = [sg for sg in source.segments if sg.piece % _PIECE_GROUPS == g]
        seeds, lengths = _piece_seeds(patch, segs)
        d, sd, foot = _propagate(patch, seeds, lengths, ext)
        # line values only count where the foot point is on the piece itself
        tol = 1e-9 * max(lengths.values())
        on = np.array([f is not None and -tol <= f <= lengths[lb] + tol
                       for f, lb in zip(foot, seeds.label)], dtype=bool)
        upd = on & (d < best)
        best[upd], side[upd] = d[upd], sd[upd]
        upd = d < best_any
        best_any[upd], side_any[upd] = d[upd], sd[upd]
    # vertices never reached through a piece take the side of the nearest extension
    unset = side == 0
    side[unset] = side_any[unset]
    d_corner, _, _ = _propagate(patch, _corner_seeds(patch, source.anchors))
    dist = np.minimum(best, d_corner)
    _fill_sides(patch, dist, side)
    dist = _edge_closure(patch, dist, side, edge_len)
    return GeodesicField(patch, dist, source, side)


def _fill_sides(patch, dist, side):
    """Give off-source vertices without a side the side of their nearest
    labelled neighbour; a field lying on one side only becomes all +1."""
    nbrs = [[] for _ in range(patch.n_vertices)]
    for u, v in patch.edges.tolist():
        nbrs[u].append(v)
        nbrs[v].append(u)
    tol = 1e-9 * max(1.0, float(np.max(dist)))
    order = np.argsort(dist, kind="stable").tolist()
    changed = True
    while changed:
        changed = False
        for v in order:
            if side[v] != 0 or dist[v] <= tol:
                continue
            cand = [(dist[u], u) for u in nbrs[v] if side[u] != 0]
            if cand:
                side[v] = side[min(cand)[1]]
                changed = True
    far = dist > tol
    if not np.any(side[far] > 0):
        side *= -1
    side[side == 0] = 1


def _edge_closure(patch, dist, side, edge_len):
    """Lower ``dist`` until ``d(u) <= d(v) + |uv|`` holds on every edge."""
    nbrs = [[] for _ in range(patch.n_vertices)]
    for (u, v), ln in zip(patch.edges.tolist(), edge_len.tolist()):
        nbrs[u].append((v, ln))
        nbrs[v].append((u, ln))
    d = dist.tolist()
    heap = [(x, v) for v, x in enumerate(d)]
    heapq.heapify(heap)
    while heap:
        x, v = heapq.heappop(heap)
        if x > d[v]:
            continue
        for u, ln in nbrs[v]:
            if x + ln < d[u] - 1e-12 * (1.0 + d[u]):
                d[u] = x + ln
                side[u] = side[v]
                heapq.heappush(heap, (d[u], u))
    return np.array(d)


def field_gradient_direction(field: GeodesicField, triangle: int, values=None) -> np.ndarray:
    """Unit in-plane direction of steepest ascent of the interpolated field."""
    g = triangle_gradient(field.patch, field.distances if values is None else values, triangle)
    norm = np.linalg.norm(g)
    vals = (field.distances if values is None else values)[field.patch.triangles[triangle]]
    if norm == 0.0 or np.ptp(vals) <= 1e-12 * max(1.0, float(np.abs(vals).max())):
        raise ConstantField(f"field is constant on triangle {triangle}")
    return g / norm


def triangle_gradient(patch, values, triangle):
    i, j, k = patch.triangles[triangle]
    pi, pj, pk = patch.vertices[[i, j, k]]
    n = np.cross(pj - pi, pk - pi)
    area2 = np.linalg.norm(n)
    n = n / area2
    # gradient of the hat functions: (n x opposite edge) / (2A)
    g = (values[i] * np.cross(n, pk - pj) + values[j] * np.cross(n, pi - pk)
         + values[k] * np.cross(n, pj - pi)) / area2
    return g


def triangle_gradients(patch, values):
    """Vectorised per-triangle gradients, shape (F, 3)."""
    t = patch.triangles
    p = patch.vertices[t]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    area2 = np.linalg.norm(n, axis=1)
    n = n / area2[:, None]
    v = values[t]
    g = (v[:, 0, None] * np.cross(n, p[:, 2] - p[:, 1])
         + v[:, 1, None] * np.cross(n, p[:, 0] - p[:, 2])
         + v[:, 2, None] * np.cross(n, p[:, 1] - p[:, 0]))
    return g / area2[:, None]

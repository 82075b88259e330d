"""Level curves of a distance field and their subdivision into stitch segments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ClosedIsocurveLoop,
    ConfigError,
    CurveShorterThanStitch,
    DisconnectedIsocurve,
)
from .geodesic import GeodesicField, triangle_gradients

LEVEL_NUDGE = 1e-9  # mm, vertices sitting exactly on a level move up by this


@dataclass(frozen=True)
class StitchParams:
    s_w: float = 2.0
    s_h: float = 2.0
    max_warp_threads: int = 100

    def __post_init__(self):
        if not (self.s_w > 0 and self.s_h > 0):
            raise ConfigError("stitch width and height must be positive")
        if self.max_warp_threads < 2:
            raise ConfigError("max_warp_threads must be at least 2")

    @property
    def max_fabric_width(self):
        return (self.max_warp_threads - 1) * self.s_w


@dataclass(frozen=True, eq=False)
class Isocurve:
    """Open polyline at ``level``; points are edge crossings in traversal order."""

    k: int
    level: float
    points: np.ndarray
    edges: tuple  # crossed mesh edge (u, v) per point, u on the low side

    @property
    def length(self):
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())


@dataclass(frozen=True, eq=False)
class IsocurveSet:
    curves: tuple
    s_w: float
    flipped: bool = False

    @property
    def lengths(self):
        return [c.length for c in self.curves]

    def __len__(self):
        return len(self.curves)


def level_indices(field: GeodesicField, s_w: float):
    """Integer multiples k with k*s_w strictly inside the field's range.

    Two-sided fields use the signed distance and include the source (k = 0).
    """
    u = field.signed if field.two_sided else field.distances
    u = u[np.isfinite(u)]  # vertices outside every triangle are never reached
    hi = int(np.ceil(u.max() / s_w)) - 1
    lo = -(int(np.ceil(-u.min() / s_w)) - 1) if field.two_sided else 1
    return [k for k in range(lo, hi + 1) if k * s_w < u.max() and (k > 0 or field.two_sided)]


def extract_isocurves(patch, field: GeodesicField, params: StitchParams, flip=False) -> IsocurveSet:
    """Curves at every level k*s_w below the maximum, each boundary to boundary.

    Traversal direction t satisfies n . (grad u x t) > 0 (reversed with ``flip``).
    """
    u = field.signed if field.two_sided else field.distances
    grads = triangle_gradients(patch, u)
    curves = [
        _trace_level(patch, u, grads, k, k * params.s_w, flip)
        for k in level_indices(field, params.s_w)
    ]
    return IsocurveSet(tuple(curves), params.s_w, flip)


def _trace_level(patch, u, grads, k, level, flip):
    f = u - level
    f = np.where(f == 0.0, LEVEL_NUDGE, f)
    pos = f > 0
    T = patch.triangles
    crossed_tris = np.flatnonzero(pos[T].any(axis=1) & ~pos[T].all(axis=1))
    # each crossed triangle links its two sign-changing edges
    links = {}
    for t in crossed_tris.tolist():
        a, b, c = T[t].tolist()
        es = [(x, y) for x, y in ((a, b), (b, c), (c, a)) if pos[x] != pos[y]]
        e0, e1 = (tuple(sorted(e)) for e in es)
        links.setdefault(e0, []).append((e1, t))
        links.setdefault(e1, []).append((e0, t))
    if not links:
        raise DisconnectedIsocurve(k, level, 0)

    seen = set()
    components = []
    # open chains start at degree-1 edges (on the boundary)
    for e in sorted(links):
        if len(links[e]) == 1 and e not in seen:
            components.append(_walk(links, e, seen))
    for e in sorted(links):
        if e not in seen:
            raise ClosedIsocurveLoop(k, level)
    if len(components) != 1:
        raise DisconnectedIsocurve(k, level, len(components))

    chain, tris = components[0]
    V = patch.vertices
    pts, oriented = [], []
    for x, y in chain:
        lo, hi = (x, y) if f[x] < f[y] else (y, x)
        s = f[lo] / (f[lo] - f[hi])
        pts.append(V[lo] + s * (V[hi] - V[lo]))
        oriented.append((lo, hi))
    pts = np.array(pts)

    # orientation from the length-weighted frame test over all pieces
    normals = patch.face_normals
    seg = np.diff(pts, axis=0)
    score = float(np.einsum("ij,ij->", normals[tris], np.cross(grads[tris], seg)))
    if (score < 0) != flip:
        pts = pts[::-1].copy()
        oriented = oriented[::-1]
    return Isocurve(k, level, pts, tuple(oriented))


def _walk(links, start, seen):
    chain, tris = [start], []
    seen.add(start)
    prev_t, cur = None, start
    while True:
        nxt = [(e, t) for e, t in links[cur] if t != prev_t]
        if not nxt:
            break
        e, t = nxt[0]
        if e in seen:
            break
        chain.append(e)
        tris.append(t)
        seen.add(e)
        prev_t, cur = t, e
    return chain, tris


# --- segment sampling -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SegmentedCurve:
    k: int
    points: np.ndarray  # n + 1 points at uniform arc length
    length: float

    @property
    def n_segments(self):
        return len(self.points) - 1

    @property
    def segment_length(self):
        return self.length / self.n_segments


@dataclass(frozen=True, eq=False)
class SegmentedCurves:
    curves: tuple
    s_w: float
    s_h: float

    @property
    def counts(self):
        return [c.n_segments for c in self.curves]

    def __len__(self):
        return len(self.curves)


def segment_count(length, s_h):
    """Whole stitches in ``length``, rounding the remainder up only past s_h/2."""
    n = int(length // s_h)
    if length - n * s_h > s_h / 2:
        n += 1
    return n


def resample(points, n):
    """``n + 1`` points at uniform arc length along a polyline."""
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, s[-1], n + 1)
    out = np.column_stack([np.interp(targets, s, points[:, d]) for d in range(points.shape[1])])
    out[0], out[-1] = points[0], points[-1]
    return out


def sample_segments(curves: IsocurveSet, params: StitchParams) -> SegmentedCurves:
    out = []
    for i, c in enumerate(curves.curves):
        L = c.length
        if L < params.s_h:
            raise CurveShorterThanStitch(i, L, params.s_h)
        out.append(SegmentedCurve(c.k, resample(c.points, segment_count(L, params.s_h)), L))
    return SegmentedCurves(tuple(out), curves.s_w, params.s_h)


def trim_short_ends(curves: IsocurveSet, s_h: float) -> IsocurveSet:
    """Drop curves shorter than one stitch from both ends of the set."""
    cs = list(curves.curves)
    while cs and cs[0].length < s_h:
        cs.pop(0)
    while cs and cs[-1].length < s_h:
        cs.pop()
    return IsocurveSet(tuple(cs), curves.s_w, curves.flipped)

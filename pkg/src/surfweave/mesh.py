"""Triangle-mesh ingest: ASCII ``v``/``f`` files, validation of disk patches."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateTriangle,
    InconsistentOrientation,
    NonDiskTopology,
    NonManifoldEdge,
    NonTriangleFace,
    ParseError,
)

AREA_EPS = 1e-9  # mm^2


@dataclass(frozen=True, eq=False)
class SurfacePatch:
    """Raw triangle mesh. Coordinates in millimetres, triangles 0-based."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def triangle_areas(self):
        p = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)


@dataclass(frozen=True, eq=False)
class ValidatedPatch(SurfacePatch):
    """A patch known to be an oriented, non-degenerate 2-manifold disk.

    Only :func:`validate_patch` should construct these.
    """

    boundary_loop: tuple = ()
    euler: int = 1

    @cached_property
    def edges(self):
        """Unique undirected edges (sorted pairs), shape (E, 2)."""
        return _unique_edges(self.triangles)[0]

    @cached_property
    def face_normals(self):
        p = self.vertices[self.triangles]
        n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return n / np.linalg.norm(n, axis=1)[:, None]

    @cached_property
    def vertex_triangles(self):
        """For each vertex, the tuple of incident triangle indices (ascending)."""
        inc = [[] for _ in range(self.n_vertices)]
        for f, tri in enumerate(self.triangles.tolist()):
            for v in tri:
                inc[v].append(f)
        return [tuple(x) for x in inc]

    @cached_property
    def edge_triangles(self):
        """Map from sorted vertex pair to the list of incident triangles."""
        out = {}
        for f, (a, b, c) in enumerate(self.triangles.tolist()):
            for u, v in ((a, b), (b, c), (c, a)):
                key = (u, v) if u < v else (v, u)
                out.setdefault(key, []).append(f)
        return out

    @cached_property
    def boundary_vertices(self):
        return frozenset(self.boundary_loop)

    @cached_property
    def boundary_edges(self):
        loop = self.boundary_loop
        n = len(loop)
        return frozenset(
            (min(loop[i], loop[(i + 1) % n]), max(loop[i], loop[(i + 1) % n])) for i in range(n)
        )

    def vertex_normals(self):
        n = np.zeros_like(self.vertices)
        p = self.vertices[self.triangles]
        fn = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        for k in range(3):
            np.add.at(n, self.triangles[:, k], fn)
        return n / np.linalg.norm(n, axis=1)[:, None]


def _unique_edges(triangles):
    directed = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]], axis=0
    )
    und = np.sort(directed, axis=1)
    edges, inverse, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    return edges, inverse.ravel(), counts, directed


# --- file I/O ---------------------------------------------------------------

def load_mesh(path) -> SurfacePatch:
    """Read an ASCII ``v x y z`` / ``f i j k`` mesh (1-based faces).

    Face tokens of the form ``i/t/n`` are accepted and reduced to the vertex
    index. Lines starting with anything other than ``v`` or ``f`` are ignored.
    """
    text = Path(path).read_text(encoding="utf-8")
    return parse_mesh(text)


def parse_mesh(text: str) -> SurfacePatch:
    verts, faces = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        tag = tokens[0]
        if tag == "v":
            if len(tokens) < 4:
                raise ParseError("vertex needs three coordinates", lineno)
            try:
                verts.append([float(x) for x in tokens[1:4]])
            except ValueError as exc:
                raise ParseError(f"bad vertex coordinate ({exc})", lineno) from None
        elif tag == "f":
            idx = tokens[1:]
            if len(idx) != 3:
                raise NonTriangleFace(f"face has {len(idx)} vertices, expected 3", lineno)
            try:
                face = [int(tok.split("/")[0]) for tok in idx]
            except ValueError:
                raise ParseError("bad face index", lineno) from None
            faces.append(face)
    if not verts:
        raise ParseError("no vertices")
    tri = np.array(faces, dtype=np.int64).reshape(-1, 3)
    n = len(verts)
    # negative indices are relative to the end of the vertex list read so far
    tri = np.where(tri < 0, tri + n + 1, tri)
    if tri.size and (tri.min() < 1 or tri.max() > n):
        raise ParseError("face index out of range")
    return SurfacePatch(np.array(verts, dtype=float), tri - 1)


def format_mesh(mesh: SurfacePatch, precision: int = 9) -> str:
    lines = [f"v {x:.{precision}f} {y:.{precision}f} {z:.{precision}f}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles.tolist()]
    return "\n".join(lines) + "\n"


def save_mesh(mesh: SurfacePatch, path, precision: int = 9) -> None:
    Path(path).write_text(format_mesh(mesh, precision), encoding="utf-8")


# --- validation ---------------------------------------------------------------

def validate_patch(mesh: SurfacePatch, area_eps: float = AREA_EPS) -> ValidatedPatch:
    """Check manifoldness, disk topology, orientation and degeneracy.

    Raises the first violation found, in that order of checks.
    """
    tri = mesh.triangles
    areas = mesh.triangle_areas()
    edges, inverse, counts, directed = _unique_edges(tri)

    bad = np.flatnonzero(counts > 2)
    if bad.size:
        raise NonManifoldEdge(edges[bad[0]])

    # an interior edge must be used once in each direction
    _, dcounts = np.unique(directed, axis=0, return_counts=True)
    if np.any(dcounts > 1):
        d_unique, d_counts = np.unique(directed, axis=0, return_counts=True)
        raise InconsistentOrientation(d_unique[np.argmax(d_counts > 1)])

    boundary = edges[counts == 1]
    loops = _boundary_loops(boundary, directed, counts[inverse] == 1)
    n_v = len(np.unique(tri))
    euler = n_v - len(edges) + len(tri)
    if euler != 1 or len(loops) != 1:
        raise NonDiskTopology(euler, len(loops))

    small = np.flatnonzero(areas <= area_eps)
    if small.size:
        raise DegenerateTriangle(int(small[0]), float(areas[small[0]]))

    return ValidatedPatch(mesh.vertices, mesh.triangles, boundary_loop=tuple(loops[0]), euler=euler)


def _boundary_loops(boundary_edges, directed, directed_is_boundary):
    """Chain boundary edges into loops, following triangle orientation."""
    succ = {}
    for a, b in directed[directed_is_boundary].tolist():
        succ.setdefault(a, []).append(b)
    loops = []
    seen = set()
    for start in sorted(succ):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = start
        while True:
            nxt = succ[cur][0] if len(succ[cur]) == 1 else min(succ[cur])
            if nxt == start:
                break
            if nxt in seen:
                # pinched boundary: count it as an extra loop
                break
            loop.append(nxt)
            seen.add(nxt)
            cur = nxt
        loops.append(loop)
    return loops

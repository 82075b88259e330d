"""Procedural test surfaces (all in mm, counter-clockwise seen from +z)."""

from __future__ import annotations

import math

import numpy as np

from .mesh import SurfacePatch


def flat_grid(width, height, nx, ny, z=0.0, diagonal="alternate"):
    """Rectangle [0, width] x [0, height] split into nx*ny quads, two triangles each."""
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, float(z))])
    tris = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b, c, d = a + 1, a + nx + 2, a + nx + 1
            flip = diagonal == "alternate" and (i + j) % 2 == 1
            if flip:
                tris += [(a, b, d), (b, c, d)]
            else:
                tris += [(a, b, c), (a, c, d)]
    return SurfacePatch(verts, np.array(tris))


def grid_index(nx, i, j):
    """Vertex index of grid node (i, j) in :func:`flat_grid` numbering."""
    return j * (nx + 1) + i


def _ring_disk(ring_sizes):
    """Planar unit disk from concentric rings; returns (uv, triangles, ring starts)."""
    K = len(ring_sizes)
    pts = [(0.0, 0.0)]
    starts = [0]
    for k, n in enumerate(ring_sizes, start=1):
        starts.append(len(pts))
        rho = k / K
        for i in range(n):
            phi = 2.0 * math.pi * i / n
            pts.append((rho * math.cos(phi), rho * math.sin(phi)))
    tris = []
    n1 = ring_sizes[0]
    for i in range(n1):
        tris.append((0, starts[1] + i, starts[1] + (i + 1) % n1))
    for k in range(1, K):
        inner_n, outer_n = ring_sizes[k - 1], ring_sizes[k]
        s_in, s_out = starts[k], starts[k + 1]
        i = j = 0
        # zipper merge by angle
        while i < inner_n or j < outer_n:
            a_in = (i + 0.5) / inner_n if i < inner_n else 2.0
            a_out = (j + 0.5) / outer_n if j < outer_n else 2.0
            if a_out <= a_in:
                tris.append((s_in + i % inner_n, s_out + j, s_out + (j + 1) % outer_n))
                j += 1
            else:
                tris.append((s_in + i, s_out + j % outer_n, s_in + (i + 1) % inner_n))
                i += 1
    return np.array(pts), np.array(tris), starts


def hemisphere(radius=25.0, rings=26, target_triangles=None):
    """Upper hemisphere as a disk of concentric rings mapped by polar angle.

    Ring ``k`` has ``6k`` vertices (even, so vertices sit on the x-z plane).
    With ``target_triangles`` the ring sizes are trimmed to hit that exact
    triangle count.
    """
    sizes = [6 * k for k in range(1, rings + 1)]
    if target_triangles is not None:
        excess = 2 * sum(sizes) - sizes[-1] - target_triangles
        if excess < 0:
            raise ValueError("increase rings to reach target_triangles")
        k = rings - 2
        stalled = 0
        while excess >= 2 and stalled <= rings:
            if k >= 1 and sizes[k] - 1 > sizes[k - 1]:
                sizes[k] -= 1
                excess -= 2
                stalled = 0
            else:
                stalled += 1
            k = k - 1 if k > 1 else rings - 2
        if excess == 1:
            sizes[-1] -= 1
    uv, tris, _ = _ring_disk(sizes)
    rho = np.hypot(uv[:, 0], uv[:, 1])
    theta = rho * math.pi / 2.0
    phi = np.arctan2(uv[:, 1], uv[:, 0])
    verts = radius * np.column_stack(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]
    )
    verts[0] = (0.0, 0.0, radius)
    # snap equator exactly
    outer = rho > 1 - 1e-12
    verts[outer, 2] = 0.0
    return SurfacePatch(verts, tris)


def hemisphere_midline(mesh: SurfacePatch, radius):
    """Vertex anchors (equator, pole, equator) of the great semicircle in the x-z plane."""
    v = mesh.vertices
    a = int(np.argmin(np.linalg.norm(v - (radius, 0, 0), axis=1)))
    p = int(np.argmin(np.linalg.norm(v - (0, 0, radius), axis=1)))
    b = int(np.argmin(np.linalg.norm(v - (-radius, 0, 0), axis=1)))
    return [a, p, b]


def icosahedron(radius=1.0):
    t = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array(
        [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)],
        dtype=float,
    )
    v *= radius / np.linalg.norm(v[0])
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    return SurfacePatch(v, np.array(f))


def square_annulus(size=3, hole=(1, 1)):
    """A size x size grid of unit quads with one quad removed (annulus, chi = 0)."""
    grid = flat_grid(size, size, size, size, diagonal="same")
    keep = []
    for q in range(size * size):
        i, j = q % size, q // size
        if (i, j) != tuple(hole):
            keep += [2 * q, 2 * q + 1]
    return SurfacePatch(grid.vertices, grid.triangles[keep])


def heightfield(width, height, nx, ny, fn):
    """Grid over [-w/2, w/2] x [-h/2, h/2] lifted by z = fn(x, y)."""
    g = flat_grid(width, height, nx, ny)
    v = g.vertices.copy()
    v[:, 0] -= width / 2.0
    v[:, 1] -= height / 2.0
    v[:, 2] = fn(v[:, 0], v[:, 1])
    return SurfacePatch(v, g.triangles)


def triple_peak(size=60.0, n=60, height=25.0, sigma=5.0):
    """Three Gaussian bumps; the tall one at +x has an interior distance maximum
    for a source along the y axis."""
    centers = [(size * 0.3, 0.0, height), (-size * 0.25, size * 0.2, 0.5 * height),
               (-size * 0.25, -size * 0.2, 0.5 * height)]

    def fn(x, y):
        z = np.zeros_like(x)
        for cx, cy, h in centers:
            z += h * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * sigma ** 2))
        return z

    return heightfield(size, size, n, n, fn)


def vest_front(width=90.0, height=130.0, n=60, bulge=18.0, shoulder=(0.3, 0.25)):
    """Vest-front-like panel: a domed sheet with both top corners cut away.

    Vertices are kept on a regular grid so the centre line x = 0 is a vertex path.
    """
    nx = n if n % 2 == 0 else n + 1
    ny = int(round(nx * height / width))
    g = flat_grid(width, height, nx, ny, diagonal="same")
    v = g.vertices.copy()
    v[:, 0] -= width / 2.0
    cut_w, cut_h = shoulder[0] * width, shoulder[1] * height
    keep = []
    for f, tri in enumerate(g.triangles):
        c = v[tri].mean(axis=0)
        if abs(c[0]) > width / 2.0 - cut_w and c[1] > height - cut_h:
            continue
        keep.append(f)
    tris = g.triangles[keep]
    used = np.unique(tris)
    remap = -np.ones(len(v), dtype=np.int64)
    remap[used] = np.arange(len(used))
    v = v[used]
    u = v[:, 0] / (width / 2.0)
    w = (v[:, 1] - height / 2.0) / (height / 2.0)
    v[:, 2] = bulge * (1.0 - 0.6 * u ** 2 - 0.4 * w ** 2)
    return SurfacePatch(v, remap[tris])


def vest_centre_line(mesh: SurfacePatch):
    """Vertex indices on x = 0 ordered bottom to top."""
    v = mesh.vertices
    idx = np.flatnonzero(np.abs(v[:, 0]) < 1e-9)
    return idx[np.argsort(v[idx, 1])].tolist()

"""Compare a relaxed fabric against its target surface.

Rigid registration (ICP against exact closest points on the mesh), sampled shape
error, thread lengths, spacing of tagged warps, and weft continuity.
"""

from __future__ import annotations

import io
import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateConfiguration, TaggedColumnWithoutStitches
from .loom import WARP, WEFT, FabricGraph

HIST_BINS = 20
_COARSE_POINTS = 400
_COARSE_ITER = 15


# --- geometry helpers ---------------------------------------------------------

def closest_points_on_triangles(p, a, b, c):
    """Closest point to each p[i] on triangle (a[i], b[i], c[i]), vectorized."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    out = np.empty_like(p)
    done = np.zeros(len(p), bool)

    def put(mask, val):
        m = mask & ~done
        out[m] = val[m] if np.ndim(val) == 2 else val
        done[:] |= m

    with np.errstate(divide="ignore", invalid="ignore"):
        put((d1 <= 0) & (d2 <= 0), a)
        put((d3 >= 0) & (d4 <= d3), b)
        put((d6 >= 0) & (d5 <= d6), c)
        v = d1 / (d1 - d3)
        put((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v[:, None] * ab)
        w = d2 / (d2 - d6)
        put((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w[:, None] * ac)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        put((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + w[:, None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        v, w = vb * denom, vc * denom
        put(np.ones(len(p), bool), a + v[:, None] * ab + w[:, None] * ac)
    return out


class MeshProjector:
    """Exact closest points on a triangle mesh, pruned with a centroid KD-tree."""

    def __init__(self, patch, k=16):
        self.V = patch.vertices
        self.T = patch.triangles
        tri = self.V[self.T]
        self.centroids = tri.mean(axis=1)
        self.radius = float(np.linalg.norm(tri - self.centroids[:, None], axis=2).max())
        self.tree = cKDTree(self.centroids)
        self.k = min(k, len(self.T))
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        self.normals = n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)

    def closest(self, P):
        """Closest points, distances and the triangle each point lands on."""
        P = np.asarray(P, float)
        dc, idx = self.tree.query(P, k=self.k)
        idx = idx.reshape(len(P), -1)
        dc = dc.reshape(len(P), -1)
        best, bestd, face = self._eval(P, idx)
        # a farther triangle could still win if its centroid is within d + radius;
        # widen the candidate set for those points until none can
        k = self.k
        unsure = np.flatnonzero(dc[:, -1] < bestd + self.radius)
        while unsure.size and k < len(self.T):
            k = min(4 * k, len(self.T))
            dc, idx = self.tree.query(P[unsure], k=k)
            idx, dc = idx.reshape(len(unsure), -1), dc.reshape(len(unsure), -1)
            b, d, f = self._eval(P[unsure], idx)
            best[unsure], bestd[unsure], face[unsure] = b, d, f
            unsure = unsure[dc[:, -1] < d + self.radius]
        return best, bestd, face

    def _eval(self, P, idx):
        n, k = idx.shape
        rep = np.repeat(P, k, axis=0)
        tri = self.T[idx.ravel()]
        q = closest_points_on_triangles(rep, self.V[tri[:, 0]], self.V[tri[:, 1]], self.V[tri[:, 2]])
        d = np.linalg.norm(q - rep, axis=1).reshape(n, k)
        j = d.argmin(axis=1)
        rows = np.arange(n)
        return q.reshape(n, k, 3)[rows, j], d[rows, j], idx[rows, j]


def point_segment_distance(p, a, b):
    ab = b - a
    L2 = np.einsum("ij,ij->i", ab, ab)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(L2 > 0, np.einsum("ij,ij->i", p - a, ab) / L2, 0.0)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


def sample_surface(patch, count, seed=0):
    """Area-weighted uniform samples on the mesh, fixed by ``seed``."""
    rng = np.random.default_rng(seed)
    tri = patch.vertices[patch.triangles]
    area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    t = rng.choice(len(tri), size=count, p=area / area.sum())
    u, v = rng.random(count), rng.random(count)
    flip = u + v > 1
    u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
    T = tri[t]
    return T[:, 0] + u[:, None] * (T[:, 1] - T[:, 0]) + v[:, None] * (T[:, 2] - T[:, 0])


# --- registration -------------------------------------------------------------

@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray
    rms: float = 0.0
    iterations: int = 0

    def apply(self, P):
        return np.asarray(P, float) @ self.rotation.T + self.translation

    def to_dict(self):
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist(),
                "rms": self.rms, "iterations": self.iterations}


def kabsch(P, Q):
    """Proper rotation R and translation t minimizing sum |R p + t - q|^2."""
    cp, cq = P.mean(axis=0), Q.mean(axis=0)
    H = (P - cp).T @ (Q - cq)
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0])
    R = Vt.T @ D @ U.T
    return R, cq - R @ cp


def _points(fabric):
    return np.asarray(getattr(fabric, "positions", fabric), float)


def _pca_frame(P):
    c = P.mean(axis=0)
    _, s, Vt = np.linalg.svd(P - c, full_matrices=False)
    return c, Vt, s


def register(fabric, target, max_iter=100, tol=1e-10, sample_count=4000, seed=0) -> RigidTransform:
    """Rigid transform taking the fabric onto the target surface.

    ICP with exact closest points on the mesh. Starts from the identity and from
    each proper PCA-axis alignment; the lowest residual wins. Reflections are
    never used.
    """
    P = _points(fabric)
    c, axes, s = _pca_frame(P)
    if len(P) < 3 or s[1] <= 1e-9 * max(s[0], 1e-300):
        raise DegenerateConfiguration("fabric nodes are collinear")
    proj = MeshProjector(target)
    tc, taxes, _ = _pca_frame(sample_surface(target, sample_count, seed))
    starts = [(np.eye(3), np.zeros(3))]
    for sx, sy in itertools.product((1, -1), repeat=2):
        R = taxes.T @ np.diag([sx, sy, 1.0]) @ axes
        if np.linalg.det(R) < 0:
            R = taxes.T @ np.diag([sx, sy, -1.0]) @ axes
        starts.append((R, tc - R @ c))
    # short coarse runs on a subsample pick the basin, then one full refinement
    sub = P[np.random.default_rng(seed).permutation(len(P))[:_COARSE_POINTS]]
    coarse = [_icp(sub, proj, R0, t0, _COARSE_ITER, 1e-6) for R0, t0 in starts]
    R, t, _, _ = min(coarse, key=lambda x: x[2])
    R, t, rms, it = _icp(P, proj, R, t, max_iter, tol)
    return RigidTransform(R, t, rms, it)


def _icp(P, proj, R, t, max_iter, tol):
    """Alternate closest points with a pose update. Each step tries a Gauss-Newton
    move on the point-to-surface distances (fast near the optimum) and falls
    back to the closed-form point-to-point fit when that does not help."""
    X = P @ R.T + t
    Q, d, face = proj.closest(X)
    rms = float(np.sqrt(np.mean(d * d)))
    it = 0
    for it in range(1, max_iter + 1):
        cands = [kabsch(P, Q)]
        gn = _gauss_newton_step(X, Q, d, proj.normals[face])
        if gn is not None:
            dR, dt = gn
            cands.insert(0, (dR @ R, dR @ t + dt))
        for Rn, tn in cands:
            Xn = P @ Rn.T + tn
            Qn, dn, fn = proj.closest(Xn)
            rn = float(np.sqrt(np.mean(dn * dn)))
            if rn < rms:
                break
        if not rn < rms:
            break
        done = rms - rn <= tol * max(1.0, rms)
        R, t, X, Q, d, face, rms = Rn, tn, Xn, Qn, dn, fn, rn
        if done:
            break
    return R, t, rms, it


def _gauss_newton_step(X, Q, d, face_normals):
    """Small rigid motion (dR, dt) linearizing distance-to-surface about X."""
    off = X - Q
    n = np.where((d > 1e-12)[:, None], off / np.maximum(d, 1e-300)[:, None], face_normals)
    c = X.mean(axis=0)
    J = np.hstack([np.cross(X - c, n), n])
    try:
        step = np.linalg.lstsq(J, -d, rcond=None)[0]
    except np.linalg.LinAlgError:
        return None
    w, v = step[:3], step[3:]
    theta = float(np.linalg.norm(w))
    K = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
    if theta > 1e-300:
        K /= theta
        dR = np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * (K @ K)
    else:
        dR = np.eye(3)
    return dR, c + v - dR @ c


# --- shape error --------------------------------------------------------------

@dataclass(frozen=True)
class ShapeError:
    count: int
    mean: float
    rms: float
    max: float
    bins: list  # [low, high] per bin
    counts: list
    distances: np.ndarray = field(repr=False, compare=False, default=None)

    def to_dict(self):
        d = asdict(self)
        d.pop("distances")
        return d

    def histogram_csv(self):
        buf = io.StringIO()
        buf.write("bin_low,bin_high,count\n")
        for (lo, hi), n in zip(self.bins, self.counts):
            buf.write(f"{lo:.6f},{hi:.6f},{n}\n")
        return buf.getvalue()


def fabric_segments(fabric, graph=None):
    P = _points(fabric)
    graph = graph if graph is not None else getattr(fabric, "graph", None)
    if graph is None or not graph.edges:
        return P, np.zeros((0, 2), dtype=np.int64)
    return P, np.array([(e.a, e.b) for e in graph.edges], dtype=np.int64)


def distances_to_fabric(Q, P, E):
    """Shortest distance from each query point to the fabric's nodes and edges."""
    Q = np.asarray(Q, float)
    d, _ = cKDTree(P).query(Q)
    if len(E) == 0:
        return d
    A, B = P[E[:, 0]], P[E[:, 1]]
    mid = 0.5 * (A + B)
    half = 0.5 * float(np.linalg.norm(B - A, axis=1).max())
    tree = cKDTree(mid)
    for i, cand in enumerate(tree.query_ball_point(Q, d + half)):
        if cand:
            cand = np.asarray(cand)
            d[i] = min(d[i], point_segment_distance(np.repeat(Q[i:i + 1], len(cand), 0), A[cand], B[cand]).min())
    return d


def shape_error(fabric, target, sample_count=5000, seed=0, graph=None, bins=HIST_BINS) -> ShapeError:
    """Distances from area-uniform target samples to the fabric, with a histogram."""
    Q = sample_surface(target, sample_count, seed)
    P, E = fabric_segments(fabric, graph)
    d = distances_to_fabric(Q, P, E)
    hi = float(d.max()) if d.size and d.max() > 0 else 1.0
    counts, edges = np.histogram(d, bins=bins, range=(0.0, hi))
    return ShapeError(
        count=int(d.size), mean=float(d.mean()), rms=float(np.sqrt(np.mean(d * d))),
        max=float(d.max()), bins=[[float(a), float(b)] for a, b in zip(edges, edges[1:])],
        counts=[int(c) for c in counts], distances=d,
    )


# --- thread lengths -----------------------------------------------------------

def thread_length_report(graph: FabricGraph, positions, stats):
    """Measured minus demanded thread lengths per warp and per weft row.

    Stitch column g hangs on warps g and g+1 and its chain rest is their mean
    release, so half of the chain's stretch (relaxed length minus rest) is
    charged to each of the two warps. Released length outside the chains
    (floats beyond the first and last stitch) is taken as demanded.
    """
    P = np.asarray(positions, float)
    demanded = np.asarray([float(x) for x in stats["release_totals"]])
    n = graph.n_warps
    stretch = np.zeros(max(n - 1, 0))
    weft_meas = np.zeros(graph.n_rows)
    weft_dem = np.zeros(graph.n_rows)
    for e in graph.edges:
        L = float(np.linalg.norm(P[e.a] - P[e.b]))
        if e.kind == WARP:
            stretch[e.line - 1] += L - e.rest_length
        elif e.kind == WEFT:
            weft_meas[e.line - 1] += L
            weft_dem[e.line - 1] += e.rest_length
    warp_err = np.zeros(n)
    warp_err[:-1] += 0.5 * stretch
    warp_err[1:] += 0.5 * stretch
    released = np.asarray(graph.released, float) * graph.params.s_h
    return {
        "release_totals_match": bool(released.shape == demanded.shape
                                     and np.array_equal(released, demanded)),
        "warp_demanded": demanded.tolist(),
        "warp_measured": (demanded + warp_err).tolist(),
        "warp_error": warp_err.tolist(),
        "weft_demanded": weft_dem.tolist(),
        "weft_measured": weft_meas.tolist(),
        "weft_error": (weft_meas - weft_dem).tolist(),
    }


# --- tagged warp spacing ------------------------------------------------------

def warp_path(graph: FabricGraph, positions, column):
    """Relaxed positions of the stitches in column ``column`` (between warps
    ``column`` and ``column + 1``), by row."""
    ids = sorted((r, n) for n, (r, g) in enumerate(graph.nodes) if g == column)
    return np.asarray(positions, float)[[n for _, n in ids]].reshape(-1, 3)


def path_spacing(graph: FabricGraph, positions, tagged_columns, k_spacing=None):
    """Distance from each stitch on one tagged warp to the next tagged warp's path.

    Deviation is measured against ``k_spacing * s_w`` (default: the column gap).
    """
    cols = sorted(set(int(c) for c in tagged_columns))
    if len(cols) < 2:
        raise TaggedColumnWithoutStitches("need at least two tagged warp columns")
    paths = {}
    for c in cols:
        path = warp_path(graph, positions, c)
        if len(path) == 0:
            raise TaggedColumnWithoutStitches(f"tagged warp {c} has no stitches")
        paths[c] = path
    pairs = []
    s_w = graph.params.s_w
    for c1, c2 in zip(cols, cols[1:]):
        target = (k_spacing if k_spacing is not None else c2 - c1) * s_w
        A, B = paths[c1], paths[c2]
        if len(B) == 1:
            d = np.linalg.norm(A - B[0], axis=1)
        else:
            d = np.array([point_segment_distance(np.repeat(a[None], len(B) - 1, 0), B[:-1], B[1:]).min()
                          for a in A])
        dev = d - target
        pairs.append({
            "columns": [c1, c2], "target": target, "mean": float(d.mean()),
            "max_abs_deviation": float(np.abs(dev).max()),
            "relative_max_deviation": float(np.abs(dev).max() / target),
        })
    return pairs


# --- continuity ---------------------------------------------------------------

@dataclass(frozen=True)
class Continuity:
    ok: bool
    breaks: list = field(default_factory=list)  # (row, reason)

    def __bool__(self):
        return self.ok


def continuity_check(graph: FabricGraph) -> Continuity:
    """The weft path must cover every node once, take the rows in increasing
    order (a pass with no interlacing leaves no nodes and is skipped), sweep
    each row one way, and reverse on every pass, so two rows p passes apart
    run the same way iff p is even."""
    nodes, path = graph.nodes, graph.weft_path
    breaks = []
    if sorted(path) != list(range(len(nodes))):
        breaks.append((None, "weft path does not cover every node exactly once"))
        return Continuity(False, breaks)
    rows = []
    for nid in path:
        r = nodes[nid][0]
        if not rows or rows[-1][0] != r:
            rows.append((r, []))
        rows[-1][1].append(nodes[nid][1])
    ref = None  # (row, direction) of the first row with a direction
    for idx, (r, gaps) in enumerate(rows):
        if idx and r <= rows[idx - 1][0]:
            breaks.append((r, f"row {r} follows row {rows[idx - 1][0]}"))
        steps = np.diff(gaps)
        if not steps.size:
            continue
        if not ((steps > 0).all() or (steps < 0).all()):
            breaks.append((r, "row is not swept in one direction"))
            continue
        direction = int(steps[0] < 0)
        if ref is None:
            ref = (r, direction)
        elif direction != ref[1] ^ ((r - ref[0]) % 2):
            breaks.append((r, "row does not reverse the shuttle direction"))
    return Continuity(not breaks, breaks)


# --- report -------------------------------------------------------------------

@dataclass
class VerificationReport:
    shape: ShapeError
    thread_length: dict
    path_spacing: list
    continuity: Continuity
    registration: RigidTransform
    relaxation: dict

    def to_dict(self):
        return {
            "shape_error": self.shape.to_dict(),
            "thread_length_error": self.thread_length,
            "path_spacing_error": self.path_spacing,
            "weft_continuity": {"ok": self.continuity.ok,
                                "breaks": [list(b) for b in self.continuity.breaks]},
            "registration": self.registration.to_dict(),
            "relaxation": self.relaxation,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

"""Stitch mesh between neighbouring isocurves and its knitting map.

Columns are the bands between consecutive curves. Inside a band the segments
of the two curves are matched by a monotone alignment (quads where both sides
advance, triangles where only the longer side does). Rows are chains of cells
joined through shared segments; when those chains do not satisfy the row rules
a short-row schedule built from the per-column stitch counts is used instead.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import RuleViolation
from .isocurves import SegmentedCurves, StitchParams, resample
from .knitmap import CYAN, GRAY, KNIT, L2R, R2L, WHITE, YELLOW, KnittingMap, validate_rules

QUAD, TRI = "quad", "tri"


@dataclass(frozen=True, eq=False)
class StitchCell:
    row: int  # 1-based, bottom up
    col: int  # 1-based, left to right
    corners: np.ndarray  # (3|4, 3): left side upwards, then right side downwards
    direction: str

    @property
    def kind(self):
        return QUAD if len(self.corners) == 4 else TRI


@dataclass(frozen=True, eq=False)
class StitchMesh:
    n_rows: int
    n_cols: int
    spans: tuple  # (first, last) column of each row, 1-based
    cells: tuple
    first_direction: str = L2R
    method: str = "chains"
    curves: tuple = field(default=(), repr=False)  # resampled boundary polylines

    def row_direction(self, i):
        flip = {L2R: R2L, R2L: L2R}
        return self.first_direction if i % 2 == 1 else flip[self.first_direction]

    @property
    def n_quads(self):
        return sum(c.kind == QUAD for c in self.cells)

    @property
    def n_triangles(self):
        return sum(c.kind == TRI for c in self.cells)

    def column_counts(self):
        counts = np.zeros(self.n_cols, dtype=int)
        for a, b in self.spans:
            counts[a - 1:b] += 1
        return counts


# --- alignment ----------------------------------------------------------------

def align_curves(A, B):
    """Monotone matching of two sampled curves.

    ``A`` and ``B`` hold n+1 and m+1 points. Returns the list of matched index
    pairs from (0, 0) to (n, m): every step advances the longer side by one
    and the shorter side by zero or one, so there are min(n, m) quads and
    |n - m| triangles. Minimises the summed squared distance of matched pairs;
    ties go to the path that keeps both sides progressing evenly.
    """
    swap = len(B) > len(A)
    if swap:
        A, B = B, A
    n, m = len(A) - 1, len(B) - 1
    d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)
    # secondary key: distance from the diagonal of the (i/n, j/m) square
    ii, jj = np.meshgrid(np.arange(n + 1) / max(n, 1), np.arange(m + 1) / max(m, 1), indexing="ij")
    bal = (ii - jj) ** 2
    scale = float(d2.max()) or 1.0
    cost = np.round(d2 / scale, 12) + 1e-13 * bal
    INF = np.inf
    D = np.full((n + 1, m + 1), INF)
    take_diag = np.zeros((n + 1, m + 1), dtype=bool)
    D[0, 0] = cost[0, 0]
    for i in range(1, n + 1):
        stay = D[i - 1]
        diag = np.concatenate([[INF], D[i - 1, :-1]])
        better = diag < stay
        D[i] = np.where(better, diag, stay) + cost[i]
        take_diag[i] = better
    path = [(n, m)]
    i, j = n, m
    while i > 0:
        if take_diag[i, j]:
            j -= 1
        i -= 1
        path.append((i, j))
    if j != 0:
        raise RuleViolation(2, detail="alignment failed to reach the curve starts")
    path.reverse()
    if swap:
        path = [(b, a) for a, b in path]
    return path


def _band_cells(A, B, path):
    """Cells of one band as (left segment index | None, right segment index | None, corners)."""
    out = []
    for (i0, j0), (i1, j1) in zip(path, path[1:]):
        left = i0 if i1 > i0 else None
        right = j0 if j1 > j0 else None
        pts = [A[i0]] + ([A[i1]] if left is not None else [])
        pts += ([B[j1]] if right is not None else []) + [B[j0]]
        out.append((left, right, np.array(pts)))
    return out


# --- rows from chains -----------------------------------------------------------

def _chain_rows(bands):
    """Group cells into rows linked through shared segments.

    ``bands[j]`` is the list of cells of column j. Returns (rows, cell_row)
    where rows are (first, last) 0-based column spans in a bottom-up order
    consistent with every column, or None if no such order exists.
    """
    M = len(bands)
    parent = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for j, cells in enumerate(bands):
        for k in range(len(cells)):
            parent[(j, k)] = (j, k)
    for j in range(M - 1):
        by_seg = {c[0]: k for k, c in enumerate(bands[j + 1]) if c[0] is not None}
        for k, c in enumerate(bands[j]):
            if c[1] is not None and c[1] in by_seg:
                a, b = find((j, k)), find((j + 1, by_seg[c[1]]))
                if a != b:
                    parent[max(a, b)] = min(a, b)
    roots = sorted({find(x) for x in parent})
    rid = {r: n for n, r in enumerate(roots)}
    cols = {n: [] for n in range(len(roots))}
    for x in parent:
        cols[rid[find(x)]].append(x[0])
    spans = []
    for n in range(len(roots)):
        cs = sorted(cols[n])
        if len(set(cs)) != len(cs) or cs[-1] - cs[0] + 1 != len(cs):
            return None
        spans.append((cs[0], cs[-1]))
    # order chains so that within each column cells stay bottom-up
    succ = {n: set() for n in range(len(roots))}
    indeg = [0] * len(roots)
    for j, cells in enumerate(bands):
        ids = [rid[find((j, k))] for k in range(len(cells))]
        for a, b in zip(ids, ids[1:]):
            if b not in succ[a]:
                succ[a].add(b)
                indeg[b] += 1
    ready = [(min(cols[n]), n) for n in range(len(roots)) if indeg[n] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        _, n = heapq.heappop(ready)
        order.append(n)
        for b in sorted(succ[n]):
            indeg[b] -= 1
            if indeg[b] == 0:
                heapq.heappush(ready, (min(cols[b]), b))
    if len(order) != len(roots):
        return None
    pos = {n: r for r, n in enumerate(order)}
    cell_row = {x: pos[rid[find(x)]] for x in parent}
    return [spans[n] for n in order], cell_row


# --- short-row schedule ---------------------------------------------------------

def unimodal_majorant(counts):
    """Smallest profile >= counts that rises to one peak and then falls."""
    c = np.asarray(counts, dtype=int)
    return np.minimum(np.maximum.accumulate(c), np.maximum.accumulate(c[::-1])[::-1])


def _even_subset(centers, m, n_rows):
    """Pick ``m`` of the sorted ``centers`` closest (least squares) to evenly
    spaced row positions; returns their indices in order."""
    n = len(centers)
    targets = (np.arange(m) + 0.5) * n_rows / m - 0.5
    # cost[k][i]: best cost placing targets[:k] among centers[:i]
    inf = float("inf")
    cost = np.full((m + 1, n + 1), inf)
    cost[0, :] = 0.0
    for k in range(1, m + 1):
        for i in range(k, n + 1):
            take = cost[k - 1, i - 1] + (centers[i - 1] - targets[k - 1]) ** 2
            cost[k, i] = min(cost[k, i - 1], take)
    picked, i = [], n
    for k in range(m, 0, -1):
        while cost[k, i - 1] <= cost[k, i]:
            i -= 1
        picked.append(i - 1)
        i -= 1
    return picked[::-1]


def _side_levels(groups, need, n_rows):
    """Reach of each row group on one side of the peak.

    ``groups`` are lists of 0-based rows; ``need[d]`` is the number of rows
    that should reach d+1 columns beyond the peak. Each level keeps a subset of
    the previous level's groups chosen to sit as evenly over the rows as
    possible, so neighbouring columns stay aligned row by row.
    """
    reach = [0] * len(groups)
    alive = list(range(len(groups)))
    for d, want in enumerate(need):
        sizes = [len(groups[g]) for g in alive]
        if not alive or want <= 0:
            break
        m = int(round(want / (sum(sizes) / len(sizes))))
        centers = [float(np.mean(groups[g])) for g in alive]
        # group sizes differ (1 or 2 rows), so try neighbouring counts and keep
        # the subset whose row total is closest to the demand; a column that
        # wants stitches keeps at least one group
        best = None
        for k in sorted({max(1, min(len(alive), m + d)) for d in (-1, 0, 1)}):
            pick = [alive[i] for i in _even_subset(centers, k, n_rows)]
            miss = abs(sum(len(groups[g]) for g in pick) - want)
            if best is None or miss < best[0]:
                best = (miss, pick)
        alive = best[1]
        for g in alive:
            reach[g] = d + 1
    return reach


def short_row_schedule(counts):
    """Row spans (0-based, inclusive) for per-column stitch counts.

    The counts are raised to their unimodal majorant. Every row contains the
    peak column. Rows 1-2, 3-4, ... share their right end and rows 2-3, 4-5, ...
    share their left end, which satisfies the end-to-start rule exactly; the
    reach of each pair is spread evenly over the height of the fabric.
    """
    c = unimodal_majorant(counts)
    M = len(c)
    N = int(c.max())
    peaks = np.flatnonzero(c == N)
    p = int(peaks[(len(peaks) - 1) // 2])
    right_groups = [list(range(i, min(i + 2, N))) for i in range(0, N, 2)]
    left_groups = [[0]] + [list(range(i, min(i + 2, N))) for i in range(1, N, 2)]
    right = _side_levels(right_groups, [int(c[j]) for j in range(p + 1, M)], N)
    left = _side_levels(left_groups, [int(c[j]) for j in range(p - 1, -1, -1)], N)
    b = [0] * N
    a = [0] * N
    for g, rows in enumerate(right_groups):
        for i in rows:
            b[i] = p + right[g]
    for g, rows in enumerate(left_groups):
        for i in rows:
            a[i] = p - left[g]
    return [(a[i], b[i]) for i in range(N)]


def _schedule_cells(curves, spans, M):
    """Cells for a schedule: each curve resampled to the segments the rows need."""
    N = len(spans)

    def in_row(i, j):
        return 0 <= j < M and spans[i][0] <= j <= spans[i][1]

    # advance[k][i]: row i consumes one segment of curve k
    advance = [[False] * N for _ in range(M + 1)]
    for i, (a, b) in enumerate(spans):
        for j in range(a, b + 1):
            left_open = j == 0 or in_row(i, j - 1)
            right_open = j == M - 1 or in_row(i, j + 1)
            if left_open:
                advance[j][i] = True
            if right_open or not left_open:
                advance[j + 1][i] = True
    pts = [resample(curves[k], sum(advance[k])) for k in range(M + 1)]
    ptr = [0] * (M + 1)
    cells = []
    for i, (a, b) in enumerate(spans):
        for j in range(a, b + 1):
            L, R = pts[j], pts[j + 1]
            l0, r0 = ptr[j], ptr[j + 1]
            left = [L[l0]] + ([L[l0 + 1]] if advance[j][i] else [])
            right = ([R[r0 + 1]] if advance[j + 1][i] else []) + [R[r0]]
            cells.append((i, j, np.array(left + right)))
        for k in range(M + 1):
            if advance[k][i]:
                ptr[k] += 1
    return cells, pts


# --- assembly -------------------------------------------------------------------

def build_stitch_mesh(segmented: SegmentedCurves, params: StitchParams,
                      first_direction=L2R, polylines=None) -> StitchMesh:
    """Cells between neighbouring curves, grouped into rule-abiding rows.

    ``polylines`` are the unsampled curves used when the short-row schedule
    has to resample them; the sampled points are used if omitted.
    """
    curves = [c.points for c in segmented.curves]
    if len(curves) < 2:
        raise RuleViolation(1, detail="need at least two isocurves to form a column")
    if any(len(c) < 2 for c in curves):
        raise RuleViolation(1, detail="every isocurve needs at least one segment")
    M = len(curves) - 1
    bands = [_band_cells(curves[j], curves[j + 1], align_curves(curves[j], curves[j + 1]))
             for j in range(M)]

    chained = _chain_rows(bands)
    if chained is not None:
        spans, cell_row = chained
        mesh = _assemble(spans, [
            (cell_row[(j, k)], j, corners)
            for j, cells in enumerate(bands) for k, (_, _, corners) in enumerate(cells)
        ], M, first_direction, "chains", tuple(curves))
        if validate_rules(emit_knitting_map(mesh)):
            return mesh

    counts = [len(cells) for cells in bands]
    spans = short_row_schedule(counts)
    src = curves if polylines is None else [np.asarray(p) for p in polylines]
    cells, pts = _schedule_cells(src, spans, M)
    mesh = _assemble(spans, cells, M, first_direction, "schedule", tuple(pts))
    check = validate_rules(emit_knitting_map(mesh))
    if not check:
        raise check.error()
    return mesh


def _assemble(spans, cells, M, first_direction, method, curves):
    N = len(spans)
    flip = {L2R: R2L, R2L: L2R}
    dirs = [first_direction if i % 2 == 0 else flip[first_direction] for i in range(N)]
    out = sorted(
        (StitchCell(i + 1, j + 1, corners, dirs[i]) for i, j, corners in cells),
        key=lambda c: (c.row, c.col),
    )
    return StitchMesh(N, M, tuple((a + 1, b + 1) for a, b in spans), tuple(out),
                      first_direction, method, curves)


def emit_knitting_map(mesh: StitchMesh) -> KnittingMap:
    """Yellow/Cyan on each row's span, Gray on skipped cells with stitches
    above and below in the same column, White elsewhere."""
    N, M = mesh.n_rows, mesh.n_cols
    grid = np.full((N, M), WHITE, dtype="<U1")
    for i, (a, b) in enumerate(mesh.spans, start=1):
        grid[i - 1, a - 1:b] = YELLOW if mesh.row_direction(i) == L2R else CYAN
    knit = np.isin(grid, KNIT)
    below = np.maximum.accumulate(knit, axis=0)
    above = np.maximum.accumulate(knit[::-1], axis=0)[::-1]
    hole = ~knit
    hole[1:] &= below[:-1]
    hole[:-1] &= above[1:]
    hole[0] = False
    hole[-1] = False
    grid[hole] = GRAY
    return KnittingMap(grid)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import point_segment_distance as oracle_psd
from surfweave.errors import DegenerateConfiguration, NonConvergence, TaggedColumnWithoutStitches
from surfweave.isocurves import StitchParams
from surfweave.knitmap import KnittingMap
from surfweave.loom import execute, warp_release_totals
from surfweave.mesh import validate_patch
from surfweave.relax import SpringSystem, angle_deficit, gradient_descent, relax
from surfweave.shapes import flat_grid, triple_peak
from surfweave.verify import (continuity_check, distances_to_fabric, kabsch, path_spacing,
                              point_segment_distance, register, sample_surface, shape_error,
                              thread_length_report)
from surfweave.weave import WeavingMap, convert_map, emit_wcode, map_statistics


def knit_fabric(n, m, params):
    rows = [("Y" if i % 2 == 0 else "C") * m for i in range(n)]
    W = convert_map(KnittingMap.from_rows(rows))
    return execute(emit_wcode(W), params), W


def rot_z(deg):
    a = math.radians(deg)
    return np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1.0]])


# --- relaxation ---------------------------------------------------------------

def test_single_spring_reaches_rest_length():
    s = SpringSystem(2, [(0, 1)], [5.0], bend=0.0)
    x, E, g, _ = gradient_descent(s.energy_grad, np.array([0, 0, 0, 1.0, 0.5, 0.2]), 1e-10, 10_000)
    assert np.linalg.norm(x[3:] - x[:3]) == pytest.approx(5.0, abs=1e-9)
    assert E < 1e-18


def test_planar_knit_relaxes_to_rest():
    p = StitchParams(2.0, 2.0)
    g, _ = knit_fabric(6, 6, p)
    rel = relax(g, seed=3)
    assert rel.converged and rel.grad_norm <= 1e-8 * p.s_h
    X = rel.positions
    for e in g.edges:
        assert np.linalg.norm(X[e.a] - X[e.b]) == pytest.approx(e.rest_length, abs=1e-4)


def test_gradient_descent_energy_never_increases():
    g, _ = knit_fabric(4, 4, StitchParams(2.0, 2.0))
    s = SpringSystem.from_graph(g)
    x = np.random.default_rng(1).normal(size=3 * len(g.nodes)) * 3
    energies = []

    def fg(x):
        E, G = s.energy_grad(x)
        energies.append(E)
        return E, G
    gradient_descent(fg, x, 1e-6, 300)
    # accepted steps are the running minimum of evaluated energies
    accepted = np.minimum.accumulate(energies)
    assert np.all(np.diff(accepted) <= 0) and accepted[-1] < energies[0]


def test_non_convergence_warns_or_raises():
    g, _ = knit_fabric(4, 4, StitchParams(2.0, 2.0))
    with pytest.warns(RuntimeWarning):
        rel = relax(g, method="gd", max_iter=3)
    assert not rel.converged
    with pytest.raises(NonConvergence):
        relax(g, method="gd", max_iter=3, strict=True)


def test_relax_is_deterministic():
    g, _ = knit_fabric(5, 3, StitchParams(2.0, 1.0))
    a, b = relax(g, seed=4), relax(g, seed=4)
    assert np.array_equal(a.positions, b.positions)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_energy_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    g, _ = knit_fabric(3, 3, StitchParams(2.0, 2.0))
    s = SpringSystem.from_graph(g, bend=0.05)
    x = rng.normal(scale=3.0, size=3 * len(g.nodes))
    _, G = s.energy_grad(x)
    h = 1e-6
    fd = np.array([(s.energy(x + h * e) - s.energy(x - h * e)) / (2 * h) for e in np.eye(len(x))])
    assert np.abs(fd - G).max() <= 1e-5 * max(1.0, np.abs(G).max())


# --- registration -------------------------------------------------------------

@pytest.fixture(scope="module")
def peaks():
    # no rotational symmetry, so a rigid motion is fully identifiable
    return validate_patch(triple_peak(60.0, 30))


@pytest.fixture(scope="module")
def peak_samples(peaks):
    return sample_surface(peaks, 600, seed=9)


def test_register_identity(peaks, peak_samples):
    T = register(peak_samples, peaks)
    assert T.rms <= 1e-6
    assert np.allclose(T.apply(peak_samples), peak_samples, atol=1e-6)


def test_register_recovers_rigid_motion(peaks, peak_samples):
    R = rot_z(30)
    moved = peak_samples @ R.T + [5, 0, 0]
    T = register(moved, peaks)
    assert T.rms <= 1e-6
    assert np.allclose(T.rotation, R.T, atol=1e-6)
    assert np.allclose(T.apply(moved), peak_samples, atol=1e-5)


def test_register_residual_matches_noise(peaks, peak_samples):
    sigma = 0.01 * 60.0
    noisy = peak_samples + np.random.default_rng(0).normal(scale=sigma, size=peak_samples.shape)
    T = register(noisy @ rot_z(20).T + [1, 2, 3], peaks)
    assert 0.7 * sigma < T.rms < 1.3 * sigma


def test_register_result_independent_of_start_pose(peaks, peak_samples):
    P = peak_samples * [1.0, 1.0, 0.9]
    a = register(P, peaks)
    b = register(P @ rot_z(45).T + [3, -2, 1], peaks)
    assert a.rms == pytest.approx(b.rms, abs=1e-9)


def test_register_rejects_collinear(peaks):
    line = np.outer(np.linspace(0, 10, 20), [1.0, 0, 0])
    with pytest.raises(DegenerateConfiguration):
        register(line, peaks)


def test_kabsch_is_proper_rotation():
    rng = np.random.default_rng(2)
    P = rng.normal(size=(30, 3))
    R, t = kabsch(P, P[:, ::-1] * [1, 1, 1])
    assert np.linalg.det(R) == pytest.approx(1.0)


# --- shape error ----------------------------------------------------------------

def test_shape_error_constant_offset():
    sheet = validate_patch(flat_grid(20, 20, 21, 21))
    lifted = flat_grid(20, 20, 201, 201).vertices + [0, 0, 1.0]
    se = shape_error(lifted, sheet, 2000)
    assert se.mean == pytest.approx(1.0, abs=2e-3)
    assert 1.0 <= se.max <= 1.003  # grid spacing 0.1 mm
    assert sum(se.counts) == se.count == 2000
    assert se.bins[0][0] == 0.0 and se.bins[-1][1] == pytest.approx(se.max)


def test_shape_error_symmetric_under_swapped_offset():
    g = flat_grid(20, 20, 201, 201)
    sheet = validate_patch(flat_grid(20, 20, 21, 21))
    up = shape_error(g.vertices + [0, 0, 1.0], sheet, 1000, seed=2)
    lifted = validate_patch(type(sheet)(sheet.vertices + [0, 0, 1.0], sheet.triangles))
    down = shape_error(g.vertices, lifted, 1000, seed=2)
    assert up.mean == pytest.approx(down.mean, abs=1e-12)


def test_shape_error_coincident_is_zero():
    sheet = validate_patch(flat_grid(10, 10, 11, 11))
    se = shape_error(sample_surface(sheet, 300, seed=4), sheet, 300, seed=4)
    assert se.max == 0.0 and se.counts[0] == 300


def test_shape_error_uses_edges():
    sheet = validate_patch(flat_grid(10, 10, 11, 11))
    g, _ = knit_fabric(4, 4, StitchParams(1.0, 1.0))
    rel = relax(g, seed=0)
    with_edges = shape_error(rel.positions, sheet, 500, graph=g)
    nodes_only = shape_error(rel.positions, sheet, 500)
    assert with_edges.mean < nodes_only.mean


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_point_segment_distance_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    p, a, b = rng.normal(size=(3, 5, 3))
    got = point_segment_distance(p, a, b)
    want = [oracle_psd(p[i], a[i], b[i]) for i in range(5)]
    assert np.allclose(got, want, atol=1e-12)
    assert np.allclose(point_segment_distance(p, a, a), np.linalg.norm(p - a, axis=1))


def test_distances_to_fabric_brute_force():
    rng = np.random.default_rng(5)
    P = rng.uniform(0, 10, (40, 3))
    E = np.array([(i, i + 1) for i in range(39)])
    Q = rng.uniform(0, 10, (50, 3))
    got = distances_to_fabric(Q, P, E)
    want = [min(oracle_psd(q, P[a], P[b]) for a, b in E) for q in Q]
    assert np.allclose(got, want, atol=1e-12)


# --- thread lengths, spacing, continuity -----------------------------------------

def test_thread_length_zero_for_rest_state():
    p = StitchParams(2.0, 2.0)
    g, W = knit_fabric(4, 5, p)
    X = np.column_stack([g.positions_grid(), np.zeros(len(g.nodes))])
    rep = thread_length_report(g, X, map_statistics(W, p.s_h))
    assert rep["release_totals_match"]
    assert rep["warp_demanded"] == warp_release_totals(g)
    assert np.allclose(rep["warp_error"], 0) and np.allclose(rep["weft_error"], 0)


def test_thread_length_sees_stretch():
    p = StitchParams(2.0, 2.0)
    g, W = knit_fabric(4, 5, p)
    X = np.column_stack([g.positions_grid(), np.zeros(len(g.nodes))]) * [1.0, 1.1, 1.0]
    rep = thread_length_report(g, X, map_statistics(W, p.s_h))
    assert all(e > 0 for e in rep["warp_error"])
    assert np.allclose(rep["weft_error"], 0)


def test_thread_length_flags_mismatched_totals():
    p = StitchParams(2.0, 2.0)
    g, W = knit_fabric(3, 3, p)
    stats = map_statistics(W, p.s_h)
    stats["release_totals"][0] += p.s_h
    X = np.column_stack([g.positions_grid(), np.zeros(len(g.nodes))])
    assert not thread_length_report(g, X, stats)["release_totals_match"]


def test_sewn_column_demands_less_than_span():
    p = StitchParams(2.0, 2.0)
    W = WeavingMap.from_rows(["GMBMG", "MGBGM", "GMBMG", "MGGGM"])
    g = execute(emit_wcode(W), p)
    demanded = map_statistics(W, p.s_h)["release_totals"]
    assert demanded[2] < 4 * p.s_h
    assert demanded[0] == 4 * p.s_h


def test_path_spacing_flat():
    p = StitchParams(2.0, 2.0)
    g, _ = knit_fabric(6, 10, p)
    X = np.column_stack([g.positions_grid(), np.zeros(len(g.nodes))])
    (pair,) = path_spacing(g, X, [1, 8], 7)
    assert pair["target"] == 14.0
    assert pair["mean"] == pytest.approx(14.0) and pair["max_abs_deviation"] == pytest.approx(0, abs=1e-12)
    with pytest.raises(TaggedColumnWithoutStitches):
        path_spacing(g, X, [3], 7)
    with pytest.raises(TaggedColumnWithoutStitches):
        path_spacing(g, X, [3, 40], 7)


def test_path_spacing_hemisphere(hemi_verified):
    graph, res, _ = hemi_verified
    # tags every 7 stitch columns, centred on the fabric
    cols = list(range(5, graph.n_warps, 7))
    pairs = path_spacing(graph, res.registered, cols, 7)
    worst = max(p["relative_max_deviation"] for p in pairs)
    print(f"hemisphere tagged-path spacing: worst relative deviation {worst:.3f}")
    assert worst <= 0.15


def test_hemisphere_thread_accounting(hemi_verified, hemi_compiled):
    graph, res, _ = hemi_verified
    tl = res.report.thread_length
    assert tl["release_totals_match"]
    assert tl["warp_demanded"] == hemi_compiled.stats["release_totals"] == warp_release_totals(graph)
    assert len(tl["warp_error"]) == graph.n_warps


def test_continuity_detects_breaks():
    g, _ = knit_fabric(4, 4, StitchParams(2.0, 2.0))
    assert continuity_check(g).ok
    d = g.to_dict()
    from surfweave.loom import FabricGraph
    # drop row 2 from the weft path
    row2 = {i for i, n in enumerate(d["nodes"]) if n["row"] == 2}
    d["weft_path"] = [i for i in d["weft_path"] if i not in row2]
    assert not continuity_check(FabricGraph.from_dict(d)).ok


def test_continuity_of_empty_fabric():
    from surfweave.weave import parse_wcode
    assert continuity_check(execute(parse_wcode("A\nE\n"))).ok


def test_hemisphere_fabric_curves_like_a_dome(hemi_verified):
    graph, res, _ = hemi_verified
    # positive angle deficit (Gaussian curvature) near the pole
    idx = {n: i for i, n in enumerate(graph.nodes)}
    quads = []
    for (r, g), i in idx.items():
        q = [(r, g), (r, g + 1), (r + 1, g + 1), (r + 1, g)]
        if all(k in idx for k in q):
            quads.append([idx[k] for k in q])
    deficit = angle_deficit(res.registered, quads)
    X = res.registered
    top = [v for v in deficit if X[v, 2] > 0.8 * X[:, 2].max()]
    assert top and np.mean([deficit[v] for v in top]) > 0


def test_continuity_needs_reversal_and_allows_empty_passes():
    from surfweave.weave import parse_wcode
    p = StitchParams(2.0, 2.0)
    with pytest.warns(UserWarning):
        same = parse_wcode("A\nB 010\nC 111\nD0\nB 101\nC 111\nD0\nE\n")
    c = continuity_check(execute(same, p))
    assert not c.ok and c.breaks[0][0] == 2
    # the middle pass interlaces nothing; rows 1 and 3 still alternate by parity
    gap = parse_wcode("A\nB 010\nC 111\nD0\nB 000\nC 111\nD1\nB 101\nC 111\nD0\nE\n")
    g = execute(gap, p)
    assert {r for r, _ in g.nodes} == {1, 3}
    assert continuity_check(g).ok

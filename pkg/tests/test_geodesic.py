import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import point_segment_distance
from surfweave.errors import ConstantField
from surfweave.geodesic import compute_field, field_gradient_direction
from surfweave.mesh import SurfacePatch, validate_patch
from surfweave.shapes import flat_grid, grid_index, hemisphere, hemisphere_midline, vest_centre_line, vest_front
from surfweave.source import SourceSpec, resolve_source


def field(patch, source):
    return compute_field(patch, resolve_source(patch, source))


def assert_lipschitz(f, rel=1e-6):
    V = f.patch.vertices
    e = f.patch.edges
    L = np.linalg.norm(V[e[:, 0]] - V[e[:, 1]], axis=1)
    jump = np.abs(f.distances[e[:, 0]] - f.distances[e[:, 1]])
    assert np.all(jump <= L * (1 + rel) + 1e-12)


def pole_equator_error(rings):
    h = validate_patch(hemisphere(25.0, rings))
    f = field(h, SourceSpec.point(0))
    eq = np.abs(h.vertices[:, 2]) < 1e-12
    return float(np.abs(f.distances[eq] - math.pi * 25.0 / 2).max()), f


def test_flat_square_corner_distance():
    g = validate_patch(flat_grid(10, 10, 10, 10))
    f = field(g, SourceSpec.point(0))
    far = grid_index(10, 10, 10)
    assert f.distances[far] == pytest.approx(math.sqrt(200.0), rel=1e-9)
    assert f.distances[0] == 0.0
    assert f.max_distance == f.distances.max()
    assert_lipschitz(f)


def test_hemisphere_pole_to_equator(hemi):
    f = field(hemi, SourceSpec.point(0))
    eq = np.abs(hemi.vertices[:, 2]) < 1e-12
    assert np.allclose(f.distances[eq], math.pi * 25.0 / 2, rtol=0.02)
    assert_lipschitz(f)


def test_refinement_reduces_error():
    errs = [pole_equator_error(r)[0] for r in (8, 16, 32)]
    assert errs[0] > errs[1] > errs[2]


def test_curve_source_zero_on_anchors_and_lipschitz(hemi):
    anchors = hemisphere_midline(hemi, 25.0)
    f = field(hemi, SourceSpec.curve(anchors))
    assert np.all(f.distances[anchors] == 0.0)
    assert np.all(f.distances >= 0)
    assert f.two_sided
    assert_lipschitz(f)


def test_curve_source_matches_segment_distance_on_flat_mesh():
    nx = 12
    g = validate_patch(flat_grid(12, 12, nx, nx))
    path = [grid_index(nx, 0, 2), grid_index(nx, 5, 6), grid_index(nx, 9, 6), grid_index(nx, 12, 11)]
    f = field(g, SourceSpec.curve(path))
    P = g.vertices[path]
    exact = np.array([min(point_segment_distance(v, P[k], P[k + 1]) for k in range(len(P) - 1))
                      for v in g.vertices])
    h = math.sqrt(2.0)  # longest edge
    assert np.abs(f.distances - exact).max() <= 0.1 * h
    assert np.all(f.distances >= exact - 1e-6)


def test_vest_centre_line_field():
    v = validate_patch(vest_front(n=30))
    f = field(v, SourceSpec.curve(vest_centre_line(v)))
    assert_lipschitz(f)
    assert f.two_sided


def test_deterministic(hemi):
    anchors = hemisphere_midline(hemi, 25.0)
    a = field(hemi, SourceSpec.curve(anchors)).distances
    b = field(hemi, SourceSpec.curve(anchors)).distances
    assert np.array_equal(a, b)


def test_csv_export(tmp_path):
    g = validate_patch(flat_grid(2, 1, 2, 1))
    f = field(g, SourceSpec.point(0))
    p = tmp_path / "d.csv"
    f.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "vertex_index,distance"
    assert len(lines) == g.n_vertices + 1
    assert float(lines[2].split(",")[1]) == pytest.approx(1.0)


def _single_triangle(pts):
    return validate_patch(SurfacePatch(np.asarray(pts, float), [[0, 1, 2]]))


def test_gradient_of_linear_field():
    t = _single_triangle([[0, 0, 0], [3, 0, 0], [0, 2, 0]])
    f = field(t, SourceSpec.point(0))
    g = field_gradient_direction(f, 0, values=t.vertices[:, 0])
    assert np.allclose(g, [1, 0, 0])


def test_gradient_constant_field():
    t = _single_triangle([[0, 0, 0], [3, 0, 0], [0, 2, 0]])
    f = field(t, SourceSpec.point(0))
    with pytest.raises(ConstantField):
        field_gradient_direction(f, 0, values=np.array([1.0, 1.0, 1.0]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=9, max_size=9), st.lists(st.floats(0, 10), min_size=3, max_size=3))
def test_gradient_matches_barycentric_formula(coords, d):
    P = np.array(coords).reshape(3, 3)
    n = np.cross(P[1] - P[0], P[2] - P[0])
    area2 = np.linalg.norm(n)
    if area2 < 1e-2 or np.ptp(d) < 1e-3:
        return
    t = _single_triangle(P)
    f = field(t, SourceSpec.point(0))
    nu = n / area2
    # closed form: grad = sum d_i (nu x e_i) / (2A), e_i the edge opposite vertex i
    e = [P[2] - P[1], P[0] - P[2], P[1] - P[0]]
    grad = sum(di * np.cross(nu, ei) for di, ei in zip(d, e)) / area2
    if np.linalg.norm(grad) < 1e-6:
        return
    got = field_gradient_direction(f, 0, values=np.array(d))
    assert np.allclose(got, grad / np.linalg.norm(grad), atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 7), st.integers(2, 7), st.data())
def test_flat_point_source_is_euclidean(nx, ny, data):
    g = validate_patch(flat_grid(2.0 * nx, 1.5 * ny, nx, ny))
    s = data.draw(st.integers(0, g.n_vertices - 1))
    f = field(g, SourceSpec.point(s))
    exact = np.linalg.norm(g.vertices - g.vertices[s], axis=1)
    assert np.allclose(f.distances, exact, rtol=1e-4, atol=1e-9)
    assert_lipschitz(f)

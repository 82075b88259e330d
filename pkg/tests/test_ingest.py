import numpy as np
import pytest

from surfweave.errors import (AnchorOffMesh, ConfigError, DegenerateTriangle, DisconnectedPolyline,
                              InconsistentOrientation, NonDiskTopology, NonManifoldEdge,
                              NonTriangleFace, ParseError)
from surfweave.mesh import SurfacePatch, format_mesh, load_mesh, parse_mesh, validate_patch
from surfweave.shapes import flat_grid, grid_index, hemisphere, icosahedron, square_annulus
from surfweave.source import SourceSpec, resolve_source

UNIT_SQUARE = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 3 4\n"


def test_minimal_mesh(tmp_path):
    p = tmp_path / "tri.obj"
    p.write_text("# one triangle\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    m = load_mesh(p)
    assert m.n_vertices == 3 and m.n_triangles == 1
    assert m.triangles.tolist() == [[0, 1, 2]]


def test_quad_face_rejected():
    with pytest.raises(NonTriangleFace) as exc:
        parse_mesh("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    assert exc.value.line == 5


@pytest.mark.parametrize("text", ["v 0 0\nf 1 2 3\n", "v 0 0 x\n", "v 0 0 0\nf 1 2 9\n", "", "f a b c\n"])
def test_malformed_mesh(text):
    with pytest.raises(ParseError):
        parse_mesh(text)


def test_face_tokens_with_slashes():
    m = parse_mesh("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n")
    assert m.triangles.tolist() == [[0, 1, 2]]


def test_hemisphere_triangle_count():
    m = parse_mesh(format_mesh(hemisphere(25.0, 40, target_triangles=4000)))
    assert m.n_triangles == 4000


def test_text_round_trip_idempotent():
    m = hemisphere(25.0, 12)
    once = format_mesh(parse_mesh(format_mesh(m)))
    assert format_mesh(parse_mesh(once)) == once


def test_unit_square_is_disk():
    p = validate_patch(parse_mesh(UNIT_SQUARE))
    assert p.euler == 1
    assert sorted(p.boundary_loop) == [0, 1, 2, 3]


def test_icosahedron_not_disk():
    with pytest.raises(NonDiskTopology) as exc:
        validate_patch(icosahedron())
    assert exc.value.euler == 2


def test_annulus_not_disk():
    with pytest.raises(NonDiskTopology) as exc:
        validate_patch(square_annulus())
    assert exc.value.euler == 0


def test_non_manifold_edge():
    m = parse_mesh(UNIT_SQUARE + "v 0.5 0.5 1\nf 1 3 5\n")
    with pytest.raises(NonManifoldEdge):
        validate_patch(m)


def test_inconsistent_orientation():
    m = parse_mesh("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 4 3\n")
    with pytest.raises(InconsistentOrientation):
        validate_patch(m)


def test_degenerate_triangle():
    m = parse_mesh("v 0 0 0\nv 1 0 0\nv 2 0 0\nv 1 1 0\nf 1 2 4\nf 2 3 4\nf 1 3 2\n")
    with pytest.raises((DegenerateTriangle, NonManifoldEdge, InconsistentOrientation, NonDiskTopology)):
        validate_patch(m)
    # a sliver below the area epsilon on an otherwise valid disk
    thin = SurfacePatch([[0, 0, 0], [1, 0, 0], [0.5, 1e-12, 0]], [[0, 1, 2]])
    with pytest.raises(DegenerateTriangle):
        validate_patch(thin)


def test_boundary_edge_count_arithmetic():
    p = validate_patch(flat_grid(4, 3, 4, 3))
    E = len(p.edges)
    F = p.n_triangles
    n_boundary = len(p.boundary_loop)
    n_interior = E - n_boundary
    assert n_boundary == 3 * F - 2 * n_interior


def test_point_source_at_vertex():
    p = validate_patch(parse_mesh(UNIT_SQUARE))
    src = resolve_source(p, SourceSpec.point(0))
    assert src.kind == "point"
    assert np.array_equal(src.point, [0, 0, 0])


def test_adjacent_boundary_vertices_single_segment():
    p = validate_patch(parse_mesh(UNIT_SQUARE))
    src = resolve_source(p, SourceSpec.curve([0, 1]))
    assert src.n_segments == 1
    assert src.length() == pytest.approx(1.0)


def test_polyline_split_at_triangle_crossings():
    g = validate_patch(flat_grid(3, 1, 3, 1, diagonal="same"))
    # straight line along y = 0.5 from the left edge to the right edge
    source = SourceSpec.from_dict({"kind": "curve", "points": [[1, 0.5, 0.0, 0.5], [4, 0.0, 0.5, 0.5]]})
    src = resolve_source(g, source)
    # exact count: the line crosses 3 diagonals and 2 vertical edges -> 6 triangles
    assert src.n_segments == 6
    assert len({s.triangle for s in src.segments}) == 6
    assert src.length() == pytest.approx(3.0)


def test_anchor_off_mesh():
    p = validate_patch(parse_mesh(UNIT_SQUARE))
    with pytest.raises(AnchorOffMesh):
        resolve_source(p, SourceSpec.point(17))
    with pytest.raises(AnchorOffMesh):
        resolve_source(p, SourceSpec.from_dict({"kind": "point", "points": [[0, 0.8, 0.8, 0.8]]}))


def test_disconnected_polyline():
    p = validate_patch(parse_mesh(UNIT_SQUARE))
    with pytest.raises(DisconnectedPolyline):
        resolve_source(p, SourceSpec.curve([0, 0]))


def test_source_shorthand_and_json(tmp_path):
    assert SourceSpec.parse("point:7") == SourceSpec.point(7)
    assert SourceSpec.parse("curve:0,5,9") == SourceSpec.curve([0, 5, 9])
    assert SourceSpec.parse('{"kind": "curve", "vertices": [1, 2]}') == SourceSpec.curve([1, 2])
    f = tmp_path / "s.json"
    f.write_text('{"kind": "point", "vertices": [3]}')
    assert SourceSpec.parse(f"@{f}") == SourceSpec.point(3)
    source = SourceSpec.curve([4, 5, 6])
    assert SourceSpec.from_dict(source.to_dict()) == source
    for bad in ("line:1,2", "curve:1", "point:1,2", "curve:a,b"):
        with pytest.raises(ConfigError):
            SourceSpec.parse(bad)


def test_grid_index_matches_vertex():
    g = flat_grid(4, 2, 4, 2)
    assert np.array_equal(g.vertices[grid_index(4, 3, 1)], [3.0, 1.0, 0.0])

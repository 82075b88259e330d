import numpy as np
import pytest
from hypothesis import given, settings

from oracles import fuzz_corpus
from surfweave.errors import ConfigError, ProgramNotInitialized, TripleOrderViolation
from surfweave.isocurves import StitchParams
from surfweave.knitmap import KnittingMap
from surfweave.loom import WARP, WEFT, FabricGraph, execute, row_weft_lengths, warp_release_totals, weft_length_total
from surfweave.weave import WeavingMap, convert_map, emit_wcode, map_statistics, parse_wcode

from test_weave import ALL_KNIT_2X2, knitting_maps

P = StitchParams(s_w=2.0, s_h=1.5)


def run(text, params=P):
    return execute(parse_wcode(text), params)


def test_empty_program():
    g = run("A\nE\n")
    assert g.nodes == () and g.edges == () and g.n_rows == 0


def test_all_knit_2x2_fabric():
    g = run(ALL_KNIT_2X2)
    assert len(g.nodes) == 6
    assert warp_release_totals(g) == [4.5, 4.5, 4.5]
    assert len(g.weft_path) == 6
    assert weft_length_total(g) == pytest.approx(6.0)
    assert row_weft_lengths(g) == [2.0, 2.0, 2.0]
    # rows alternate direction: row 1 is D1 (right to left)
    gaps = [[g.nodes[n][1] for n in g.weft_path if g.nodes[n][0] == r] for r in (1, 2, 3)]
    assert gaps == [[2, 1], [1, 2], [2, 1]]
    warps = g.warp_edges
    assert len(warps) == 4
    assert all(e.rest_length == pytest.approx(1.5) and not e.floating for e in warps)


def test_sewn_column_rests_short():
    # warp 2 is held (Blue) on rows 1 and 2, so the chain at gap 2 from row 1
    # to row 3 rests below the two-row span
    w = WeavingMap.from_rows(["GMBG", "MGBM", "GMGG"])
    g = execute(emit_wcode(w), P)
    (e,) = [e for e in g.warp_edges if e.line == 2]
    span = (g.nodes[e.b][0] - g.nodes[e.a][0]) * P.s_h
    assert e.rest_length == pytest.approx(2.25) and e.rest_length < span and e.floating


def test_program_order_errors():
    with pytest.raises(ProgramNotInitialized):
        execute(parse_wcode("B 01\nC 11\nD0\nE\n"))
    with pytest.raises(TripleOrderViolation):
        execute(parse_wcode("A\nC 11\nB 01\nD0\nE\n"))
    with pytest.raises(TripleOrderViolation):
        execute(parse_wcode("A\nB 01\nD0\nE\n"))
    with pytest.raises(TripleOrderViolation):
        execute(parse_wcode("A\nB 01\nC 11\nE\n"))


def test_reset_discards_earlier_rows():
    g = run("A\nB 011\nC 111\nD0\nA\nB 010\nC 111\nD1\nE\n")
    assert g.n_rows == 1 and len(g.nodes) == 2


def test_json_round_trip(tmp_path):
    g = run(ALL_KNIT_2X2)
    g2 = FabricGraph.from_dict(g.to_dict())
    assert g2.to_json() == g.to_json()
    f = tmp_path / "fabric.json"
    f.write_text(g.to_json())
    assert FabricGraph.load(f).to_json() == g.to_json()
    with pytest.raises(ConfigError):
        FabricGraph.from_dict({"nodes": []})


@settings(max_examples=150, deadline=None)
@given(knitting_maps())
def test_fabric_matches_program(rows):
    W = convert_map(KnittingMap.from_rows(rows))
    prog = emit_wcode(W)
    g = execute(prog, P)
    # one node per pair of neighbouring warps that disagree
    B = np.array([[c == "1" for c in r.jacquard] for r in prog.rows])
    assert len(g.nodes) == int((B[:, :-1] != B[:, 1:]).sum())
    assert warp_release_totals(g) == map_statistics(W, P.s_h)["release_totals"]
    assert sorted(g.weft_path) == list(range(len(g.nodes)))
    rows_seen = [g.nodes[n][0] for n in g.weft_path]
    assert rows_seen == sorted(rows_seen)
    for e in g.edges:
        assert e.rest_length >= 0
        if e.kind == WEFT:
            assert g.nodes[e.a][0] == g.nodes[e.b][0] == e.line
        else:
            assert g.nodes[e.a][1] == g.nodes[e.b][1] == e.line
            assert g.nodes[e.a][0] < g.nodes[e.b][0]
    assert execute(prog, P).to_json() == g.to_json()


def test_release_history_is_monotone():
    # warp edges never have negative rest and sum per column to released counts
    for rows in fuzz_corpus(200, seed=7):
        g = execute(emit_wcode(convert_map(KnittingMap.from_rows(rows))), P)
        assert all(e.rest_length >= 0 for e in g.edges if e.kind == WARP)
        assert max(g.released, default=0) <= g.n_rows

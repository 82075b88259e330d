"""Virtual loom: runs a W-code program and records the woven fabric as a graph."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ProgramNotInitialized, TripleOrderViolation
from .isocurves import StitchParams
from .weave import WCodeProgram

LEFT, RIGHT = "left", "right"
WEFT, WARP = "weft", "warp"


@dataclass(frozen=True)
class Edge:
    kind: str  # WEFT or WARP
    a: int
    b: int
    rest_length: float
    line: int  # row for weft edges, gap (1-based) for warp edges
    floating: bool = False


@dataclass(frozen=True, eq=False)
class FabricGraph:
    """Stitch nodes at (row, gap); gap g sits between warps g and g+1 (1-based)."""

    nodes: tuple  # (row, gap)
    edges: tuple
    weft_path: tuple  # node ids in shuttle order over the whole program
    released: tuple  # per-warp count of release events
    trim: tuple  # per-row weft slack outside the outermost stitches, mm
    n_warps: int
    params: StitchParams
    tags: dict = field(default_factory=dict)

    @property
    def weft_edges(self):
        return [e for e in self.edges if e.kind == WEFT]

    @property
    def warp_edges(self):
        return [e for e in self.edges if e.kind == WARP]

    @property
    def n_rows(self):
        return len(self.trim)

    def positions_grid(self):
        """Rest-state coordinates (gap * s_w, row * s_h) per node."""
        p = self.params
        rc = np.array(self.nodes, dtype=float).reshape(-1, 2)
        return np.column_stack([rc[:, 1] * p.s_w, rc[:, 0] * p.s_h])

    def row_nodes(self):
        rows = {}
        for nid in self.weft_path:
            rows.setdefault(self.nodes[nid][0], []).append(nid)
        return rows

    def to_dict(self):
        return {
            "kind": "fabric_graph",
            "s_w": self.params.s_w,
            "s_h": self.params.s_h,
            "n_warps": self.n_warps,
            "n_rows": self.n_rows,
            "nodes": [{"row": r, "col": g} for r, g in self.nodes],
            "edges": [
                {"type": e.kind, "a": e.a, "b": e.b, "rest_length": e.rest_length,
                 "line": e.line, "float": e.floating}
                for e in self.edges
            ],
            "weft_path": list(self.weft_path),
            "released": list(self.released),
            "trim": list(self.trim),
            "tags": {str(k): v for k, v in sorted(self.tags.items())},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        try:
            params = StitchParams(float(d["s_w"]), float(d["s_h"]))
            nodes = tuple((int(n["row"]), int(n["col"])) for n in d["nodes"])
            edges = tuple(
                Edge(e["type"], int(e["a"]), int(e["b"]), float(e["rest_length"]),
                     int(e["line"]), bool(e.get("float", False)))
                for e in d["edges"]
            )
            return cls(nodes, edges, tuple(int(i) for i in d["weft_path"]),
                       tuple(int(x) for x in d["released"]), tuple(float(x) for x in d["trim"]),
                       int(d["n_warps"]), params, dict(d.get("tags", {})))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed fabric graph JSON: {exc}") from None

    @classmethod
    def load(cls, path):
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read fabric graph {path}: {exc}") from None
        return cls.from_dict(data)


@dataclass
class MachineState:
    jacquard: np.ndarray  # bool per warp, True = up
    released: np.ndarray  # int release events per warp
    row_counter: int = 0
    shuttle_side: str = LEFT


def execute(program: WCodeProgram, params: StitchParams | None = None,
            warp_tags: dict | None = None) -> FabricGraph:
    """Run ``program``; A resets, each B/C/D triple weaves one row, E stops.

    A node forms at gap g when warps g and g+1 disagree during the pass. Weft
    edges join consecutive nodes of a pass. Consecutive nodes at the same gap
    are joined by a warp edge whose rest length is s_h times the mean number
    of releases of warps g and g+1 over rows (r1, r2].
    """
    params = params or StitchParams()
    width = program.width
    state = None
    expect = "B"  # next op inside a triple
    nodes, edges, path, trim = [], [], [], []
    history = []  # released counts after each row
    bits_c = None

    for ins in program.instructions:
        op = ins.op
        if op == "A":
            if state is not None and expect != "B":
                raise TripleOrderViolation(f"A inside a row, expected {expect}", ins.line, ins.column)
            state = MachineState(np.zeros(width, bool), np.zeros(width, np.int64))
            nodes, edges, path, trim, history = [], [], [], [], []
            expect = "B"
            continue
        if state is None:
            raise ProgramNotInitialized(f"{op} before A", ins.line, ins.column)
        if op == "E":
            if expect != "B":
                raise TripleOrderViolation(f"E inside a row, expected {expect}", ins.line, ins.column)
            break
        if op != expect:
            raise TripleOrderViolation(f"got {op}, expected {expect}", ins.line, ins.column)
        if op == "B":
            state.jacquard = np.frombuffer(ins.arg.encode(), np.uint8) == ord("1")
            expect = "C"
        elif op == "C":
            bits_c = np.frombuffer(ins.arg.encode(), np.uint8) == ord("1")
            state.released = state.released + bits_c
            expect = "D"
        else:
            direction = int(ins.arg)
            state.row_counter += 1
            r = state.row_counter
            gaps = np.flatnonzero(state.jacquard[:-1] != state.jacquard[1:]) + 1
            order = gaps if direction == 0 else gaps[::-1]
            ids = list(range(len(nodes), len(nodes) + len(order)))
            nodes.extend((r, int(g)) for g in order)
            for a, b in zip(ids, ids[1:]):
                gap = abs(nodes[b][1] - nodes[a][1])
                edges.append(Edge(WEFT, a, b, gap * params.s_w, r))
            path.extend(ids)
            span = (gaps[-1] - gaps[0]) * params.s_w if len(gaps) else 0.0
            trim.append(float((width - 1) * params.s_w - span))
            history.append(state.released.copy())
            state.shuttle_side = RIGHT if state.shuttle_side == LEFT else LEFT
            expect = "B"
    else:
        if state is None:
            raise ProgramNotInitialized("program never starts with A")

    edges.extend(_warp_edges(nodes, history, params))
    released = tuple(int(x) for x in state.released) if state is not None else ()
    return FabricGraph(tuple(nodes), tuple(edges), tuple(path), released, tuple(trim),
                       width, params, dict(warp_tags or {}))


def _warp_edges(nodes, history, params):
    out = []
    by_gap = {}
    for nid, (r, g) in enumerate(nodes):
        by_gap.setdefault(g, []).append((r, nid))
    for g in sorted(by_gap):
        chain = sorted(by_gap[g])
        for (r1, a), (r2, b) in zip(chain, chain[1:]):
            # the stitch is held by warps g and g+1; its rest is their mean release
            h1, h2 = history[r1 - 1], history[r2 - 1]
            count = 0.5 * (int(h2[g - 1] - h1[g - 1]) + int(h2[g] - h1[g]))
            rest = count * params.s_h
            out.append(Edge(WARP, a, b, rest, g, floating=(r2 - r1 > 1 and rest > params.s_h)))
    return out


def warp_release_totals(graph: FabricGraph):
    """Released length per warp, mm (integer counts times s_h)."""
    return [c * graph.params.s_h for c in graph.released]


def weft_length_total(graph: FabricGraph):
    return float(sum(e.rest_length for e in graph.edges if e.kind == WEFT))


def row_weft_lengths(graph: FabricGraph):
    out = [0.0] * graph.n_rows
    for e in graph.edges:
        if e.kind == WEFT:
            out[e.line - 1] += e.rest_length
    return out

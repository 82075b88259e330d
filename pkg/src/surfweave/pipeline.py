"""End-to-end runs: surface -> maps -> W-code -> fabric -> verification report.

Every stage is a plain function returning in-memory results; ``*_artifacts``
turn results into ``{filename: bytes}`` and ``write_outputs`` publishes them
atomically, so a failing run never leaves a partial directory behind.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plotting
from .config import PipelineConfig
from .errors import ConfigError, InputError
from .geodesic import GeodesicField, compute_field
from .isocurves import IsocurveSet, SegmentedCurves, extract_isocurves, sample_segments, trim_short_ends
from .knitmap import KnittingMap, validate_rules
from .layout import StitchMesh, build_stitch_mesh, emit_knitting_map
from .loom import FabricGraph, execute
from .mesh import SurfacePatch, ValidatedPatch, parse_mesh, validate_patch
from .relax import RelaxedFabric, relax
from .source import SourceSpec, resolve_source
from .verify import (VerificationReport, continuity_check, path_spacing, register,
                     shape_error, thread_length_report)
from .weave import WCodeProgram, WeavingMap, convert_map, emit_wcode, map_statistics

PPM_SCALE = 4


def read_mesh(path) -> tuple[bytes, SurfacePatch]:
    """Raw bytes (for hashing) and the parsed mesh."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read mesh {path}: {exc}") from None
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise InputError(f"mesh {path} is not UTF-8 text") from None
    return data, parse_mesh(text)


def source_spec(config: PipelineConfig) -> SourceSpec:
    src = config.source
    if src is None:
        raise ConfigError("a weaving source is required (--source or config 'source')")
    if isinstance(src, SourceSpec):
        return src
    if isinstance(src, dict):
        return SourceSpec.from_dict(src)
    try:
        return SourceSpec.parse(str(src))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read source {src!r}: {exc}") from None


# --- compile -------------------------------------------------------------------

@dataclass
class CompileResult:
    patch: ValidatedPatch
    field: GeodesicField
    curves: IsocurveSet
    segmented: SegmentedCurves
    stitch_mesh: StitchMesh
    knitting_map: KnittingMap
    weaving_map: WeavingMap
    program: WCodeProgram
    stats: dict
    timings: dict = field(default_factory=dict)


def compile_patch(patch: SurfacePatch, config: PipelineConfig) -> CompileResult:
    """Surface patch to knitting map, weaving map and W-code."""
    params = config.params
    source = source_spec(config)
    t = {}
    t0 = time.perf_counter()
    vp = patch if isinstance(patch, ValidatedPatch) else validate_patch(patch)
    fld = compute_field(vp, resolve_source(vp, source))
    t["field"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    curves = trim_short_ends(extract_isocurves(vp, fld, params, flip=config.flip), params.s_h)
    seg = sample_segments(curves, params)
    sm = build_stitch_mesh(seg, params, config.first_row_direction,
                           polylines=[c.points for c in curves.curves])
    K = emit_knitting_map(sm)
    validate_rules(K).raise_if_failed()
    t["map"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    W = convert_map(K)
    program = emit_wcode(W, params.max_warp_threads)
    t["wcode"] = time.perf_counter() - t0
    return CompileResult(vp, fld, curves, seg, sm, K, W, program,
                         map_statistics(W, params.s_h), t)


def compile_artifacts(res: CompileResult) -> dict:
    files = {
        "K.json": res.knitting_map.to_json().encode(),
        "W.json": res.weaving_map.to_json().encode(),
        "program.wcode": res.program.to_text().encode(),
        "K.ppm": res.knitting_map.to_ppm(PPM_SCALE),
        "W.ppm": res.weaving_map.to_ppm(PPM_SCALE),
        "stats.json": _json(res.stats),
        "K.png": _png(plotting.plot_map, res.knitting_map, title="knitting map"),
        "W.png": _png(plotting.plot_map, res.weaving_map, title="weaving map"),
    }
    return files


# --- simulate ------------------------------------------------------------------

def simulate(program: WCodeProgram, config: PipelineConfig) -> FabricGraph:
    tags = {int(c): "tagged" for c in config.tagged_columns}
    return execute(program, config.params, tags)


def simulate_artifacts(graph: FabricGraph) -> dict:
    return {"fabric.json": graph.to_json().encode()}


def fabric_summary(graph: FabricGraph) -> dict:
    return {
        "nodes": len(graph.nodes),
        "weft_edges": len(graph.weft_edges),
        "warp_edges": len(graph.warp_edges),
        "rows": graph.n_rows,
        "warps": graph.n_warps,
        "release_totals": [c * graph.params.s_h for c in graph.released],
    }


# --- verify --------------------------------------------------------------------

@dataclass
class VerifyResult:
    report: VerificationReport
    relaxed: RelaxedFabric
    registered: np.ndarray  # fabric nodes after the rigid transform
    violations: list
    thresholds: dict

    def to_dict(self):
        d = self.report.to_dict()
        d["thresholds"] = self.thresholds
        d["violations"] = self.violations
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def verify(graph: FabricGraph, target: SurfacePatch, config: PipelineConfig,
           stats=None, strict=False) -> VerifyResult:
    """Relax the fabric, register it onto ``target`` and measure it.

    ``stats`` are the weaving map statistics the fabric was compiled from; the
    fabric's own release counts stand in when they are not available.
    """
    rel = relax(graph, seed=config.seed, method=config.relax_method,
                max_iter=config.max_iter, bend=config.bend_weight, strict=strict)
    reg = register(rel.positions, target, seed=config.seed)
    X = reg.apply(rel.positions)
    shape = shape_error(X, target, config.sample_count, seed=config.seed, graph=graph)
    if stats is None:
        stats = {"release_totals": [c * graph.params.s_h for c in graph.released]}
    threads = thread_length_report(graph, X, stats)
    spacing = []
    if len(config.tagged_columns) >= 2:
        spacing = path_spacing(graph, X, config.tagged_columns, config.tag_spacing)
    cont = continuity_check(graph)
    relaxation = {"method": config.relax_method, "energy": rel.energy,
                  "iterations": rel.iterations, "grad_norm": rel.grad_norm,
                  "converged": rel.converged, "seed": config.seed,
                  "bend_weight": config.bend_weight}
    report = VerificationReport(shape, threads, spacing, cont, reg, relaxation)

    thresholds = {"shape_rms_max": config.rms_threshold, "shape_max_max": config.max_threshold}
    violations = []
    if shape.rms > config.rms_threshold:
        violations.append(f"shape RMS {shape.rms:.4g} mm > {config.rms_threshold:.4g} mm")
    if shape.max > config.max_threshold:
        violations.append(f"shape max {shape.max:.4g} mm > {config.max_threshold:.4g} mm")
    if not cont.ok:
        violations.append("weft continuity broken")
    if not threads["release_totals_match"]:
        violations.append("fabric release totals differ from the weaving map")
    return VerifyResult(report, rel, X, violations, thresholds)


def verify_artifacts(res: VerifyResult, graph: FabricGraph, target: SurfacePatch) -> dict:
    shape = res.report.shape
    return {
        "report.json": res.to_json().encode(),
        "histogram.csv": shape.histogram_csv().encode(),
        "histogram.png": _png(plotting.plot_histogram, shape),
        "fabric.png": _png(plotting.plot_fabric, res.registered, graph, target),
        "thread_lengths.png": _png(plotting.plot_thread_lengths, res.report.thread_length),
    }


# --- output bookkeeping ----------------------------------------------------------

def run_id(kind: str, *blobs: bytes) -> str:
    """Content hash naming a run directory."""
    h = hashlib.sha256(kind.encode())
    for b in blobs:
        h.update(len(b).to_bytes(8, "little"))
        h.update(b)
    return h.hexdigest()[:16]


def default_out_dir(kind, *blobs, root="runs") -> Path:
    return Path(root) / f"{kind}-{run_id(kind, *blobs)}"


def write_outputs(out_dir, files: dict) -> Path:
    """Write all files or none: stage in a sibling temp dir, then move in."""
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.", dir=out_dir.parent))
    try:
        for name, data in sorted(files.items()):
            (tmp / name).write_bytes(data)
        mask = os.umask(0)
        os.umask(mask)
        os.chmod(tmp, 0o777 & ~mask)
        if out_dir.exists():
            for name in sorted(files):
                os.replace(tmp / name, out_dir / name)
            tmp.rmdir()
        else:
            os.replace(tmp, out_dir)
    finally:
        if tmp.exists():
            shutil.rmtree(tmp, ignore_errors=True)
    return out_dir


def _json(obj) -> bytes:
    return (json.dumps(obj, indent=1, sort_keys=True) + "\n").encode()


def _png(fn, *args, **kw) -> bytes:
    buf = io.BytesIO()
    fn(*args, path=buf, **kw)
    return buf.getvalue()

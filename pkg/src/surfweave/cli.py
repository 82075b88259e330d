"""``surfweave`` command line: compile, simulate, verify, pipeline.

Settings come from built-in defaults, then the JSON file given by --config,
then command-line flags (flags win). Outputs go to --out, or to
``runs/<command>-<hash>`` where the hash covers the input bytes and the
effective config.

Exit codes: 0 ok, 1 unexpected library error, 2 bad input or config,
3 topology or field failure, 4 map rule violation, 5 W-code error,
6 verification failure or threshold exceeded.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import pipeline as pl
from .config import PipelineConfig
from .errors import InputError, SurfweaveError, ThresholdExceeded
from .loom import FabricGraph
from .weave import parse_wcode


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="surfweave", description="Surface to W-code compiler and loom simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, mesh=False, source=False):
        p.add_argument("--config", help="flat JSON config file")
        p.add_argument("--sw", type=float, help="stitch width s_w in mm")
        p.add_argument("--sh", type=float, help="stitch height s_h in mm")
        p.add_argument("--seed", type=int, help="relaxation and sampling seed")
        p.add_argument("--out", help="output directory (default: runs/<command>-<hash>)")
        p.add_argument("--strict", action="store_true",
                       help="treat warnings (non-convergence, direction order) as errors")
        if mesh:
            p.add_argument("--mesh", required=True, help="ASCII v/f triangle mesh")
        if source:
            p.add_argument("--source", help="point:V, curve:V1,V2,..., @file.json or inline JSON")

    common(sub.add_parser("compile", help="mesh -> K/W maps and W-code"), mesh=True, source=True)
    p = sub.add_parser("simulate", help="W-code -> fabric graph")
    p.add_argument("wcode", help="W-code program file")
    common(p)
    p = sub.add_parser("verify", help="fabric graph + target mesh -> report")
    p.add_argument("fabric", help="fabric.json from simulate")
    common(p, mesh=True)
    common(sub.add_parser("pipeline", help="compile, simulate and verify in one run"),
           mesh=True, source=True)
    return ap


def load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    cfg = cfg.override(s_w=args.sw, s_h=args.sh, seed=args.seed,
                       source=getattr(args, "source", None))
    cfg.params  # s_h is required by every command; fail before any work
    if cfg.source is not None:
        # inline the source so the run hash sees its content, not a file name
        cfg = cfg.override(source=pl.source_spec(cfg).to_dict())
    return cfg


def _read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _out(args, kind, *blobs):
    return Path(args.out) if args.out else pl.default_out_dir(kind, *blobs)


def _print_stats(stats):
    print(f"warps: {stats['warp_count']}  weft rows: {stats['weft_rows']}  "
          f"blue: {stats['blue']}  magenta: {stats['magenta']}  green: {stats['green']}")
    print(f"release totals (mm): min {min(stats['release_totals']):g}  "
          f"max {max(stats['release_totals']):g}")


def _print_fabric(graph):
    s = pl.fabric_summary(graph)
    print(f"fabric: {s['nodes']} nodes, {s['weft_edges']} weft edges, "
          f"{s['warp_edges']} warp edges, {s['rows']} rows x {s['warps']} warps")
    print("release totals (mm): " + " ".join(f"{x:g}" for x in s["release_totals"]))


def _print_report(res):
    sh = res.report.shape
    rel = res.relaxed
    print(f"relaxation: {rel.iterations} iterations, energy {rel.energy:.4g}, "
          f"max |grad| {rel.grad_norm:.3g}{'' if rel.converged else ' (not converged)'}")
    print(f"shape error: mean {sh.mean:.3f}  RMS {sh.rms:.3f}  max {sh.max:.3f} mm "
          f"({sh.count} samples)")
    print(f"weft continuity: {'ok' if res.report.continuity.ok else 'BROKEN'}")
    for v in res.violations:
        print(f"threshold violated: {v}")


def _check_thresholds(violations):
    if violations:
        raise ThresholdExceeded("; ".join(violations))


def cmd_compile(args):
    cfg = load_config(args)
    mesh_bytes, patch = pl.read_mesh(args.mesh)
    res = pl.compile_patch(patch, cfg)
    files = pl.compile_artifacts(res)
    files["config.json"] = cfg.to_json().encode()
    out = pl.write_outputs(_out(args, "compile", mesh_bytes, cfg.to_json().encode()), files)
    _print_stats(res.stats)
    print(f"map + W-code time: {res.timings['field'] + res.timings['map'] + res.timings['wcode']:.2f} s")
    print(f"wrote {out}")


def cmd_simulate(args):
    cfg = load_config(args)
    data = _read(args.wcode)
    program = parse_wcode(data, strict=args.strict)
    graph = pl.simulate(program, cfg)
    files = pl.simulate_artifacts(graph)
    out = pl.write_outputs(_out(args, "simulate", data, cfg.to_json().encode()), files)
    _print_fabric(graph)
    print(f"wrote {out}")


def cmd_verify(args):
    cfg = load_config(args)
    fabric_bytes = _read(args.fabric)
    graph = FabricGraph.load(args.fabric)
    mesh_bytes, target = pl.read_mesh(args.mesh)
    res = pl.verify(graph, target, cfg, strict=args.strict)
    files = pl.verify_artifacts(res, graph, target)
    out = pl.write_outputs(_out(args, "verify", fabric_bytes, mesh_bytes, cfg.to_json().encode()),
                           files)
    _print_report(res)
    print(f"wrote {out}")
    _check_thresholds(res.violations)


def cmd_pipeline(args):
    cfg = load_config(args)
    mesh_bytes, patch = pl.read_mesh(args.mesh)
    t0 = time.perf_counter()
    res = pl.compile_patch(patch, cfg)
    t_map = time.perf_counter() - t0
    graph = pl.simulate(res.program, cfg)
    ver = pl.verify(graph, res.patch, cfg, stats=res.stats, strict=args.strict)
    files = pl.compile_artifacts(res)
    files.update(pl.simulate_artifacts(graph))
    files.update(pl.verify_artifacts(ver, graph, res.patch))
    files["config.json"] = cfg.to_json().encode()
    out = pl.write_outputs(_out(args, "pipeline", mesh_bytes, cfg.to_json().encode()), files)
    _print_stats(res.stats)
    _print_fabric(graph)
    _print_report(ver)
    print(f"map + W-code time: {t_map:.2f} s, total: {time.perf_counter() - t0:.2f} s")
    print(f"wrote {out}")
    _check_thresholds(ver.violations)


COMMANDS = {"compile": cmd_compile, "simulate": cmd_simulate,
            "verify": cmd_verify, "pipeline": cmd_pipeline}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except SurfweaveError as exc:
        print(f"surfweave {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())

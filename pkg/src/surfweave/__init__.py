"""Compile triangle-mesh surface patches into W-code for a 3D weaving loom,
run the code on a simulated loom, and check the woven shape against the target.
"""

from .config import PipelineConfig
from .errors import SurfweaveError
from .geodesic import GeodesicField, compute_field
from .isocurves import StitchParams, extract_isocurves, sample_segments
from .knitmap import KnittingMap, validate_rules
from .layout import build_stitch_mesh, emit_knitting_map
from .loom import FabricGraph, execute
from .mesh import SurfacePatch, load_mesh, parse_mesh, validate_patch
from .source import SourceSpec, resolve_source
from .verify import register, shape_error
from .weave import WCodeProgram, WeavingMap, convert_map, emit_wcode, map_statistics, parse_wcode

__version__ = "0.1.0"

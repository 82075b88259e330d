"""Exception hierarchy. Each family carries the CLI exit code it maps to."""

from __future__ import annotations


class SurfweaveError(Exception):
    exit_code = 1


# --- input (exit 2) ---------------------------------------------------------

class InputError(SurfweaveError):
    exit_code = 2


class ParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonTriangleFace(ParseError):
    pass


class ConfigError(InputError):
    pass


# --- topology / field (exit 3) ----------------------------------------------

class TopologyError(SurfweaveError):
    exit_code = 3


class ValidationError(TopologyError):
    """Base for mesh validation failures; ``prop`` names the violated property."""

    prop = "unknown"


class NonManifoldEdge(ValidationError):
    prop = "manifold"

    def __init__(self, edge):
        self.edge = tuple(edge)
        super().__init__(f"edge {self.edge} is shared by more than two triangles")


class NonDiskTopology(ValidationError):
    prop = "disk_topology"

    def __init__(self, euler, n_boundary_loops):
        self.euler = euler
        self.n_boundary_loops = n_boundary_loops
        super().__init__(
            f"patch is not a disk: Euler characteristic {euler}, "
            f"{n_boundary_loops} boundary loop(s)"
        )


class InconsistentOrientation(ValidationError):
    prop = "orientation"

    def __init__(self, edge):
        self.edge = tuple(edge)
        super().__init__(f"edge {self.edge} is traversed twice in the same direction")


class DegenerateTriangle(ValidationError):
    prop = "non_degenerate"

    def __init__(self, triangle, area):
        self.triangle = triangle
        self.area = area
        super().__init__(f"triangle {triangle} has area {area:.3e} mm^2")


class AnchorOffMesh(TopologyError):
    pass


class DisconnectedPolyline(TopologyError):
    pass


class ConstantField(TopologyError):
    pass


class ClosedIsocurveLoop(TopologyError):
    def __init__(self, k, level):
        self.k = k
        self.level = level
        super().__init__(
            f"isocurve {k} at field value {level:.6g} mm forms a closed loop; "
            "the field has an interior extremum - cut the model with darts so the "
            "extremum lies on the boundary, or choose another source"
        )


class DisconnectedIsocurve(TopologyError):
    def __init__(self, k, level, n_components):
        self.k = k
        self.level = level
        self.n_components = n_components
        super().__init__(
            f"isocurve {k} at field value {level:.6g} mm splits into "
            f"{n_components} open pieces"
        )


class CurveShorterThanStitch(TopologyError):
    def __init__(self, index, length, s_h):
        self.index = index
        self.length = length
        super().__init__(f"isocurve {index} has length {length:.4g} mm < stitch height {s_h} mm")


# --- manufacturing rules (exit 4) -------------------------------------------

class RuleViolation(SurfweaveError):
    exit_code = 4

    def __init__(self, rule, row=None, col=None, detail=""):
        self.rule = rule
        self.row = row
        self.col = col
        self.detail = detail
        where = []
        if row is not None:
            where.append(f"row {row}")
        if col is not None:
            where.append(f"column {col}")
        loc = f" at {', '.join(where)}" if where else ""
        super().__init__(f"rule {rule} violated{loc}: {detail}".rstrip(": "))


class TooManyWarps(RuleViolation):
    def __init__(self, n_warps, limit):
        super().__init__("warps", detail=f"{n_warps} warp threads needed, machine has {limit}")
        self.n_warps = n_warps
        self.limit = limit


# --- W-code / loom (exit 5) -------------------------------------------------

class WCodeError(SurfweaveError):
    exit_code = 5

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{line}:{column}: {message}"
        super().__init__(message)


class UnknownCommand(WCodeError):
    pass


class BitLengthMismatch(WCodeError):
    pass


class MissingTerminator(WCodeError):
    pass


class DirectionNotAlternating(WCodeError):
    pass


class ProgramNotInitialized(WCodeError):
    pass


class TripleOrderViolation(WCodeError):
    pass


class DirectionNotAlternatingWarning(UserWarning):
    pass


# --- verification (exit 6) --------------------------------------------------

class VerificationError(SurfweaveError):
    exit_code = 6


class ThresholdExceeded(VerificationError):
    pass


class NonConvergence(VerificationError):
    pass


class DegenerateConfiguration(VerificationError):
    pass


class TaggedColumnWithoutStitches(VerificationError):
    pass

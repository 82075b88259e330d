"""Weaving map W from a knitting map, and W-code programs (emit and parse)."""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BitLengthMismatch,
    ConfigError,
    DirectionNotAlternating,
    DirectionNotAlternatingWarning,
    MissingTerminator,
    TooManyWarps,
    UnknownCommand,
    WCodeError,
)
from .knitmap import CYAN, GRAY, KNIT, YELLOW, KnittingMap, LetterGrid

GREEN, MAGENTA, BLUE = "G", "M", "B"
W_COLORS = {GREEN: (0, 160, 0), MAGENTA: (255, 0, 255), BLUE: (0, 0, 255)}

# what each weaving-map color asks of the machine
CELL_SEMANTICS = {
    BLUE: {"jacquard": "down", "beam": "hold"},
    MAGENTA: {"jacquard": "up", "beam": "release"},
    GREEN: {"jacquard": "down", "beam": "release"},
}


class WeavingMap(LetterGrid):
    """(N+1) x (M+1) grid of Green/Magenta/Blue; ``first_direction`` is the
    shuttle direction (0 left-to-right, 1 right-to-left) of W row 1."""

    states = (GREEN, MAGENTA, BLUE)
    colors = W_COLORS

    def __init__(self, cells, first_direction=1):
        super().__init__(cells)
        if first_direction not in (0, 1):
            raise ConfigError("first_direction is 0 or 1")
        self.first_direction = first_direction

    def __eq__(self, other):
        return super().__eq__(other) and self.first_direction == other.first_direction

    def direction(self, i):
        """Shuttle direction of W row ``i`` (1-based); rows alternate."""
        return self.first_direction ^ ((i - 1) & 1)

    def to_dict(self):
        return {
            "kind": "weaving_map",
            "rows": self.n_rows,
            "cols": self.n_cols,
            "first_direction": self.first_direction,
            "row_order": "bottom_up",
            "grid": self.rows(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d):
        return cls([list(r) for r in d["grid"]], int(d.get("first_direction", 1)))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class ConversionTrace:
    """Cell counts recorded while converting, for conservation checks."""

    gray_cells: int = 0
    blue_from_gray: int = 0
    extensions: list = field(default_factory=list)  # (row, col, color) 1-based
    first_row_blue: int = 0
    parity_flips: int = 0


def convert_map(k: KnittingMap, trace: ConversionTrace | None = None) -> WeavingMap:
    """Knitting map to weaving map in five passes (1-based rows and columns below).

    1. all (N+1) x (M+1) cells Green;
    2. K(i,j) Yellow/Cyan sets W(i+1,j) Magenta, Gray sets it Blue;
    3. in every row but the first, the last non-Green cell is copied one
       column to the right (rows without one are left alone);
    4. row 1 becomes a copy of row 2;
    5. Magenta turns Green where i and j are both odd or both even.
    """
    N, M = k.shape
    W = np.full((N + 1, M + 1), GREEN, dtype="<U1")
    kc = k.cells
    W[1:, :M][np.isin(kc, KNIT)] = MAGENTA
    W[1:, :M][kc == GRAY] = BLUE
    if trace is not None:
        trace.gray_cells = int(np.count_nonzero(kc == GRAY))
        trace.blue_from_gray = int(np.count_nonzero(W == BLUE))
    for i in range(1, N + 1):
        filled = np.flatnonzero(W[i] != GREEN)
        if filled.size == 0:
            continue
        j = int(filled[-1])
        if j + 1 <= M:
            W[i, j + 1] = W[i, j]
            if trace is not None:
                trace.extensions.append((i + 1, j + 2, str(W[i, j])))
    W[0] = W[1] if N >= 1 else W[0]
    if trace is not None:
        trace.first_row_blue = int(np.count_nonzero(W[0] == BLUE))
    ii, jj = np.meshgrid(np.arange(1, N + 2), np.arange(1, M + 2), indexing="ij")
    flip = (W == MAGENTA) & ((ii % 2) == (jj % 2))
    W[flip] = GREEN
    if trace is not None:
        trace.parity_flips = int(np.count_nonzero(flip))
    return WeavingMap(W, _first_direction(k))


def _first_direction(k: KnittingMap):
    # W row 2 follows K row 1 (Yellow -> 0, Cyan -> 1); W row 1 is its opposite
    row = k.cells[0] if k.n_rows else np.array([])
    d2 = 1 if CYAN in row and YELLOW not in row else 0
    return 1 - d2


def map_statistics(w: WeavingMap, s_h: float):
    """Warp/weft counts, per-warp release totals and color counts."""
    not_blue = np.count_nonzero(w.cells != BLUE, axis=0)
    return {
        "warp_count": w.n_cols,
        "weft_rows": w.n_rows,
        "release_counts": not_blue.astype(int).tolist(),
        "release_totals": (not_blue * s_h).tolist(),
        "blue": w.count(BLUE),
        "magenta": w.count(MAGENTA),
        "green": w.count(GREEN),
    }


# --- W-code -----------------------------------------------------------------------

@dataclass(frozen=True)
class Instruction:
    op: str  # one of A B C D E
    arg: str = ""  # bit string for B/C, "0"/"1" for D
    line: int | None = field(default=None, compare=False)
    column: int | None = field(default=None, compare=False)

    def text(self):
        if self.op in "BC":
            return f"{self.op} {self.arg}"
        return self.op + self.arg


@dataclass(frozen=True)
class Row:
    jacquard: str  # B bits, "1" = up
    release: str  # C bits, "1" = release s_h
    direction: int  # 0 left-to-right, 1 right-to-left


@dataclass(frozen=True)
class WCodeProgram:
    instructions: tuple = ()

    @classmethod
    def from_rows(cls, rows):
        ins = [Instruction("A")]
        for r in rows:
            ins += [Instruction("B", r.jacquard), Instruction("C", r.release),
                    Instruction("D", str(r.direction))]
        ins.append(Instruction("E"))
        return cls(tuple(ins))

    @property
    def rows(self):
        """(B, C, D) triples in order; assumes the program is well formed."""
        body = [i for i in self.instructions if i.op in "BCD"]
        return [Row(body[t].arg, body[t + 1].arg, int(body[t + 2].arg))
                for t in range(0, len(body) - 2, 3)]

    @property
    def width(self):
        for i in self.instructions:
            if i.op in "BC":
                return len(i.arg)
        return 0

    def __len__(self):
        return sum(1 for i in self.instructions if i.op == "D")

    def to_text(self):
        return "".join(i.text() + "\n" for i in self.instructions)


def emit_wcode(w: WeavingMap, max_warp_threads: int = 100) -> WCodeProgram:
    """One (B, C, D) triple per weaving-map row, bottom row first."""
    if w.n_cols > max_warp_threads:
        raise TooManyWarps(w.n_cols, max_warp_threads)
    rows = []
    for i in range(1, w.n_rows + 1):
        cells = w.cells[i - 1]
        b = "".join("1" if c == MAGENTA else "0" for c in cells)
        c = "".join("0" if x == BLUE else "1" for x in cells)
        rows.append(Row(b, c, w.direction(i)))
    return WCodeProgram.from_rows(rows)


_ARG = re.compile(r"[ \t]*([0-9]*)")


def parse_wcode(text, strict=False) -> WCodeProgram:
    """Parse W-code text into instructions.

    Commands may be separated by any whitespace (CRLF accepted). B and C take a
    bit string, D takes 0 or 1. A program must end with E. Repeated D directions
    warn, or raise with ``strict``. Ordering (A first, B/C/D triples) is left to
    the loom, which reports it on execution.
    """
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8")
    out = []
    width = None
    last_dir = None
    for op, arg, line, col in _tokens(text):
        if op not in "ABCDE":
            raise UnknownCommand(f"unknown command {op!r}", line, col)
        if op in "AE" and arg:
            raise WCodeError(f"{op} takes no argument", line, col)
        if op in "BC":
            if not arg or set(arg) - {"0", "1"}:
                raise WCodeError(f"{op} needs a bit string of 0/1", line, col)
            if width is None:
                width = len(arg)
            elif len(arg) != width:
                raise BitLengthMismatch(
                    f"{op} has {len(arg)} bits, earlier rows have {width}", line, col)
        if op == "D":
            if arg not in ("0", "1"):
                raise WCodeError("D takes a direction 0 or 1", line, col)
            if last_dir == arg:
                msg = f"D{arg} repeats the previous row's direction"
                if strict:
                    raise DirectionNotAlternating(msg, line, col)
                warnings.warn(f"{line}:{col}: {msg}", DirectionNotAlternatingWarning, stacklevel=2)
            last_dir = arg
        out.append(Instruction(op, arg, line, col))
        if op == "E":
            break
    else:
        line = text.count("\n") + (0 if text.endswith("\n") else 1)
        raise MissingTerminator("program does not end with E", max(line, 1), 1)
    return WCodeProgram(tuple(out))


def _tokens(text):
    pos, line, line_start = 0, 1, 0
    n = len(text)
    while pos < n:
        ch = text[pos]
        if ch == "\n":
            line += 1
            pos += 1
            line_start = pos
            continue
        if ch.isspace():
            pos += 1
            continue
        col = pos - line_start + 1
        m = _ARG.match(text, pos + 1)
        pos = m.end()
        yield ch, m.group(1), line, col

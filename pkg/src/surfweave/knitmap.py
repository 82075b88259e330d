"""Knitting map K: rows of White/Gray/Yellow/Cyan cells, plus the manufacturing rule check."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, RuleViolation

WHITE, GRAY, YELLOW, CYAN = "W", "G", "Y", "C"
KNIT = (YELLOW, CYAN)
K_STATES = (WHITE, GRAY, YELLOW, CYAN)

K_COLORS = {
    WHITE: (255, 255, 255),
    GRAY: (128, 128, 128),
    YELLOW: (255, 255, 0),
    CYAN: (0, 255, 255),
}

L2R, R2L = "L2R", "R2L"


class LetterGrid:
    """Shared storage for letter maps. ``cells[0]`` is the bottom row (row 1)."""

    states: tuple = ()
    colors: dict = {}

    def __init__(self, cells):
        arr = np.array(cells, dtype="<U1")
        if arr.ndim != 2:
            arr = arr.reshape(len(cells), -1)
        bad = set(arr.ravel().tolist()) - set(self.states)
        if bad:
            raise ConfigError(f"unknown cell states {sorted(bad)}; expected {list(self.states)}")
        arr.setflags(write=False)
        self.cells = arr

    @classmethod
    def from_rows(cls, rows):
        """Build from strings or lists, bottom row first."""
        return cls([list(r) for r in rows])

    @property
    def n_rows(self):
        return self.cells.shape[0]

    @property
    def n_cols(self):
        return self.cells.shape[1]

    @property
    def shape(self):
        return self.cells.shape

    def __call__(self, i, j):
        """1-based access, row 1 at the bottom."""
        return str(self.cells[i - 1, j - 1])

    def rows(self):
        return ["".join(r) for r in self.cells.tolist()]

    def count(self, state):
        return int(np.count_nonzero(self.cells == state))

    def __eq__(self, other):
        return type(self) is type(other) and np.array_equal(self.cells, other.cells)

    def __repr__(self):
        body = "/".join(self.rows())
        return f"{type(self).__name__}({self.n_rows}x{self.n_cols}: {body})"

    def to_ppm(self, scale=1) -> bytes:
        """Binary PPM (P6), one pixel per cell (times ``scale``), row 1 at the bottom."""
        h, w = self.shape
        rgb = np.zeros((h, w, 3), dtype=np.uint8)
        for s, c in self.colors.items():
            rgb[self.cells == s] = c
        img = rgb[::-1]
        if scale > 1:
            img = img.repeat(scale, axis=0).repeat(scale, axis=1)
        header = f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
        return header + img.tobytes()

    def save_ppm(self, path, scale=1):
        Path(path).write_bytes(self.to_ppm(scale))


class KnittingMap(LetterGrid):
    states = K_STATES
    colors = K_COLORS

    @property
    def first_direction(self):
        """Direction of row 1, read from its knit color (L2R if it has none)."""
        row = self.cells[0]
        return R2L if CYAN in row and YELLOW not in row else L2R

    def knit_span(self, i):
        """(first, last) 1-based knit columns of row ``i``, or None."""
        idx = np.flatnonzero(np.isin(self.cells[i - 1], KNIT))
        if idx.size == 0:
            return None
        return int(idx[0]) + 1, int(idx[-1]) + 1

    def to_dict(self):
        return {
            "kind": "knitting_map",
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
        grid = d.get("grid")
        if not isinstance(grid, list) or not grid:
            raise ConfigError("knitting map JSON needs a non-empty 'grid'")
        if len({len(r) for r in grid}) != 1:
            raise ConfigError("knitting map rows differ in length")
        return cls.from_rows(grid)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# --- rule check ---------------------------------------------------------------

@dataclass(frozen=True)
class RuleCheck:
    """Outcome of :func:`validate_rules`; falsy when a rule is broken."""

    ok: bool
    rule: object = None
    row: int | None = None
    col: int | None = None
    detail: str = ""

    def __bool__(self):
        return self.ok

    def error(self):
        return RuleViolation(self.rule, self.row, self.col, self.detail)

    def raise_if_failed(self):
        if not self.ok:
            raise self.error()


def validate_rules(k: KnittingMap) -> RuleCheck:
    """Check the four row rules and Gray placement; reports the first failure.

    1. every row has at least one knit (Yellow/Cyan) cell;
    2. the non-White cells of a row are one contiguous run, and so are its knit cells;
    3. a row uses a single knit color and consecutive rows alternate;
    4. the last stitch of a row and the first stitch of the next row are at
       most one column apart;
    "gray": a Gray cell has knit cells somewhere below and above it in its column.
    """
    cells = k.cells
    N, M = cells.shape
    spans, colors = [], []
    for i in range(1, N + 1):
        row = cells[i - 1]
        span = k.knit_span(i)
        if span is None:
            return RuleCheck(False, 1, i, None, "row has no knit cell")
        a, b = span
        knit = np.isin(row, KNIT)
        if not knit[a - 1:b].all():
            gap = a + int(np.flatnonzero(~knit[a - 1:b])[0])
            return RuleCheck(False, 2, i, gap, "knit cells are not contiguous")
        filled = np.flatnonzero(row != WHITE)
        if filled[-1] - filled[0] + 1 != filled.size:
            gap = int(filled[0]) + 1 + int(np.flatnonzero(np.diff(filled) > 1)[0]) + 1
            return RuleCheck(False, 2, i, gap, "non-White cells are not contiguous")
        present = sorted(set(row[a - 1:b].tolist()))
        if len(present) != 1:
            return RuleCheck(False, 3, i, None, "row mixes Yellow and Cyan")
        if colors and colors[-1] == present[0]:
            return RuleCheck(False, 3, i, None, "row repeats the previous row's direction")
        spans.append(span)
        colors.append(present[0])
    for i in range(1, N):
        (a0, b0), (a1, b1) = spans[i - 1], spans[i]
        # a left-to-right row ends on its right, the next row starts there too
        end, start = (b0, b1) if colors[i - 1] == YELLOW else (a0, a1)
        if abs(end - start) > 1:
            return RuleCheck(False, 4, i, end,
                             f"row ends at column {end} but row {i + 1} starts at column {start}")
    knit_any = np.isin(cells, KNIT)
    below = np.maximum.accumulate(knit_any, axis=0)
    above = np.maximum.accumulate(knit_any[::-1], axis=0)[::-1]
    for i, j in zip(*np.nonzero(cells == GRAY)):
        if not (i > 0 and below[i - 1, j] and i < N - 1 and above[i + 1, j]):
            return RuleCheck(False, "gray", int(i) + 1, int(j) + 1,
                             "Gray cell without stitches both below and above")
    return RuleCheck(True)

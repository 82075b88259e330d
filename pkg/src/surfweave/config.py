"""Pipeline configuration: flat JSON file, overridable from the command line."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .isocurves import StitchParams
from .knitmap import L2R, R2L


@dataclass(frozen=True)
class PipelineConfig:
    s_h: float | None = None  # required before running
    s_w: float = 2.0
    max_warp_threads: int = 100
    first_row_direction: str = L2R
    source: object = None  # shorthand string or {"kind", "vertices"} dict
    flip: bool = False
    seed: int = 0
    sample_count: int = 5000
    relax_method: str = "lbfgs"
    max_iter: int = 200_000
    bend_weight: float = 1e-3  # 0 disables the bending term
    # verification thresholds; None means the default multiple of s_h
    shape_rms_max: float | None = None
    shape_max_max: float | None = None
    tagged_columns: tuple = ()
    tag_spacing: int | None = None

    def __post_init__(self):
        if self.first_row_direction not in (L2R, R2L):
            raise ConfigError(f"first_row_direction must be {L2R} or {R2L}")
        if self.relax_method not in ("lbfgs", "gd"):
            raise ConfigError("relax_method must be 'lbfgs' or 'gd'")
        if self.bend_weight < 0:
            raise ConfigError("bend_weight must be non-negative")
        if self.sample_count < 1:
            raise ConfigError("sample_count must be positive")
        # constructing the params validates s_w, s_h and the warp limit
        if self.s_h is not None:
            self.params

    @property
    def params(self) -> StitchParams:
        if self.s_h is None:
            raise ConfigError("stitch height s_h is required (--sh or config 's_h')")
        return StitchParams(float(self.s_w), float(self.s_h), int(self.max_warp_threads))

    @property
    def rms_threshold(self):
        return self.shape_rms_max if self.shape_rms_max is not None else 1.0 * self.params.s_h

    @property
    def max_threshold(self):
        return self.shape_max_max if self.shape_max_max is not None else 2.5 * self.params.s_h

    def to_dict(self):
        d = asdict(self)
        d["tagged_columns"] = list(self.tagged_columns)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = sorted(set(d) - known)
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(extra)}")
        d = dict(d)
        if "tagged_columns" in d:
            d["tagged_columns"] = tuple(int(c) for c in d["tagged_columns"] or ())
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path):
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def override(self, **kw):
        """Copy with the non-None keyword values replaced (CLI flags win)."""
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return type(self).from_dict(d)

"""Experiment configuration: schema, file formats and diagnostics.

Two file formats are accepted:

* JSON -- one object whose keys are the fields of :class:`ExperimentConfig`.
* key/value text -- one ``key = value`` per line, ``#`` starts a comment.
  Values are read as JSON when they parse (numbers, lists, ``true``) and as
  plain strings otherwise.

Validation errors are reported as :class:`ConfigError` with the file line of
the offending key when it can be located.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..cz import ConstrainedZonotope, from_record
from ..interval1d import Interval
from ..model import LinearSystem, ScalarAffineSystem, cube_root_benchmark, planar_benchmark

__all__ = ["ExperimentConfig", "ConfigError", "load_config", "parse_config_text", "DEFAULT_TRIALS", "FULL_SCALE_TRIALS"]

DEFAULT_TRIALS = 200
FULL_SCALE_TRIALS = 5000

_DEFAULT_GRID = [round(0.01 * i, 10) for i in range(1, 16)]


class ConfigError(ValueError):
    """Invalid configuration; ``line`` and ``field`` locate the problem when known."""

    def __init__(self, msg, line=None, field=None, source=None):
        where = ""
        if source:
            where += f"{source}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        if field:
            where += f" ({field})" if where else f"{field}"
        super().__init__(f"{where}: {msg}" if where else msg)
        self.line = line
        self.field = field
        self.source = source


class ExperimentConfig(BaseModel):
    """One Monte-Carlo experiment.

    ``system`` selects the built-in planar linear benchmark or the scalar
    cube-root benchmark; ``system_file`` replaces the linear matrices and
    ranges with a user-supplied JSON description.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    system: Literal["linear", "scalar"] = "linear"
    system_file: Optional[Path] = None
    x0_box: Optional[list[list[float]]] = Field(
        default=None, description="initial range as [[lo, hi], ...] per coordinate; [-1, 1]^n when omitted")
    horizon: int = Field(default=50, ge=0)
    trials: int = Field(default=DEFAULT_TRIALS, ge=1)
    seed: int = Field(default=0, ge=0)
    check_containment: bool = True
    hull_window: Optional[tuple[int, int]] = None
    oracle: bool = False
    oracle_delta: float = Field(default=0.05, gt=0)
    rts: bool = False
    rts_q: float = Field(default=0.076, ge=0)
    rts_r: float = Field(default=0.036, ge=0)
    rts_tune: bool = False
    rts_trials: int = Field(default=100, ge=1)
    q_grid: list[float] = Field(default_factory=lambda: sorted(set(_DEFAULT_GRID) | {0.076}))
    r_grid: list[float] = Field(default_factory=lambda: sorted(set(_DEFAULT_GRID) | {0.036}))
    out: Path = Path("out")
    workers: int = Field(default=1, ge=1)

    @field_validator("q_grid", "r_grid")
    @classmethod
    def _nonempty_nonneg(cls, v):
        if not v:
            raise ValueError("grid must be nonempty")
        if any(x < 0 for x in v):
            raise ValueError("grid values must be nonnegative")
        return v

    @field_validator("x0_box")
    @classmethod
    def _box(cls, v):
        if v is not None:
            for row in v:
                if len(row) != 2 or not row[0] <= row[1]:
                    raise ValueError("each x0_box row must be [lo, hi] with lo <= hi")
        return v

    @model_validator(mode="after")
    def _cross_checks(self):
        if self.hull_window is not None:
            lo, hi = self.hull_window
            if not 0 <= lo <= hi <= self.horizon:
                raise ValueError(f"hull_window {self.hull_window} must satisfy 0 <= lo <= hi <= horizon")
        if self.system_file is not None:
            if self.system != "linear":
                raise ValueError("system_file is only used with system = linear")
            if not Path(self.system_file).is_file():
                raise ValueError(f"system_file {self.system_file} does not exist")
        if self.system == "scalar" and self.x0_box is not None and len(self.x0_box) != 1:
            raise ValueError("scalar system takes a single x0_box row")
        return self

    @property
    def window(self) -> tuple[int, int]:
        return self.hull_window if self.hull_window is not None else (0, self.horizon)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Copy with some fields replaced, re-validated.

        ``None`` values are ignored.  A shorter ``horizon`` clips an inherited
        ``hull_window``; an explicitly given window is validated as is.
        """
        data = self.model_dump()
        kw = {k: v for k, v in kw.items() if v is not None}
        if "horizon" in kw and "hull_window" not in kw and self.hull_window is not None:
            T = kw["horizon"]
            data["hull_window"] = tuple(min(v, T) for v in self.hull_window)
        data.update(kw)
        return _validate(data, source=None, lines={})

    def build_system(self):
        """The :class:`LinearSystem` or :class:`ScalarAffineSystem` this config describes."""
        if self.system == "scalar":
            x0 = Interval(*self.x0_box[0]) if self.x0_box else None
            return cube_root_benchmark(x0)
        if self.system_file is not None:
            return load_linear_system(self.system_file, self.x0_box)
        x0 = _box_cz(self.x0_box) if self.x0_box else None
        return planar_benchmark(x0)


def _box_cz(rows):
    arr = np.asarray(rows, dtype=float)
    return ConstrainedZonotope.from_box(arr[:, 0], arr[:, 1])


def _range(spec, what):
    if isinstance(spec, dict):
        return from_record(spec)
    try:
        return _box_cz(spec)
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"{what} must be [[lo, hi], ...] or a set record: {exc}", field=what) from None


def load_linear_system(path, x0_box=None) -> LinearSystem:
    """Linear system from JSON with ``Phi, Gamma, Xi, Psi, w_range, v_range`` and optional ``x0_range``.

    Ranges are boxes ``[[lo, hi], ...]`` or set records as written by
    :func:`zonosmooth.cz.to_record`.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno, source=str(path)) from None
    missing = [k for k in ("Phi", "Gamma", "Xi", "Psi", "w_range", "v_range") if k not in data]
    if missing:
        raise ConfigError(f"missing keys {missing}", source=str(path))
    n = np.atleast_2d(np.asarray(data["Phi"], dtype=float)).shape[-1]
    if x0_box is not None:
        x0 = _box_cz(x0_box)
    elif "x0_range" in data:
        x0 = _range(data["x0_range"], "x0_range")
    else:
        x0 = ConstrainedZonotope.from_box(-np.ones(n), np.ones(n))
    try:
        return LinearSystem(
            Phi=data["Phi"], Gamma=data["Gamma"], Xi=data["Xi"], Psi=data["Psi"],
            w_range=_range(data["w_range"], "w_range"), v_range=_range(data["v_range"], "v_range"),
            x0_range=x0,
        )
    except ValueError as exc:
        raise ConfigError(str(exc), source=str(path)) from None


_KV = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")


def _parse_kv(text: str, source):
    data, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _KV.match(line)
        if not m:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno, source=source)
        key, val = m.group(1), m.group(2)
        if key in data:
            raise ConfigError(f"duplicate key {key!r}", line=lineno, field=key, source=source)
        try:
            data[key] = json.loads(val)
        except json.JSONDecodeError:
            data[key] = val
        lines[key] = lineno
    return data, lines


def _json_key_lines(text):
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        for m in re.finditer(r'"([A-Za-z_][A-Za-z0-9_]*)"\s*:', raw):
            lines.setdefault(m.group(1), lineno)
    return lines


def _validate(data, source, lines) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        field = ".".join(str(p) for p in err["loc"]) if err["loc"] else None
        top = str(err["loc"][0]) if err["loc"] else None
        raise ConfigError(err["msg"], line=lines.get(top), field=field, source=source) from None


def parse_config_text(text: str, source: str | None = None, base_dir=None) -> ExperimentConfig:
    """Parse config text; JSON if it starts with ``{``, key/value otherwise.

    A relative ``system_file`` is resolved against ``base_dir`` when given.
    """
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(exc.msg, line=exc.lineno, source=source) from None
        if not isinstance(data, dict):
            raise ConfigError("top-level JSON value must be an object", line=1, source=source)
        lines = _json_key_lines(text)
    else:
        data, lines = _parse_kv(text, source)
    sf = data.get("system_file")
    if base_dir is not None and isinstance(sf, str) and not Path(sf).is_absolute():
        data["system_file"] = str(Path(base_dir) / sf)
    return _validate(data, source, lines)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    # relative system files resolve next to the config
    return parse_config_text(path.read_text(), source=str(path), base_dir=path.parent)

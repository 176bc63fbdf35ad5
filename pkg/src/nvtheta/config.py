"""
Run configuration for the command-line interface.

A config file is TOML with one table per section::

    [sample]
    strain_e = 0.0
    seed = 7

    [orientation]
    axis = [0, 0, 1]
    angle_deg = 30

    [sweep]
    b_mag = 20.0
    n_phi = 19
    n_theta = 72

Angles are radians internally.  Any key ending in ``_rad`` may instead be
given with a ``_deg`` suffix.  Unknown keys are rejected; every error names
the offending field and, when it comes from the file, its line number.
Precedence is command-line flags over the file over the defaults below.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Union, get_args, get_origin, get_type_hints

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, PhysicsDomainError
from .experiment import VirtualSample
from .geometry import CrystalOrientation, FieldRegion
from .odmr import LineShape
from .spin_model import Constants

FORMATS = ("tsv", "records")


@dataclass(frozen=True)
class ConstantsConfig:
    delta: float = 2.87
    g_factor: float = 2.0


@dataclass(frozen=True)
class OrientationConfig:
    """Crystal orientation either as axis-angle or as an explicit rotation matrix."""

    axis: tuple[float, ...] = (0.0, 0.0, 1.0)
    angle_rad: float = 0.0
    matrix: tuple[tuple[float, ...], ...] | None = None


@dataclass(frozen=True)
class SampleConfig:
    strain_e: float = 0.0
    width: float = 0.010
    base_contrast: float = 0.15
    baseline: float = 1.0
    noise_sigma: float = 0.005
    seed: int = 0
    freq_step: float = 0.0005
    min_prominence: float = 0.03


@dataclass(frozen=True)
class RegionConfig:
    max_xy: float = 25.0
    max_z: float = 100.0


@dataclass(frozen=True)
class EigConfig:
    b_mag: float = 20.0
    theta_rad: float = 0.0


@dataclass(frozen=True)
class ExpandConfig:
    b_list: tuple[float, ...] = (20.0, 60.0, 95.0)
    theta_max_rad: float = 0.3
    n_theta: int = 61


@dataclass(frozen=True)
class SynthConfig:
    b_mag: float = 20.0
    phi_rad: float = 0.0
    big_theta_rad: float = 0.0
    f_start: float | None = None
    f_stop: float | None = None


@dataclass(frozen=True)
class FitConfig:
    input: str | None = None
    min_prominence: float | None = None


@dataclass(frozen=True)
class SweepConfig:
    b_mag: float = 20.0
    n_phi: int = 19
    n_theta: int = 72
    k_max: int = 4
    region_tol: float = 0.003


@dataclass(frozen=True)
class RefineConfig:
    schedule: tuple[float, ...] = (20.0, 40.0, 80.0)
    n_grid: int = 11
    shrink: float = 0.4
    candidate: int | None = None


@dataclass(frozen=True)
class SensitivityConfig:
    fields: tuple[float, ...] = (20.0, 40.0, 60.0, 80.0, 95.0)
    theta_span_rad: float = 0.15
    n_theta: int = 31
    expansion_fraction: float = 0.1
    recenter: bool = True
    axis_phi_rad: float | None = None
    axis_big_theta_rad: float | None = None


@dataclass(frozen=True)
class OutputConfig:
    dir: str | None = None
    format: str = "tsv"


@dataclass(frozen=True)
class RunConfig:
    constants: ConstantsConfig = ConstantsConfig()
    orientation: OrientationConfig = OrientationConfig()
    sample: SampleConfig = SampleConfig()
    region: RegionConfig = RegionConfig()
    eig: EigConfig = EigConfig()
    expand: ExpandConfig = ExpandConfig()
    synth: SynthConfig = SynthConfig()
    fit: FitConfig = FitConfig()
    sweep: SweepConfig = SweepConfig()
    refine: RefineConfig = RefineConfig()
    sensitivity: SensitivityConfig = SensitivityConfig()
    output: OutputConfig = OutputConfig()
    threads: int = 1
    source: str = field(default="<defaults>", compare=False)

    # -- derived domain objects --------------------------------------------

    def physical_constants(self) -> Constants:
        return Constants(self.constants.delta, self.constants.g_factor)

    def crystal_orientation(self) -> CrystalOrientation:
        o = self.orientation
        if o.matrix is not None:
            return CrystalOrientation(np.array(o.matrix, dtype=float))
        return CrystalOrientation.from_axis_angle(o.axis, o.angle_rad)

    def line_shape(self) -> LineShape:
        s = self.sample
        return LineShape(s.width, s.base_contrast, s.baseline)

    def virtual_sample(self) -> VirtualSample:
        s = self.sample
        return VirtualSample(
            orientation=self.crystal_orientation(),
            constants=self.physical_constants(),
            strain_e=s.strain_e,
            line=self.line_shape(),
            noise_sigma=s.noise_sigma,
            seed=s.seed,
            region=FieldRegion(self.region.max_xy, self.region.max_z),
            freq_step=s.freq_step,
            min_prominence=s.min_prominence,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("source")
        return d

    def sha256(self) -> str:
        """Hash of everything that affects output data.

        The output directory and thread count are excluded: neither changes
        the numbers produced.
        """
        d = self.to_dict()
        d.pop("threads")
        d["output"].pop("dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_SECTIONS = tuple(f.name for f in dataclasses.fields(RunConfig) if f.name not in ("threads", "source"))
_SECTION_TYPES = get_type_hints(RunConfig)


# --------------------------------------------------------------------------
# parsing


def _key_line(text: str | None, section: str | None, key: str) -> int | None:
    """Line number of ``key`` inside ``[section]`` (top level when section is None)."""
    if not text:
        return None
    current = None
    pat = re.compile(r'^\s*"?' + re.escape(key) + r'"?\s*=')
    for n, line in enumerate(text.splitlines(), 1):
        m = re.match(r"^\s*\[\s*([A-Za-z0-9_.-]+)\s*\]", line)
        if m:
            current = m.group(1)
            continue
        if current == section and pat.match(line):
            return n
    return None


class _Anchor:
    def __init__(self, source: str, text: str | None):
        self.source, self.text = source, text

    def error(self, section: str | None, key: str, msg: str, from_flag: bool = False) -> ConfigError:
        name = f"{section}.{key}" if section else key
        if from_flag:
            return ConfigError(f"command-line override {name}: {msg}")
        line = _key_line(self.text, section, key)
        if line is None and key.endswith("_rad"):
            line = _key_line(self.text, section, key[:-4] + "_deg")
        where = f"{self.source}:{line}" if line else self.source
        return ConfigError(f"{where}: {name}: {msg}")


def _unwrap_optional(hint):
    if get_origin(hint) is Union or type(hint).__name__ == "UnionType":
        args = [a for a in get_args(hint) if a is not type(None)]
        return args[0], True
    return hint, False


def _coerce(value, hint):
    """Convert a TOML value to ``hint``; raises ValueError with a short reason."""
    hint, optional = _unwrap_optional(hint)
    if value is None:
        if optional:
            return None
        raise ValueError("must not be empty")
    origin = get_origin(hint)
    if origin is tuple:
        if isinstance(value, (str, bytes)) or not hasattr(value, "__iter__"):
            raise ValueError(f"expected a list, got {value!r}")
        inner = get_args(hint)[0]
        return tuple(_coerce(v, inner) for v in value)
    if hint is bool:
        if not isinstance(value, bool):
            raise ValueError(f"expected true/false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ValueError(f"expected an integer, got {value!r}")
        return int(value)
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
            raise ValueError(f"expected a number, got {value!r}")
        v = float(value)
        if not np.isfinite(v):
            raise ValueError(f"must be finite, got {value!r}")
        return v
    if hint is str:
        if not isinstance(value, str):
            raise ValueError(f"expected a string, got {value!r}")
        return value
    raise TypeError(f"unsupported config type {hint}")


def _build_section(cls, raw: Mapping, section: str, anchor: _Anchor, flags: Mapping):
    hints = get_type_hints(cls)
    values = {}
    for key, v in raw.items():
        name = key
        if key.endswith("_deg") and key[:-4] + "_rad" in hints:
            name = key[:-4] + "_rad"
            if name in raw:
                raise anchor.error(section, key, f"given together with {name}")
        if name not in hints:
            raise anchor.error(section, key, "unknown key")
        try:
            val = _coerce(v, hints[name])
            if name != key and val is not None:
                val = float(np.radians(val))
        except ValueError as e:
            raise anchor.error(section, key, str(e)) from None
        values[name] = val
    for key, v in flags.items():
        try:
            values[key] = _coerce(v, hints[key])
        except ValueError as e:
            raise anchor.error(section, key, str(e), from_flag=True) from None
    return cls(**values)


def parse_config(
    data: Mapping[str, Any],
    source: str = "<config>",
    text: str | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> RunConfig:
    """Build a validated :class:`RunConfig` from parsed TOML plus flag overrides.

    ``overrides`` maps dotted names (``"sweep.b_mag"``, ``"threads"``) to values.
    """
    anchor = _Anchor(source, text)
    flag_map: dict[str, dict[str, Any]] = {}
    top_flags = {}
    for dotted, v in (overrides or {}).items():
        if v is None:
            continue
        if "." in dotted:
            sec, key = dotted.split(".", 1)
            flag_map.setdefault(sec, {})[key] = v
        else:
            top_flags[dotted] = v
    sections = {}
    top = {}
    for key, v in data.items():
        if key in _SECTIONS:
            if not isinstance(v, Mapping):
                raise anchor.error(None, key, "must be a table")
            continue
        if key == "threads":
            top[key] = v
            continue
        raise anchor.error(None, key, "unknown section or key")
    for name in _SECTIONS:
        sections[name] = _build_section(
            _SECTION_TYPES[name], data.get(name, {}), name, anchor, flag_map.get(name, {})
        )
    threads = top_flags.get("threads", top.get("threads", 1))
    try:
        threads = _coerce(threads, int)
    except ValueError as e:
        raise anchor.error(None, "threads", str(e), "threads" in top_flags) from None
    cfg = RunConfig(**sections, threads=threads, source=source)
    _validate(cfg, anchor, set(overrides or {}))
    return cfg


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read a TOML config file (or only defaults when ``path`` is None)."""
    if path is None:
        return parse_config({}, overrides=overrides)
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{p}: cannot read config: {e.strerror or e}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{p}: {e}") from None
    return parse_config(data, source=str(p), text=text, overrides=overrides)


# --------------------------------------------------------------------------
# validation


def _validate(cfg: RunConfig, anchor: _Anchor, flagged: set[str]):
    def fail(section, key, msg):
        return anchor.error(section, key, msg, from_flag=f"{section}.{key}" in flagged)

    checks = [
        ("constants", "delta", cfg.constants.delta > 0, "must be positive"),
        ("constants", "g_factor", cfg.constants.g_factor > 0, "must be positive"),
        ("region", "max_xy", cfg.region.max_xy > 0, "must be positive"),
        ("region", "max_z", cfg.region.max_z > 0, "must be positive"),
        ("sample", "width", cfg.sample.width > 0, "must be positive"),
        ("sample", "base_contrast", 0 < cfg.sample.base_contrast < 1, "must be in (0, 1)"),
        ("sample", "baseline", cfg.sample.baseline > 0, "must be positive"),
        ("sample", "strain_e", cfg.sample.strain_e >= 0, "must be >= 0"),
        ("sample", "noise_sigma", cfg.sample.noise_sigma >= 0, "must be >= 0"),
        ("sample", "freq_step", cfg.sample.freq_step > 0, "must be positive"),
        ("sample", "min_prominence", cfg.sample.min_prominence > 0, "must be positive"),
        ("sample", "seed", cfg.sample.seed >= 0, "must be >= 0"),
        ("expand", "n_theta", cfg.expand.n_theta >= 3, "must be >= 3"),
        ("expand", "theta_max_rad", cfg.expand.theta_max_rad > 0, "must be positive"),
        ("sweep", "n_phi", cfg.sweep.n_phi >= 2, "must be >= 2"),
        ("sweep", "n_theta", cfg.sweep.n_theta >= 2, "must be >= 2"),
        ("sweep", "k_max", 1 <= cfg.sweep.k_max <= 8, "must be in 1..8"),
        ("sweep", "region_tol", cfg.sweep.region_tol > 0, "must be positive"),
        ("refine", "n_grid", cfg.refine.n_grid >= 5, "must be >= 5"),
        ("refine", "shrink", 0 < cfg.refine.shrink <= 1, "must be in (0, 1]"),
        ("refine", "schedule", len(cfg.refine.schedule) > 0, "must not be empty"),
        ("sensitivity", "n_theta", cfg.sensitivity.n_theta >= 5, "must be >= 5"),
        ("sensitivity", "fields", len(cfg.sensitivity.fields) > 0, "must not be empty"),
        ("output", "format", cfg.output.format in FORMATS, f"must be one of {', '.join(FORMATS)}"),
    ]
    for section, key, ok, msg in checks:
        if not ok:
            raise fail(section, key, msg)
    if cfg.threads < 1:
        raise anchor.error(None, "threads", "must be >= 1", "threads" in flagged)
    if len(cfg.orientation.axis) != 3:
        raise fail("orientation", "axis", "must have 3 components")
    if cfg.orientation.matrix is not None and (
        len(cfg.orientation.matrix) != 3 or any(len(r) != 3 for r in cfg.orientation.matrix)
    ):
        raise fail("orientation", "matrix", "must be 3 x 3")
    # domain objects carry their own invariants; report them against the section
    for section, build in (
        ("constants", cfg.physical_constants),
        ("orientation", cfg.crystal_orientation),
        ("sample", cfg.line_shape),
        ("region", lambda: FieldRegion(cfg.region.max_xy, cfg.region.max_z)),
    ):
        try:
            build()
        except PhysicsDomainError as e:
            raise ConfigError(f"{anchor.source}: [{section}]: {e}") from None


def default_config_text() -> str:
    """TOML rendering of the defaults, usable as a starting config file."""
    lines = []
    d = RunConfig().to_dict()
    lines.append(f"threads = {d.pop('threads')}")
    for sec, vals in d.items():
        lines.append(f"\n[{sec}]")
        for k, v in vals.items():
            if v is None:
                lines.append(f"# {k} =")
            else:
                lines.append(f"{k} = {json.dumps(v)}")
    return "\n".join(lines) + "\n"

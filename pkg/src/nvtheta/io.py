"""
Tabular output files.

Two formats share one header convention.  Every file starts with ``#``
lines of the form ``# key: value``; the first three are always
``command``, ``config_sha256`` and ``seed``, followed by ``format`` and
``columns``.

``tsv``
    Tab-separated rows.  Floats are printed with 12 significant digits.
``records``
    One JSON object per line, keyed by column name.

Both are read back by :func:`read_table`.
"""

from __future__ import annotations

import io as _io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .odmr import Spectrum

PRECISION = 12
FIXED_KEYS = ("command", "config_sha256", "seed")


@dataclass
class Table:
    columns: tuple[str, ...]
    rows: list[tuple]
    meta: dict[str, str] = field(default_factory=dict)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def array(self, name: str) -> np.ndarray:
        return np.array(self.column(name), dtype=float)

    def records(self) -> list[dict]:
        return [dict(zip(self.columns, r)) for r in self.rows]


def _round(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if not math.isfinite(v) else float(f"{v:.{PRECISION}g}")
    return v


def format_value(v) -> str:
    v = _round(v)
    if isinstance(v, float):
        return f"{v:.{PRECISION}g}"
    s = str(v)
    if "\t" in s or "\n" in s:
        raise ValueError(f"cell value {s!r} contains a tab or newline")
    return s


def parse_value(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def header_lines(meta: Mapping[str, object], columns: Sequence[str], fmt: str) -> list[str]:
    missing = [k for k in FIXED_KEYS if k not in meta]
    if missing:
        raise ValueError(f"header is missing {missing}")
    out = [f"# {k}: {meta[k]}" for k in FIXED_KEYS]
    out.append(f"# format: {fmt}")
    out += [f"# {k}: {v}" for k, v in meta.items() if k not in FIXED_KEYS and k not in ("format", "columns")]
    out.append("# columns: " + "\t".join(columns))
    return out


def dump_table(t: Table, stream: IO[str], fmt: str = "tsv"):
    if fmt not in ("tsv", "records"):
        raise ValueError(f"unknown format {fmt!r}")
    for line in header_lines(t.meta, t.columns, fmt):
        stream.write(line + "\n")
    for row in t.rows:
        if len(row) != len(t.columns):
            raise ValueError(f"row has {len(row)} cells, expected {len(t.columns)}")
        if fmt == "tsv":
            stream.write("\t".join(format_value(v) for v in row) + "\n")
        else:
            rec = {c: _round(v) for c, v in zip(t.columns, row)}
            stream.write(json.dumps(rec) + "\n")


def write_table(path: str | Path, t: Table, fmt: str = "tsv") -> Path:
    p = Path(path)
    buf = _io.StringIO()
    dump_table(t, buf, fmt)
    p.write_text(buf.getvalue(), encoding="utf-8")
    return p


def load_table(lines: Iterable[str], source: str = "<table>") -> Table:
    meta: dict[str, str] = {}
    columns: tuple[str, ...] | None = None
    rows = []
    for n, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition(":")
            if not sep:
                continue
            value = value.strip()
            if key.strip() == "columns":
                columns = tuple(value.split("\t")) if value else ()
            else:
                meta[key.strip()] = value
            continue
        if columns is None:
            raise ConfigError(f"{source}:{n}: data before the '# columns:' header")
        if meta.get("format", "tsv") == "records":
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{source}:{n}: {e}") from None
            rows.append(tuple(rec.get(c) for c in columns))
        else:
            cells = line.split("\t")
            if len(cells) != len(columns):
                raise ConfigError(f"{source}:{n}: {len(cells)} cells, expected {len(columns)}")
            rows.append(tuple(parse_value(c) for c in cells))
    if columns is None:
        raise ConfigError(f"{source}: no '# columns:' header")
    return Table(columns, rows, meta)


def read_table(path: str | Path) -> Table:
    p = Path(path)
    try:
        with p.open(encoding="utf-8") as fh:
            return load_table(fh, str(p))
    except OSError as e:
        raise ConfigError(f"{p}: cannot read: {e.strerror or e}") from None


# --------------------------------------------------------------------------
# spectra

SPECTRUM_COLUMNS = ("frequency_GHz", "fluorescence")


def spectrum_table(s: Spectrum, meta: Mapping[str, object]) -> Table:
    m = dict(meta)
    for k in ("field_mT", "phi_rad", "big_theta_rad", "baseline", "width", "noise_sigma"):
        if k in s.metadata and k not in m:
            m[k] = format_value(s.metadata[k])
    rows = list(zip(s.frequencies.tolist(), s.fluorescence.tolist()))
    return Table(SPECTRUM_COLUMNS, rows, m)


def table_spectrum(t: Table) -> Spectrum:
    if tuple(t.columns[:2]) != SPECTRUM_COLUMNS:
        raise ConfigError(f"not a spectrum table: columns {t.columns}")
    meta = {}
    for k, v in t.meta.items():
        pv = parse_value(v)
        meta[k] = pv
    if "baseline" in meta and not isinstance(meta["baseline"], (int, float)):
        raise ConfigError(f"spectrum baseline {meta['baseline']!r} is not numeric")
    return Spectrum(t.array("frequency_GHz"), t.array("fluorescence"), meta)

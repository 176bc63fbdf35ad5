import io
import json
import math
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvtheta import ConfigError
from nvtheta.config import RunConfig, default_config_text, load_config, parse_config
from nvtheta.io import (
    Table,
    dump_table,
    format_value,
    load_table,
    parse_value,
    read_table,
    spectrum_table,
    table_spectrum,
    write_table,
)
from nvtheta.odmr import Dip, LineShape, synthesize

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

META = {"command": "test", "config_sha256": "ab" * 32, "seed": 0}


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_defaults():
    cfg = load_config()
    assert cfg.constants.delta == 2.87
    assert cfg.sweep.n_phi == 19
    assert cfg.threads == 1
    assert cfg.physical_constants().b_zfs == pytest.approx(102.5275, abs=1e-4)


def test_default_text_round_trips(tmp_path):
    p = write(tmp_path, default_config_text())
    cfg = load_config(p)
    assert cfg.sha256() == RunConfig().sha256()
    tomllib.loads(default_config_text())


def test_file_values(tmp_path):
    p = write(tmp_path, "[sweep]\nb_mag = 30.0\nn_theta = 36\n[sample]\nseed = 9\n")
    cfg = load_config(p)
    assert (cfg.sweep.b_mag, cfg.sweep.n_theta, cfg.sample.seed) == (30.0, 36, 9)
    assert cfg.virtual_sample().seed == 9


def test_degree_alias(tmp_path):
    p = write(tmp_path, "[eig]\ntheta_deg = 90\n")
    assert load_config(p).eig.theta_rad == pytest.approx(math.pi / 2)
    both = write(tmp_path, "[eig]\ntheta_deg = 90\ntheta_rad = 1.0\n", "both.toml")
    with pytest.raises(ConfigError, match="together"):
        load_config(both)


def test_unknown_key_reports_line(tmp_path):
    p = write(tmp_path, "# comment\n[sweep]\nb_mag = 20\nbogus = 1\n")
    with pytest.raises(ConfigError) as e:
        load_config(p)
    assert f"{p}:4: sweep.bogus: unknown key" in str(e.value)


def test_unknown_section(tmp_path):
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(write(tmp_path, "[nope]\nx = 1\n"))


def test_type_errors(tmp_path):
    with pytest.raises(ConfigError, match=r":2: sweep.n_phi: expected an integer"):
        load_config(write(tmp_path, "[sweep]\nn_phi = 'many'\n"))
    with pytest.raises(ConfigError, match="expected a list"):
        load_config(write(tmp_path, "[refine]\nschedule = 20\n", "b.toml"))


def test_invalid_values(tmp_path):
    with pytest.raises(ConfigError, match="sample.width: must be positive"):
        load_config(write(tmp_path, "[sample]\nwidth = 0\n"))
    with pytest.raises(ConfigError, match="orientation"):
        load_config(write(tmp_path, "[orientation]\nmatrix = [[1,0,0],[0,1,0],[0,0,-1]]\n", "m.toml"))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "[output]\nformat = 'xml'\n", "f.toml"))


def test_bad_toml(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "[sweep\n"))
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")


def test_precedence(tmp_path):
    p = write(tmp_path, "threads = 2\n[sweep]\nb_mag = 30.0\nn_phi = 7\n")
    cfg = load_config(p, {"sweep.b_mag": 40.0, "threads": 3})
    assert cfg.sweep.b_mag == 40.0  # flag beats file
    assert cfg.sweep.n_phi == 7  # file beats default
    assert cfg.sweep.n_theta == 72  # default
    assert cfg.threads == 3
    assert load_config(p, {"sweep.b_mag": None}).sweep.b_mag == 30.0


def test_flag_errors_name_the_flag():
    with pytest.raises(ConfigError, match="command-line override sweep.n_phi"):
        parse_config({}, overrides={"sweep.n_phi": 1})


def test_hash_ignores_output_dir_and_threads():
    a = parse_config({})
    b = parse_config({}, overrides={"output.dir": "/tmp/x", "threads": 4})
    c = parse_config({}, overrides={"sample.seed": 1})
    assert a.sha256() == b.sha256()
    assert a.sha256() != c.sha256()


def test_orientation_from_axis_angle():
    cfg = parse_config({"orientation": {"axis": [0, 0, 1], "angle_deg": 90}})
    r = cfg.crystal_orientation().rotation
    np.testing.assert_allclose(r @ [1, 0, 0], [0, 1, 0], atol=1e-12)


# --------------------------------------------------------------------------
# tables


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_value_round_trip(v):
    back = parse_value(format_value(v))
    assert back == pytest.approx(v, rel=1e-11, abs=1e-300)


def test_special_values():
    assert parse_value(format_value(float("nan"))) != parse_value(format_value(float("nan")))
    assert parse_value(format_value(float("inf"))) == float("inf")
    assert parse_value(format_value(True)) == 1
    assert parse_value("abc") == "abc"


@pytest.mark.parametrize("fmt", ["tsv", "records"])
def test_table_round_trip(fmt):
    rows = [(1, 0.1 + 0.2, "x"), (2, 1 / 3, "y")]
    t = Table(("i", "v", "s"), rows, dict(META, extra="1"))
    buf = io.StringIO()
    dump_table(t, buf, fmt)
    text = buf.getvalue()
    head = [line for line in text.splitlines() if line.startswith("#")]
    assert head[0].startswith("# command:")
    assert head[1].startswith("# config_sha256:")
    assert head[2].startswith("# seed:")
    assert head[-1] == "# columns: i\tv\ts"
    back = load_table(text.splitlines(True))
    assert back.columns == t.columns
    assert back.meta["format"] == fmt
    assert back.meta["extra"] == "1"
    for r, b in zip(rows, back.rows):
        assert b[0] == r[0] and b[2] == r[2]
        assert b[1] == pytest.approx(r[1], rel=1e-11)
    if fmt == "records":
        first = [line for line in text.splitlines() if not line.startswith("#")][0]
        assert json.loads(first)["v"] == 0.3


def test_table_errors(tmp_path):
    with pytest.raises(ValueError):
        dump_table(Table(("a",), [(1,)], {"command": "x"}), io.StringIO())
    with pytest.raises(ValueError):
        dump_table(Table(("a",), [(1, 2)], META), io.StringIO())
    with pytest.raises(ConfigError, match="data before"):
        load_table(["1\t2\n"])
    with pytest.raises(ConfigError, match=r"<table>:2: 1 cells"):
        load_table(["# columns: a\tb\n", "1\n"])
    with pytest.raises(ConfigError):
        read_table(tmp_path / "nope.tsv")


def test_spectrum_file_round_trip(tmp_path):
    s = synthesize([Dip(2.5, 0.1, "x")], LineShape(), 2.4, 2.6, 201, {"field_mT": 20.0})
    p = write_table(tmp_path / "s.tsv", spectrum_table(s, META))
    back = table_spectrum(read_table(p))
    np.testing.assert_allclose(back.frequencies, s.frequencies, rtol=1e-12)
    np.testing.assert_allclose(back.fluorescence, s.fluorescence, rtol=1e-12)
    assert back.metadata["field_mT"] == 20.0
    with pytest.raises(ConfigError):
        table_spectrum(Table(("a", "b"), [(1.0, 2.0)], META))

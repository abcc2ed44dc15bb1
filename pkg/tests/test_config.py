import pytest
from hypothesis import given
from hypothesis import strategies as st

from conepatch.config import SCHEMA, ConfigError, load, parse_text
from conepatch.gridfield import Geometry


def test_defaults():
    cfg = parse_text("")
    assert cfg["grid.geometry"] == "line1d"
    assert cfg["sweep.lambda"] == (0.5, 1.0, 2.0, 4.0, 8.0)
    assert cfg.explicit == set()
    assert cfg.grid().geometry is Geometry.LINE1D


def test_comments_blank_lines_and_values():
    cfg = parse_text("""
# a comment
grid.h = 0.0078125   # trailing comment
source.truncation = none
sweep.p = 1.5, 2.5
output.figures = no
""")
    assert cfg["grid.h"] == 0.0078125
    assert cfg["source.truncation"] is None
    assert cfg["sweep.p"] == (1.5, 2.5)
    assert cfg["output.figures"] is False
    assert cfg.explicit == {"grid.h", "source.truncation", "sweep.p", "output.figures"}
    assert cfg.section("grid")["h"] == 0.0078125


@pytest.mark.parametrize("text,match", [
    ("grid.bogus = 1", "unknown key"),
    ("grid.h = 0.1\ngrid.h = 0.2", "duplicate"),
    ("grid.h", "expected 'key = value'"),
    ("grid.h = -1", "positive"),
    ("grid.geometry = torus", "one of"),
    ("source.sign = 2", "-1 or"),
    ("grid.cfl = 0.9\ngrid.geometry = box3d\ngrid.extent = 0.25\ngrid.h = 0.0625", "exceeds"),
    ("source.p = 7", r"\[1, 6\)"),
    ("data.u0.center = 0, 0", "coordinate"),
    ("patch.d = 0.1", "multiple"),
    ("output.figures = maybe", "true/false"),
])
def test_rejections(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_text(text)


def test_echo_roundtrip():
    cfg = parse_text("grid.geometry = box3d\ngrid.extent = 0.5\ngrid.h = 0.0625\ndata.u0.center = 0.1, 0, 0\n"
                     "cut.K = 3.5\nsweep.lambda = 2, 4")
    again = parse_text(cfg.echo())
    assert again.values == cfg.values


@given(st.sampled_from(sorted(SCHEMA)))
def test_every_default_roundtrips(key):
    cfg = parse_text("")
    line = [ln for ln in cfg.echo().splitlines() if ln.startswith(key + " =")]
    assert parse_text(line[0])[key] == cfg[key]


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load(tmp_path / "nope.conf")
    p = tmp_path / "ok.conf"
    p.write_text("run.T = 1.5\n")
    cfg = load(p)
    assert cfg["run.T"] == 1.5 and cfg.source_path == str(p)

import pytest

from rlftn.config import ConfigError, emit_config, parse_config, parse_config_text
from rlftn.models import ChainModel, CylinderModel

MINIMAL = """\
model = chain
S = 0.5
L = 16
h = 1.0
chi = 32
"""


def test_minimal_chain_gets_defaults():
    cfg = parse_config_text(MINIMAL)
    t = cfg.tebd
    assert (cfg.L, cfg.h, cfg.chi, cfg.S) == (16, 1.0, 32, 0.5)
    assert (t.dt0, t.step_factor, t.power, t.oversample, t.method) == (0.4, 0.7, 4, None, "tsvd")
    assert cfg.build_model() == ChainModel(16, 1.0, 0.5)
    assert cfg.fields_to_run == (1.0,)


def test_cylinder_config():
    cfg = parse_config_text("model = cylinder\nW = 4\nL = 12\nh = 3.044\nchi = 50\nh_grid = 2, 3.044, 4\n")
    assert cfg.build_model(4.0) == CylinderModel(12, 4, 4.0)
    assert cfg.fields_to_run == (2.0, 3.044, 4.0)


@pytest.mark.parametrize("text,match", [
    (MINIMAL.replace("chi = 32", "chi = 0"), "chi"),
    (MINIMAL + "colour = red\n", "unknown key"),
    (MINIMAL.replace("L = 16\n", ""), "missing required key 'L'"),
    (MINIMAL.replace("S = 0.5\n", ""), "needs key 'S'"),
    (MINIMAL + "W = 3\n", "does not apply"),
    (MINIMAL.replace("S = 0.5", "S = 0.7"), "half-integer"),
    (MINIMAL + "method = svd\n", "method"),
    (MINIMAL + "L = 8\n", "duplicate"),
    (MINIMAL + "oversample = 4\n", "oversample|ell|sample"),
    ("model = chain\nS 0.5\n", "key = value"),
])
def test_rejections(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config_text(text)


def test_error_carries_line():
    with pytest.raises(ConfigError) as info:
        parse_config_text(MINIMAL + "bogus = 1\n", "run.cfg")
    assert info.value.line == 6
    assert "run.cfg:6" in str(info.value)


def test_comments_and_blank_lines():
    cfg = parse_config_text("# header\n\n" + MINIMAL.replace("chi = 32", "chi = 32  # bond dim"))
    assert cfg.chi == 32


def test_round_trip():
    cfg = parse_config_text(MINIMAL + "method = rsvd\nseed = 11\nh_grid = 0.5, 1.0\nmax_sweeps = 100\n")
    again = parse_config_text(emit_config(cfg))
    assert again == cfg
    assert emit_config(again) == emit_config(cfg)


def test_overrides():
    cfg = parse_config_text(MINIMAL).with_overrides(method="rsvd", seed=5, power=None, out="x")
    assert (cfg.tebd.method, cfg.tebd.seed, cfg.tebd.power, cfg.out) == ("rsvd", 5, 4, "x")


def test_parse_config_file(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text(MINIMAL)
    assert parse_config(p).chi == 32
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "missing.cfg")

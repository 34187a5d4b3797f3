import math
from pathlib import Path

import pytest

from stochwishart.config import ConfigError, config_digest, dump_config, load_config, parse_config
from stochwishart.entry_process import Family, ScalarField

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = """\
scale: 10
field: complex
process: {family: frozen}
times: [0]
observables:
  - {mu: 1, nu: 2, power: 3}
"""


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    g = cfg.geometry
    assert g.L == 10 and g.process.field is ScalarField.COMPLEX and g.process.family is Family.FROZEN
    assert g.observables[0].power == 3 and g.observables[0].time_index == 0
    assert cfg.mc.replicas == 10_000 and cfg.output.format == "csv" and cfg.quadrature.abs_tol == 1e-7


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.yaml")))
def test_shipped_configs_round_trip(name, tmp_path):
    cfg = load_config(CONFIGS / name)
    dumped = tmp_path / "eff.yaml"
    dumped.write_text(dump_config(cfg))
    again = load_config(dumped)
    assert config_digest(again) == config_digest(cfg)
    assert again == cfg


def _error(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value


def test_unknown_key_reports_line_and_path():
    err = _error(MINIMAL.replace("power: 3", "powr: 3"))
    assert err.line == 6 and err.path == ("observables", 0, "powr")
    assert "unknown key 'powr'" in str(err) and str(err).startswith("line 6:")


def test_unknown_section_rejected():
    err = _error(MINIMAL + "extra: 1\n")
    assert err.line == 7 and "extra" in str(err)


@pytest.mark.parametrize(
    "mutation,fragment",
    [
        (("field: complex", "field: 3"), "field"),
        (("family: frozen", "family: brownian"), "family"),
        (("{family: frozen}", "{family: ou}"), "rate"),
        (("{family: frozen}", "{family: refresh, rate: 1}"), "rate"),
        (("times: [0]", "times: [1, 0]"), "increasing"),
        (("times: [0]", "times: []"), "times"),
        (("power: 3", "power: 0"), "power"),
        (("power: 3", "power: 3, time_index: 2"), "time_index"),
        (("scale: 10", "scale: ten"), "scale"),
        (("nu: 2", "nu: -2"), "nu"),
        (("scale: 10", "scale: 10\nmc: {replicas: 10, batch_size: 20}"), "batch_size"),
        (("scale: 10", "scale: 10\noutput: {format: xml}"), "format"),
        (("scale: 10", "scale: 10\nvalidate: {draws: 10}"), "draws"),
    ],
)
def test_invalid_values(mutation, fragment):
    err = _error(MINIMAL.replace(*mutation))
    assert fragment in str(err)


def test_missing_required_section():
    err = _error(MINIMAL.replace("scale: 10\n", ""))
    assert "scale" in str(err)


def test_yaml_syntax_error_has_line():
    err = _error(MINIMAL + "  - {mu: 1\n")
    assert err.line is not None and "invalid YAML" in str(err)


def test_numeric_strings_accepted():
    cfg = parse_config(MINIMAL + "quadrature: {abs_tol: 1e-9}\n")
    assert cfg.quadrature.abs_tol == 1e-9


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.yaml")


def test_ou_rate_round_trips_exactly():
    cfg = load_config(CONFIGS / "example1.yaml")
    assert cfg.geometry.process.rate == math.log(2)
    assert parse_config(dump_config(cfg)).geometry.process.rate == math.log(2)

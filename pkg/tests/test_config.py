"""INI run configurations: parsing, defaults, conversions, round trips."""

import pytest

from qlmfloquet import Boundary, ConfigError, RunConfig, load_config, parse_config

MINIMAL = """
[lattice]
n_sites = 4

[drive]
frequency = 6.2
"""


def test_minimal_config_and_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.n_sites == 4
    assert cfg.gauge_spin == 0.5
    assert cfg.boundary is Boundary.PBC
    assert (cfg.J, cfg.K, cfg.h, cfg.eps1, cfg.eps2) == (1.0, 4.0, 0.0, 0.0, 0.0)
    assert cfg.protocol == "full"
    assert cfg.orders == (0, 1, 2)
    assert cfg.n_periods == 1000
    assert cfg.stride is None
    assert cfg.initial == "uniform_vacuum"
    assert cfg.observables is None
    assert cfg.dense_cap == 4096


def test_frequency_to_spacing_conversions():
    t_period = 1.0 / (4.0 * 6.2)
    full = parse_config(MINIMAL)
    assert abs(full.spacing_value() - t_period / 18.0) < 1e-15
    assert abs(full.build_protocol().t_period - t_period) < 1e-15

    simple = parse_config(MINIMAL.replace("frequency = 6.2",
                                          "frequency = 6.2\nprotocol = simple"))
    assert abs(simple.spacing_value() - t_period / 2.25) < 1e-15
    assert abs(simple.build_protocol().t_period - t_period) < 1e-15

    quench = parse_config(MINIMAL.replace("frequency = 6.2",
                                          "frequency = 6.2\nprotocol = quench"))
    assert abs(quench.spacing_value() - t_period) < 1e-15

    effective = parse_config(MINIMAL.replace(
        "frequency = 6.2", "frequency = 6.2\nprotocol = effective\nbase = simple"))
    assert abs(effective.spacing_value() - t_period / 2.25) < 1e-15
    assert effective.drive_label() == "simple"


def test_explicit_spacing_wins():
    text = MINIMAL.replace("frequency = 6.2", "spacing = 0.01")
    cfg = parse_config(text)
    assert cfg.spacing_value() == 0.01


def test_resolved_round_trip():
    cfg = parse_config(MINIMAL)
    again = parse_config(cfg.resolved())
    assert again == cfg

    rich = RunConfig(
        n_sites=6,
        gauge_spin=1.0,
        boundary=Boundary.OBC,
        J=0.7,
        K=3.3,
        h=0.25,
        eps1=1.0,
        eps2=0.5,
        protocol="effective",
        base="simple",
        orders=(0, 1),
        spacing=0.004,
        n_periods=250,
        stride=5,
        initial="staggered_vacuum",
        observables=("violG", "nd_0"),
        dense_cap=512,
    )
    assert parse_config(rich.resolved()) == rich


def test_initial_pattern_keywords():
    cfg = parse_config(MINIMAL)
    assert cfg.initial_pattern() == "dudududu"
    stag = parse_config(MINIMAL + "\n[run]\ninitial = staggered_vacuum\n")
    assert stag.initial_pattern() == "duuuduuu"
    explicit = parse_config(MINIMAL + "\n[run]\ninitial = uduududu\n")
    assert explicit.initial_pattern() == "uduududu"


def test_rejects_unknown_and_malformed():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(MINIMAL + "\n[extra]\nx = 1\n")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(MINIMAL + "\n[run]\ntypo = 1\n")
    with pytest.raises(ConfigError, match="n_sites"):
        parse_config("[drive]\nfrequency = 6.2\n")
    with pytest.raises(ConfigError, match="malformed"):
        parse_config("not an ini file [[[")
    with pytest.raises(ConfigError, match="\\[drive\\] frequency"):
        parse_config(MINIMAL.replace("6.2", "fast"))


def test_rejects_inconsistent_drive():
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config("[lattice]\nn_sites = 4\n")
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(MINIMAL.replace("frequency = 6.2",
                                     "frequency = 6.2\nspacing = 0.01"))
    with pytest.raises(ConfigError, match="positive"):
        parse_config(MINIMAL.replace("6.2", "-1.0"))
    with pytest.raises(ConfigError, match="protocol"):
        parse_config(MINIMAL.replace("frequency = 6.2",
                                     "frequency = 6.2\nprotocol = ramp"))
    with pytest.raises(ConfigError, match="orders"):
        parse_config(MINIMAL.replace("frequency = 6.2",
                                     "frequency = 6.2\norders = 0,3"))
    with pytest.raises(ConfigError, match="n_periods"):
        parse_config(MINIMAL.replace("frequency = 6.2",
                                     "frequency = 6.2\nn_periods = 0"))
    with pytest.raises(ConfigError, match="stride"):
        parse_config(MINIMAL.replace("frequency = 6.2",
                                     "frequency = 6.2\nstride = 0"))
    with pytest.raises(ConfigError, match="boundary"):
        parse_config(MINIMAL.replace("n_sites = 4",
                                     "n_sites = 4\nboundary = twisted"))


def test_observables_parsing():
    cfg = parse_config(MINIMAL + "\n[run]\nobservables = violG, nd_0 ,violS\n")
    assert cfg.observables == ("violG", "nd_0", "violS")
    everything = parse_config(MINIMAL + "\n[run]\nobservables = all\n")
    assert everything.observables is None


def test_load_config(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(MINIMAL)
    assert load_config(path) == parse_config(MINIMAL)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.ini")

import pytest

from bllab.config import ConfigError, RunConfig, load_config, parse_config

BASE = "[run]\nschema_version = 1\n"


def test_defaults():
    cfg = parse_config(BASE, env={})
    assert cfg.gamma == 0.5 and cfg.epsilon_list == (0.2, 0.14, 0.1, 0.07)
    assert cfg.make_grid().n_y == 256


def test_fractions_and_lists():
    cfg = parse_config(BASE + "gamma = 1\nepsilon_list = 1/4, 1/8, 1/16\n", env={})
    assert cfg.gamma == 1.0 and cfg.epsilon_list == (0.25, 0.125, 0.0625)


@pytest.mark.parametrize("text, match", [
    ("[run]\ngamma = 1/2\n", "schema_version"),
    ("[run]\nschema_version = 2\n", "schema_version"),
    (BASE + "colour = red\n", "unknown key"),
    (BASE + "[plots]\nwidth = 3\n", "unknown section"),
    (BASE + "epsilon_list = 0.2, 0.2, 0.1\n", "strictly decreasing"),
    (BASE + "epsilon_list = 0.1, 0.2\n", "strictly decreasing"),
    (BASE + "gamma = 0.7\n", "gamma"),
    (BASE + "T = -1\n", "positive"),
    (BASE + "T = soon\n", "not a number"),
    (BASE + "[checks]\nassumptions = maybe\n", "boolean"),
    ("not an ini file", "malformed"),
])
def test_rejected(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text, env={})


def test_seed_from_environment():
    assert parse_config(BASE + "seed = 3\n", env={}).seed == 3
    assert parse_config(BASE + "seed = 3\n", env={"BLL_SEED": "11"}).seed == 11


def test_digest_ignores_output_location():
    a = parse_config(BASE + "out = a\njobs = 1\n", env={})
    b = parse_config(BASE + "out = b\njobs = 4\n", env={})
    c = parse_config(BASE + "beta = 2\n", env={})
    assert a.digest() == b.digest() != c.digest()


def test_norm_parameters():
    cfg = parse_config(BASE + "[norms]\nM = 9\nrho0 = 0.5\na0 = 0.2\n", env={})
    assert cfg.gevrey().M == 9 and cfg.gevrey().rho0 == 0.5
    assert cfg.layer_norm().a0 == 0.2


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.ini")


def test_shipped_configs_parse():
    from pathlib import Path
    for p in sorted((Path(__file__).parent.parent / "configs").glob("*.ini")):
        assert isinstance(load_config(p, env={}), RunConfig)

import pytest
import yaml
from hypothesis import given, settings

from plurigreen.config import RunConfig, parse_config, serialize
from plurigreen.errors import ConfigParseError, ConfigValidationError
from strategies import config_dicts


@settings(max_examples=100, deadline=None)
@given(config_dicts())
def test_serialize_round_trip(d):
    cfg = parse_config(yaml.safe_dump(d))
    assert parse_config(serialize(cfg)) == cfg
    assert serialize(parse_config(serialize(cfg))) == serialize(cfg)


def test_missing_block_filled_with_defaults():
    cfg = parse_config("version: 1\ncommand: torus\n")
    assert cfg.torus is not None and cfg.torus.epsilon == 0.3
    assert cfg.block is cfg.torus


def test_complex_positions_accept_strings_and_numbers():
    cfg = parse_config("version: 1\ncommand: green\ngreen:\n  domain: {kind: ball, resolution: 32}\n"
                       "  singularities:\n    - {position: ['0.1+0.05j', 0], epsilon: 0.2, f: [z1, z2]}\n")
    assert cfg.green.singularities[0].position == [0.1 + 0.05j, 0]


def test_parse_error_reports_location():
    with pytest.raises(ConfigParseError) as info:
        parse_config("version: 1\ncommand: green\ngreen: {domain: [1, 2}\n")
    assert (info.value.line, info.value.column) == (3, 22)
    assert "expected" in info.value.expected


@pytest.mark.parametrize("text", ["- 1\n- 2\n", "just text\n", ""])
def test_top_level_must_be_mapping(text):
    with pytest.raises(ConfigParseError):
        parse_config(text)


def test_validation_lists_every_violation():
    text = ("version: 2\ncommand: green\ngreen:\n  domain: {resolution: 8}\n  backend: spectral\n"
            "  tolerance: 1e-3\n")
    with pytest.raises(ConfigValidationError) as info:
        parse_config(text)
    fields = {f for f, _ in info.value.violations}
    assert {"version", "green.domain.resolution", "green.backend", "green.tolerance"} <= fields


def test_only_the_selected_block_is_allowed():
    with pytest.raises(ConfigValidationError):
        parse_config("version: 1\ncommand: torus\nray: {T: 2}\n")


@pytest.mark.parametrize("block,msg", [
    ("green: {singularities: [{position: [0.0], epsilon: 0.0, f: [z]}]}", "> 0"),
    ("green: {singularities: [{position: [0.0], epsilon: 0.2, f: [z]},"
     " {position: [0.1], epsilon: 0.2, f: [z]}]}", "disjoint"),
    ("green: {singularities: [{position: [0.0], epsilon: 0.2, f: ['1 + z']}]}", "vanish"),
    ("green: {singularities: [{position: [0.0, 0.0], epsilon: 0.2, f: [z]}]}", "position"),
])
def test_semantic_violations(block, msg):
    with pytest.raises(ConfigValidationError, match=msg):
        parse_config(f"version: 1\ncommand: green\n{block}\n")


def test_seed_must_fit_u64():
    with pytest.raises(ConfigValidationError):
        parse_config(f"version: 1\ncommand: torus\nseed: {2 ** 64}\n")


def test_model_is_frozen_to_known_commands():
    with pytest.raises(Exception):
        RunConfig(command="launch")

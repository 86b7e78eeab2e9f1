import json

import pytest
from hypothesis import given, strategies as st

from atomreload.params import (
    ConfigError, SimConfig, ValidationError, config_from_dict, config_hash, config_to_dict,
    default_paper_config, dumps_config, load_config, override, validate,
)


def test_defaults():
    c = default_paper_config()
    assert c.reservoir_sites == 105
    assert c.mot_load_rate_per_s == 1.5e6
    assert c.mot_saturation_time_ms == pytest.approx(80.0)
    assert c.vacuum_lifetime_s == 30.0
    assert c.target_sites == 1225
    assert validate(c).ok and not validate(c)


def test_empty_document_is_default():
    assert load_config("{}") == default_paper_config()


def test_single_override():
    c = load_config('{"reservoir_sites": 50}')
    assert c == default_paper_config().replace(reservoir_sites=50)


def test_negative_lifetime_names_key():
    with pytest.raises(ValidationError) as exc:
        load_config('{"vacuum_lifetime_s": -1}')
    assert "vacuum_lifetime_s" in str(exc.value)
    assert len(exc.value.report) == 1


@pytest.mark.parametrize("change", [{"lac_fill_probability": 1.5}, {"target_spacing_um": 0.0}])
def test_one_violation(change):
    assert len(validate(SimConfig(**change))) == 1


def test_nested_violation_path():
    report = validate(SimConfig().replace(imaging=SimConfig().imaging.__class__(mode="bogus")))
    assert [v.path for v in report.violations] == ["imaging.mode"]


def test_malformed_and_unknown():
    with pytest.raises(ConfigError):
        load_config("{not json")
    with pytest.raises(ConfigError, match="losses.nope"):
        load_config('{"losses": {"nope": 1}}')
    with pytest.raises(ConfigError, match="reservoir_sites"):
        load_config('{"reservoir_sites": 10.5}')
    with pytest.raises(ConfigError):
        load_config('{"vacuum_lifetime_s": "long"}')


def test_override_dotted():
    c = override(default_paper_config(), "losses.rearr_depth_fraction", 1.5)
    assert c.losses.rearr_depth_fraction == 1.5
    with pytest.raises(ConfigError):
        override(c, "losses.missing", 1)


def test_hash_changes_with_content():
    a = default_paper_config()
    assert config_hash(a) == config_hash(load_config(dumps_config(a)))
    assert config_hash(a) != config_hash(a.replace(rng_seed=1))


@given(sites=st.integers(1, 400), life=st.floats(0.1, 1e4), p=st.floats(0, 1),
       depth=st.floats(0.1, 3.0), policy=st.sampled_from(["optimal", "greedy"]))
def test_round_trip(sites, life, p, depth, policy):
    c = override(default_paper_config(), "reservoir_sites", sites)
    c = override(c, "vacuum_lifetime_s", life)
    c = override(c, "lac_fill_probability", p)
    c = override(c, "losses.rearr_depth_fraction", depth)
    c = override(c, "planner.policy", policy)
    assert load_config(dumps_config(c)) == c
    assert config_from_dict(json.loads(json.dumps(config_to_dict(c)))) == c

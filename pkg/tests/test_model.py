import dataclasses

import pytest

from sensorcast.model import (
    AIR_QUALITY,
    MapGridSpec,
    PipelineConfig,
    StressorKind,
    config_from_dict,
    config_to_dict,
    dump_config,
    load_config,
    validate_config,
)


def test_defaults_are_valid_and_match_operating_point():
    cfg = PipelineConfig()
    assert validate_config(cfg) == []
    assert (cfg.arx_p, cfg.arx_q) == (2, 2)
    assert cfg.typical_window_days == 30
    assert cfg.horizon_steps == 24 and cfg.step_minutes == 60
    assert cfg.confidence_levels == (0.90, 0.95, 0.98)
    assert cfg.interp_method == "idw" and cfg.idw_power == 2.0


def test_zero_step_is_reported():
    out = validate_config(dataclasses.replace(PipelineConfig(), step_minutes=0))
    assert out == ["step_minutes must be ≥ 1"]


def test_bad_confidence_level_names_field():
    out = validate_config(dataclasses.replace(PipelineConfig(), confidence_levels=(0.9, 1.5)))
    assert len(out) == 1 and "confidence_levels" in out[0]


@pytest.mark.parametrize("field,value,needle", [
    ("step_minutes", 7, "divide 1440"),
    ("arx_p", 0, "arx_p"),
    ("horizon_steps", 0, "horizon_steps"),
    ("hampel_k", 0.0, "hampel_k"),
    ("interp_method", "kriging", "interp_method"),
    ("high_cut", 20.0, "Nyquist"),
    ("grid", MapGridSpec(47.0, 19.0, 400.0), "bearing"),
])
def test_each_violation_names_its_field(field, value, needle):
    out = validate_config(dataclasses.replace(PipelineConfig(), **{field: value}))
    assert any(needle in v for v in out), out


def test_stressor_parse_routes_unknown_to_other():
    assert StressorKind.parse("temperature") is StressorKind.TEMPERATURE
    assert StressorKind.parse("noise_level") is StressorKind.OTHER
    assert not StressorKind.OTHER.is_air_quality
    assert len(AIR_QUALITY) == 7


def test_yaml_round_trip(tmp_path):
    cfg = dataclasses.replace(
        PipelineConfig(), grid=MapGridSpec(47.5, 19.0, 30.0, (800.0, 600.0), (10, 12)),
        interp_method="natural", seed=42,
    )
    path = tmp_path / "cfg.yaml"
    dump_config(cfg, path)
    assert load_config(path) == cfg


def test_partial_yaml_takes_defaults(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("seed: 3\nreliability_c:\n  temperature: 100\n")
    cfg = load_config(path)
    assert cfg.seed == 3
    assert cfg.reliability_constant("temperature") == 100.0
    assert cfg.reliability_constant("carbon_monoxide") == 1500.0


def test_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown config keys"):
        config_from_dict({"stepminutes": 60})


def test_to_dict_is_plain():
    d = config_to_dict(PipelineConfig())
    assert isinstance(d["confidence_levels"], list)

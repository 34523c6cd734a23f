import pytest

from jbsim.config import ConfigError, ScenarioConfig, load_config


class TestDefaults:
    def test_empty_overrides_gives_table_defaults(self):
        s = load_config()
        assert s.scenario.initial_speed == 27.78
        assert s.scenario.intra_gap == 5.0
        assert s.scenario.time_headway == 1.2
        assert s.jb.min_interval == 0.1
        assert s.jb.max_interval == 0.4
        assert s.jb.responsiveness == 1.0
        assert s.jb.max_jerk == 2.0
        assert s.jbe.slight_decel_offset == 0.5
        assert s.jbe.emergency_threshold == -5.0
        assert s.jbe.revert_time == 20.0
        assert s.channel.bitrate == 6e6
        assert s.channel.tx_power_mw == 100.0

    def test_default_density_is_low_120_vehicles(self):
        s = load_config()
        assert s.scenario.total_vehicles == 120

    def test_high_density_preset_gives_480_vehicles(self):
        s = load_config(None, {"scenario.density": "high"})
        assert s.scenario.total_vehicles == 480
        assert s.scenario.platoon_size == 15

    def test_desk_preset(self):
        s = load_config(None, {"scenario.density": "desk"})
        assert s.scenario.total_vehicles == 30


class TestValidation:
    def test_platoon_size_one_rejected(self):
        with pytest.raises(ConfigError, match="platoon size"):
            load_config(None, {"scenario.platoon_size": 1})

    def test_unknown_key_named_in_error(self):
        with pytest.raises(ConfigError, match="scenario.speed_limit"):
            load_config(None, {"scenario.speed_limit": 30.0})

    def test_wrong_type_named_in_error(self):
        with pytest.raises(ConfigError, match="scenario.initial_speed"):
            load_config(None, {"scenario.initial_speed": "fast"})

    def test_unknown_density_preset(self):
        with pytest.raises(ConfigError, match="density"):
            load_config(None, {"scenario.density": "medium"})

    def test_interval_ordering_enforced(self):
        with pytest.raises(ConfigError):
            load_config(None, {"jb.min_interval": 0.4, "jb.max_interval": 0.4})

    def test_scenario_config_direct_invariants(self):
        with pytest.raises(ValueError):
            ScenarioConfig(platoon_size=1)
        with pytest.raises(ValueError):
            ScenarioConfig(intra_gap=-1.0)


class TestFileLoading:
    def test_yaml_file_overrides(self, tmp_path):
        cfg = tmp_path / "run.yaml"
        cfg.write_text("scenario.seed: 7\nscenario.density: desk\ncacc.alpha1: 0.6\n")
        s = load_config(cfg)
        assert s.scenario.seed == 7
        assert s.scenario.total_vehicles == 30
        assert s.cacc.alpha1 == 0.6

    def test_explicit_geometry_beats_preset(self, tmp_path):
        cfg = tmp_path / "run.yaml"
        cfg.write_text("scenario.density: desk\nscenario.platoons_per_lane: 3\n")
        s = load_config(cfg)
        assert s.scenario.platoons_per_lane == 3
        assert s.scenario.lanes == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.yaml")

    def test_non_mapping_file(self, tmp_path):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError, match="flat mapping"):
            load_config(cfg)

    def test_overrides_beat_file(self, tmp_path):
        cfg = tmp_path / "run.yaml"
        cfg.write_text("scenario.seed: 7\n")
        s = load_config(cfg, {"scenario.seed": 9})
        assert s.scenario.seed == 9

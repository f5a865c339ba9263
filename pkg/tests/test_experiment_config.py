"""
實驗設定檔 schema 測試
"""
import json

import pytest
from pydantic import ValidationError

from lattice_regression.services.errors import ConfigurationError
from lattice_regression.services.experiment_config import DEFAULT_BOUNDS, ExperimentConfig, load_config


class TestLoadConfig:
    def test_committed_configs_are_valid(self, config_dir):
        paths = sorted(config_dir.glob("*.json"))
        assert paths
        for path in paths:
            assert isinstance(load_config(path), ExperimentConfig)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="不存在"):
            load_config(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="JSON"):
            load_config(path)

    def test_round_trip_through_file(self, tmp_path, config_payload):
        path = tmp_path / "aar.json"
        path.write_text(json.dumps(config_payload("aar")), encoding="utf-8")
        assert load_config(path).game.T == 40


class TestValidation:
    def test_unknown_key_rejected(self, config_payload):
        payload = config_payload("aar", colour="red")
        with pytest.raises(ConfigurationError):
            load_config(payload)

    def test_schema_version(self, config_payload):
        with pytest.raises(ConfigurationError, match="schema_version"):
            load_config(config_payload("aar", schema_version=2))

    @pytest.mark.parametrize("game", [{"p": 1.0, "T": 5}, {"p": 2.0, "T": 0}, {"p": 2.0, "T": 5, "Y": 0.0},
                                      {"p": 2.0, "T": 5, "a": -1.0}, {"p": 2.0, "T": 5, "a_rule": "median"}])
    def test_invalid_game(self, config_payload, game):
        with pytest.raises(ConfigurationError):
            load_config(config_payload("blaar", game=game))

    def test_data_source_is_exclusive(self, config_payload):
        with pytest.raises(ConfigurationError):
            load_config(config_payload("aar", input_file="data.csv"))
        payload = config_payload("aar")
        del payload["generator"]
        with pytest.raises(ConfigurationError):
            load_config(payload)

    def test_aar_requires_coordinates(self, config_payload):
        with pytest.raises(ConfigurationError):
            load_config(config_payload("aar", space={"kind": "measure", "weights": [1.0, 2.0]}))

    def test_grid_modes_require_sobolev(self, config_payload):
        payload = config_payload("sobolev")
        del payload["sobolev"]
        with pytest.raises(ConfigurationError):
            load_config(payload)

    def test_continuity_condition(self, config_payload):
        with pytest.raises(ConfigurationError, match="s·p > m"):
            load_config(config_payload("sobolev", sobolev={"s": 0.5}))

    def test_blaar_rejects_grid(self, config_payload):
        with pytest.raises(ConfigurationError):
            load_config(config_payload("blaar", space={"kind": "grid", "grid": {"N": 16}}))

    def test_noise_below_range(self, config_payload):
        with pytest.raises(ConfigurationError):
            load_config(config_payload("blaar", generator={"seed": 1, "outcomes": "comparator", "noise": 1.0}))

    def test_measure_weights_positive(self, config_payload):
        with pytest.raises(ConfigurationError):
            load_config(config_payload("blaar", space={"kind": "measure", "weights": [1.0, 0.0]}))

    def test_unknown_bound(self, config_payload):
        with pytest.raises(ConfigurationError, match="未知的界限"):
            load_config(config_payload("aar", bounds=["lemma9"]))

    def test_bound_must_fit_mode(self, config_payload):
        with pytest.raises(ConfigurationError, match="不支援界限"):
            load_config(config_payload("blaar", bounds=["eq1"]))


class TestHelpers:
    @pytest.mark.parametrize("mode", sorted(DEFAULT_BOUNDS))
    def test_default_bounds(self, make_config, mode):
        assert make_config(mode).bound_selectors() == list(DEFAULT_BOUNDS[mode])

    def test_explicit_bounds(self, make_config):
        assert make_config("aar", bounds=["eq2", "remark"]).bound_selectors() == ["eq2", "remark"]

    def test_with_seed(self, make_config):
        config = make_config("blaar")
        assert config.with_seed(99).generator.seed == 99
        assert config.with_seed(None) is config
        assert config.generator.seed == 3

    def test_config_is_frozen(self, make_config):
        config = make_config("kaar")
        with pytest.raises(ValidationError):
            config.name = "other"

"""
測試配置和共享夾件
"""
import copy
from pathlib import Path

import numpy as np
import pytest

from lattice_regression.services.experiment_config import load_config
from lattice_regression.services.lattice_core import MeasureSpace, make_signals
from lattice_regression.services.settings import get_settings

PROJECT_ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = PROJECT_ROOT / "configs"


@pytest.fixture(autouse=True)
def isolated_output_dir(tmp_path, monkeypatch):
    """每個測試都有自己的 OUTPUT_DIR，並清除 Settings 快取"""
    output_dir = tmp_path / "outputs"
    monkeypatch.setenv("OUTPUT_DIR", str(output_dir))
    get_settings.cache_clear()
    yield output_dir
    get_settings.cache_clear()


@pytest.fixture
def rng():
    """固定種子的亂數產生器"""
    return np.random.default_rng(12345)


@pytest.fixture
def config_dir():
    return CONFIG_DIR


@pytest.fixture
def random_signals(rng):
    """在非均勻權重的 12 點測度空間上產生 4 個隨機訊號"""
    space = MeasureSpace(weights=rng.uniform(0.5, 1.5, 12))
    return make_signals(rng.standard_normal((4, 12)), space)


BASE_CONFIGS = {
    "aar": {
        "schema_version": 1,
        "name": "test_aar",
        "mode": "aar",
        "game": {"p": 2.0, "Y": 1.0, "T": 40},
        "space": {"kind": "coordinates", "n": 3},
        "generator": {"seed": 1, "outcomes": "comparator", "noise": 0.1},
        "comparators": {"count": 10},
    },
    "kaar": {
        "schema_version": 1,
        "name": "test_kaar",
        "mode": "kaar",
        "game": {"p": 2.0, "Y": 1.0, "T": 30, "a": 1.0},
        "space": {"kind": "coordinates", "n": 3},
        "generator": {"seed": 2},
        "comparators": {"count": 10},
    },
    "blaar": {
        "schema_version": 1,
        "name": "test_blaar",
        "mode": "blaar",
        "game": {"p": 3.0, "Y": 1.0, "T": 40},
        "space": {"kind": "measure", "weights": [1.0, 0.5, 1.5, 1.0, 0.5, 1.0, 1.5, 1.0]},
        "generator": {"seed": 3, "outcomes": "comparator", "noise": 0.1},
        "comparators": {"count": 10},
    },
    "sobolev": {
        "schema_version": 1,
        "name": "test_sobolev",
        "mode": "sobolev",
        "game": {"p": 2.0, "Y": 1.0, "T": 30},
        "space": {"kind": "grid", "grid": {"m": 1, "N": 32}},
        "generator": {"seed": 4, "outcomes": "comparator", "noise": 0.1, "band_modes": 2},
        "sobolev": {"s": 1.0},
        "comparators": {"count": 5},
    },
    "perceptron": {
        "schema_version": 1,
        "name": "test_perceptron",
        "mode": "perceptron",
        "game": {"p": 2.0, "Y": 1.0, "T": 40},
        "space": {"kind": "grid", "grid": {"m": 1, "N": 32}},
        "generator": {"seed": 5, "band_modes": 2},
        "sobolev": {"s": 1.0},
        "perceptron": {"gamma": 0.05, "a": 1.0},
        "comparators": {"count": 3, "include_zero": False},
    },
}


@pytest.fixture
def config_payload():
    """回傳指定 mode 的設定字典副本，可在測試中自由修改"""
    def _factory(mode: str, **overrides):
        payload = copy.deepcopy(BASE_CONFIGS[mode])
        payload.update(overrides)
        return payload
    return _factory


@pytest.fixture
def make_config(config_payload):
    """回傳已驗證的 ExperimentConfig"""
    def _factory(mode: str, **overrides):
        return load_config(config_payload(mode, **overrides))
    return _factory

"""
輸入檔 (CSV) 讀取服務測試
"""
import numpy as np
import pytest

from lattice_regression.services.errors import ConfigurationError, DimensionMismatchError
from lattice_regression.services.experiment_config import load_config
from lattice_regression.services.file_processor import FileProcessorService


@pytest.fixture
def processor():
    return FileProcessorService()


def _file_config(config_payload, tmp_path, content, mode="aar", **overrides):
    path = tmp_path / "game.csv"
    path.write_bytes(content if isinstance(content, bytes) else content.encode("utf-8"))
    payload = config_payload(mode, input_file=str(path), **overrides)
    del payload["generator"]
    return load_config(payload)


class TestReadTable:
    def test_comma(self, processor):
        df = processor.read_table(b"x0,x1,y\n1,2,0.5\n", "a.csv")
        assert list(df.columns) == ["x0", "x1", "y"]

    def test_semicolon(self, processor):
        df = processor.read_table(b"x0;x1;y\n1;2;0.5\n3;4;-0.5\n", "a.csv")
        assert df["y"].tolist() == [0.5, -0.5]

    def test_strips_column_whitespace_and_blank_rows(self, processor):
        df = processor.read_table(b" x0 , y \n1,0.5\n,\n2,0.25\n", "a.csv")
        assert list(df.columns) == ["x0", "y"]
        assert len(df) == 2

    def test_missing_outcome_column(self, processor):
        with pytest.raises(ConfigurationError, match="'y'"):
            processor.read_table(b"x0,x1\n1,2\n", "a.csv")

    def test_non_numeric(self, processor):
        with pytest.raises(ConfigurationError):
            processor.read_table(b"x0,y\nabc,0.5\n", "a.csv")

    def test_non_finite(self, processor):
        with pytest.raises(ConfigurationError):
            processor.read_table(b"x0,y\ninf,0.5\n", "a.csv")

    def test_big5_content(self, processor):
        content = "x0,y,備註\n1,0.5,1\n".encode("big5")
        df = processor.read_table(content, "a.csv")
        assert df["x0"].tolist() == [1]


class TestLoadGame:
    def test_committed_example(self, processor, config_dir):
        config = load_config(config_dir / "aar_from_file.json")
        generated = processor.load_game(config, base_dir=config_dir)
        assert len(generated.game.signals) == 8
        np.testing.assert_allclose(generated.game.signals[0].values, [0.5, 0.1])
        assert generated.game.outcomes[-1] == pytest.approx(-0.35)
        assert [c.id for c in generated.comparators] == ["explicit-0", "explicit-1", "zero"]

    def test_row_count_must_match_T(self, processor, config_payload, tmp_path):
        config = _file_config(config_payload, tmp_path, "x0,x1,x2,y\n1,0,0,0.5\n",
                              game={"p": 2.0, "Y": 1.0, "T": 3})
        with pytest.raises(DimensionMismatchError):
            processor.load_game(config)

    def test_missing_signal_column(self, processor, config_payload, tmp_path):
        config = _file_config(config_payload, tmp_path, "x0,x1,y\n1,0,0.5\n", game={"p": 2.0, "Y": 1.0, "T": 1})
        with pytest.raises(ConfigurationError, match="x2"):
            processor.load_game(config)

    def test_missing_file(self, processor, config_payload, tmp_path):
        payload = config_payload("aar", input_file=str(tmp_path / "absent.csv"))
        del payload["generator"]
        with pytest.raises(ConfigurationError, match="不存在"):
            processor.load_game(load_config(payload))

    def test_file_size_limit(self, processor, config_payload, tmp_path):
        config = _file_config(config_payload, tmp_path, "x0,x1,x2,y\n1,0,0,0.5\n", game={"p": 2.0, "Y": 1.0, "T": 1})
        processor.max_file_size = 4
        with pytest.raises(ConfigurationError, match="大小"):
            processor.load_game(config)

    def test_measure_space(self, processor, config_payload, tmp_path):
        rows = "x0,x1,x2,x3,x4,x5,x6,x7,y\n" + "1,0,0,0,0,0,0,1,0.5\n0,1,0,0,0,0,0,0,-0.5\n"
        config = _file_config(config_payload, tmp_path, rows, mode="blaar", game={"p": 3.0, "Y": 1.0, "T": 2})
        generated = processor.load_game(config)
        assert generated.game.signals[0].space.size == 8
        assert generated.comparators[0].functional.exponent == pytest.approx(1.5)

    def test_perceptron_points(self, processor, config_payload, tmp_path):
        config = _file_config(config_payload, tmp_path, "point0,y\n0.0,1\n1.5,-1\n3.0,1\n", mode="perceptron",
                              game={"p": 2.0, "Y": 1.0, "T": 3})
        generated = processor.load_game(config)
        assert generated.labels.tolist() == [1, -1, 1]
        assert generated.points.shape == (3, 1)
        assert generated.comparators == []

    def test_perceptron_labels_checked(self, processor, config_payload, tmp_path):
        config = _file_config(config_payload, tmp_path, "point0,y\n0.0,0.5\n", mode="perceptron",
                              game={"p": 2.0, "Y": 1.0, "T": 1})
        with pytest.raises(ConfigurationError):
            processor.load_game(config)

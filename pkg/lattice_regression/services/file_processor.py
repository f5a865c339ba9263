from io import StringIO
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from .blaar import SemiOnlineGame
from .data_generator import Comparator, GeneratedGame, build_space, comparator_exponent, sobolev_params
from .errors import ConfigurationError, DimensionMismatchError
from .experiment_config import ExperimentConfig
from .lattice_core import DualVector, GameConfig, Signal
from .logger import get_logger
from .sobolev_bridge import dual_signal

OUTCOME_COLUMN = "y"


class FileProcessorService:
    def __init__(self):
        """
        初始化 FileProcessorService。

        此服務負責把使用者提供的遊戲資料檔 (CSV) 轉成半線上遊戲。
        座標或測度空間的訊號欄位命名為 x0, x1, ...；網格模式的查詢點欄位命名為 point0, point1, ...；
        結果欄位一律命名為 y。
        """
        self.logger = get_logger(__name__)
        self.supported_encodings = ['utf-8', 'utf-8-sig', 'big5', 'cp1252', 'latin1']
        self.max_file_size = 50 * 1024 * 1024  # 50MB

    def load_game(self, config: ExperimentConfig, base_dir: Optional[Path] = None) -> GeneratedGame:
        """
        讀取 config.input_file 並建立遊戲，是此服務的主要進入點。

        檔案中的列數決定 T；必須與設定中的 game.T 一致。比較對象只包含設定中的明確向量與零向量。
        :param config: 已驗證的實驗設定。
        :param base_dir: (可選) 相對路徑的基準目錄，通常是設定檔所在目錄。
        :return: 一個 GeneratedGame。
        :raises ConfigurationError: 檔案不存在、過大或欄位缺漏。
        """
        path = Path(config.input_file)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.exists():
            raise ConfigurationError(f"輸入檔不存在: {path}")
        if path.stat().st_size > self.max_file_size:
            raise ConfigurationError(f"輸入檔 {path.name} 超過大小限制")

        self.logger.info(f"開始處理輸入檔: {path.name}")
        try:
            df = self.read_table(path.read_bytes(), path.name)
            if len(df) != config.game.T:
                raise DimensionMismatchError(f"輸入檔有 {len(df)} 列，但設定中 T={config.game.T}")
            if config.mode in ("sobolev", "perceptron"):
                return self._grid_game(df, config)
            return self._signal_game(df, config)
        except Exception as e:
            self.logger.error(f"處理輸入檔 {path.name} 失敗: {e}")
            raise

    def read_table(self, content_bytes: bytes, filename: str) -> pd.DataFrame:
        """
        把 CSV 的位元組內容解析成 DataFrame。

        先以預設分隔符解析，失敗或只得到單一欄位時再依序嘗試其他分隔符，最後清理空白列與欄名。
        :param content_bytes: 檔案的原始位元組內容。
        :param filename: 原始檔案名稱，用於日誌。
        :return: 清理過的 DataFrame。
        """
        text_content = self._decode_content(content_bytes, filename)
        if not text_content:
            raise ConfigurationError(f"無法解碼檔案內容: {filename}")

        df = None
        for sep in [',', ';', '\t', '|']:
            try:
                candidate = pd.read_csv(StringIO(text_content), sep=sep)
            except Exception:
                continue
            if OUTCOME_COLUMN in [str(c).strip() for c in candidate.columns]:
                df = candidate
                if sep != ',':
                    self.logger.info(f"CSV 檔案 {filename} 使用分隔符 '{sep}' 解析成功")
                break
        if df is None:
            raise ConfigurationError(f"無法解析 CSV 檔案 {filename}，或缺少結果欄位 '{OUTCOME_COLUMN}'")
        return self._clean_dataframe(df)

    def _decode_content(self, content_bytes: bytes, filename: str) -> Optional[str]:
        """
        嘗試使用多種常見的編碼來解碼位元組內容。

        :param content_bytes: 要解碼的位元組內容。
        :param filename: 原始檔案名稱，用於日誌。
        :return: 解碼後的字串，如果所有編碼都失敗則返回 None。
        """
        for encoding in self.supported_encodings:
            try:
                return content_bytes.decode(encoding)
            except UnicodeDecodeError:
                continue
        self.logger.error(f"無法解碼檔案 {filename}")
        return None

    def _clean_dataframe(self, df: pd.DataFrame) -> pd.DataFrame:
        """去除欄名空白與全空列，並確認所有數值欄位都是有限數字。"""
        df = df.rename(columns=lambda c: str(c).strip())
        df = df.dropna(how='all').reset_index(drop=True)
        numeric = df.apply(pd.to_numeric, errors='coerce')
        if numeric.isna().any().any() or not np.all(np.isfinite(numeric.to_numpy(dtype=float))):
            raise ConfigurationError("輸入檔含有非數值或非有限值")
        return numeric

    def _columns(self, df: pd.DataFrame, prefix: str, expected: int) -> List[str]:
        columns = [f"{prefix}{i}" for i in range(expected)]
        missing = [c for c in columns if c not in df.columns]
        if missing:
            raise ConfigurationError(f"輸入檔缺少欄位: {missing}")
        return columns

    def _signal_game(self, df: pd.DataFrame, config: ExperimentConfig) -> GeneratedGame:
        space = build_space(config)
        size = config.space.n if space is None else space.size
        matrix = df[self._columns(df, "x", size)].to_numpy(dtype=float)
        signals = [Signal(row, space) for row in matrix]
        outcomes = df[OUTCOME_COLUMN].to_numpy(dtype=float)
        game = SemiOnlineGame(signals, outcomes,
                              GameConfig(p=config.game.p, Y=config.game.Y, T=config.game.T, a=config.game.a))
        exponent = comparator_exponent(config)
        comparators = [Comparator(f"explicit-{i}", DualVector(v, exponent, space))
                       for i, v in enumerate(config.comparators.vectors)]
        if config.comparators.include_zero:
            comparators.append(Comparator("zero", DualVector(np.zeros(size), exponent, space)))
        return GeneratedGame(game=game, comparators=comparators)

    def _grid_game(self, df: pd.DataFrame, config: ExperimentConfig) -> GeneratedGame:
        grid = build_space(config)
        params = sobolev_params(config)
        points = df[self._columns(df, "point", grid.m)].to_numpy(dtype=float)
        signals = [dual_signal(x, grid, params) for x in points]
        outcomes = df[OUTCOME_COLUMN].to_numpy(dtype=float)
        labels = None
        if config.mode == "perceptron":
            if not np.all(np.isin(outcomes, (-1.0, 1.0))):
                raise ConfigurationError("perceptron 模式的 y 欄位必須是 -1 或 +1")
            labels = outcomes.astype(int)
        game = SemiOnlineGame(signals, outcomes,
                              GameConfig(p=params.dual_p, Y=config.game.Y, T=config.game.T, a=config.game.a))
        comparators = []
        if config.comparators.include_zero:
            comparators.append(Comparator("zero", DualVector(np.zeros(grid.size), params.p, grid.space)))
        return GeneratedGame(game=game, comparators=comparators, points=points, grid=grid, params=params,
                             labels=labels)

"""
實驗設定檔 (JSON) 的 schema。

所有實驗參數都寫在設定檔中並附上 schema_version；唯一的環境變數覆蓋是輸出目錄。
"""
import json
import math
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigurationError
from .logger import get_logger

logger = get_logger(__name__)

SCHEMA_VERSION = 1


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GameSpec(_StrictModel):
    """平方損失遊戲參數；p = "inf" 只有 film 情境允許，這裡一律要求有限。"""
    p: float = 2.0
    Y: float = 1.0
    T: int
    a: Optional[float] = None
    a_rule: Literal["algorithm", "proof"] = "algorithm"

    @field_validator("p")
    @classmethod
    def validate_p(cls, v):
        """晶格指數必須落在 (1, ∞)"""
        if not (v > 1 and math.isfinite(v)):
            raise ValueError(f"p 必須落在 (1, ∞)，收到 {v}")
        return v

    @field_validator("Y")
    @classmethod
    def validate_Y(cls, v):
        if not v > 0:
            raise ValueError("Y 必須為正")
        return v

    @field_validator("T")
    @classmethod
    def validate_T(cls, v):
        if v < 1:
            raise ValueError("T 必須 ≥ 1")
        return v

    @field_validator("a")
    @classmethod
    def validate_a(cls, v):
        if v is not None and not v > 0:
            raise ValueError("a 必須為正")
        return v


class GridSpec(_StrictModel):
    m: int = 1
    side: float = 2 * math.pi
    N: int = 64


class SpaceSpec(_StrictModel):
    """
    訊號所在空間：coordinates 為 R^n / ℓ_p^n，measure 為帶權重的有限測度空間，grid 為週期網格。
    """
    kind: Literal["coordinates", "measure", "grid"] = "coordinates"
    n: Optional[int] = None
    weights: Optional[List[float]] = None
    grid: Optional[GridSpec] = None

    @model_validator(mode="after")
    def check_kind(self):
        """依 kind 檢查必要欄位"""
        if self.kind == "coordinates" and (self.n is None or self.n < 1):
            raise ValueError("coordinates 空間需要正整數 n")
        if self.kind == "measure":
            if not self.weights:
                raise ValueError("measure 空間需要 weights")
            if any(w <= 0 for w in self.weights):
                raise ValueError("measure 空間的權重必須嚴格為正")
        if self.kind == "grid" and self.grid is None:
            raise ValueError("grid 空間需要 grid 設定")
        return self


class GeneratorSpec(_StrictModel):
    """
    合成資料產生器。outcomes = "random" 時結果為 [−Y, Y] 上的均勻亂數，
    "comparator" 時為產生比較對象的值加上 [−noise, noise] 的雜訊。
    """
    seed: int
    outcomes: Literal["random", "comparator"] = "random"
    X: float = 1.0
    noise: float = 0.0
    band_modes: int = 3

    @field_validator("X")
    @classmethod
    def validate_X(cls, v):
        if not v > 0:
            raise ValueError("X 必須為正")
        return v

    @field_validator("noise")
    @classmethod
    def validate_noise(cls, v):
        if v < 0:
            raise ValueError("noise 不可為負")
        return v


class ComparatorSpec(_StrictModel):
    """驗證用的比較對象：明確向量、隨機對偶向量、零向量與產生資料的比較對象。"""
    count: int = 20
    scale: float = 1.0
    include_zero: bool = True
    include_generating: bool = True
    include_ridge: bool = True
    vectors: List[List[float]] = Field(default_factory=list)


class SobolevSpec(_StrictModel):
    """Sobolev 平滑度 s；可積指數沿用 game.p。"""
    s: float = 2.0

    @field_validator("s")
    @classmethod
    def validate_s(cls, v):
        if not v > 0:
            raise ValueError("s 必須為正")
        return v


class PerceptronSpec(_StrictModel):
    gamma: float = 0.1
    a: float = 1.0

    @field_validator("gamma", "a")
    @classmethod
    def validate_positive(cls, v):
        if not v > 0:
            raise ValueError("gamma 與 a 必須為正")
        return v


class OutputSpec(_StrictModel):
    trace: str = "trace.json"
    losses: str = "losses.csv"
    report: str = "report.csv"


class ExperimentConfig(_StrictModel):
    """單一實驗的完整設定；mode 決定需要哪些區段。"""
    schema_version: int = SCHEMA_VERSION
    name: str
    mode: Literal["aar", "kaar", "blaar", "sobolev", "perceptron"]
    game: GameSpec
    space: SpaceSpec
    generator: Optional[GeneratorSpec] = None
    input_file: Optional[str] = None
    bounds: List[str] = Field(default_factory=list)
    comparators: ComparatorSpec = Field(default_factory=ComparatorSpec)
    sobolev: Optional[SobolevSpec] = None
    perceptron: Optional[PerceptronSpec] = None
    outputs: OutputSpec = Field(default_factory=OutputSpec)

    @field_validator("schema_version")
    @classmethod
    def validate_schema_version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"不支援的 schema_version {v}，目前版本為 {SCHEMA_VERSION}")
        return v

    @field_validator("name")
    @classmethod
    def validate_name(cls, v):
        if not v or not v.strip():
            raise ValueError("name 不能為空")
        return v.strip()

    @model_validator(mode="after")
    def check_mode_fields(self):
        """檢查 mode 與各區段是否一致，並要求資料來源二擇一"""
        if (self.generator is None) == (self.input_file is None):
            raise ValueError("generator 與 input_file 必須恰好提供一個")
        if self.mode in ("aar", "kaar") and self.space.kind != "coordinates":
            raise ValueError(f"{self.mode} 模式只支援 coordinates 空間")
        if self.mode in ("sobolev", "perceptron"):
            if self.space.kind != "grid":
                raise ValueError(f"{self.mode} 模式需要 grid 空間")
            if self.sobolev is None:
                raise ValueError(f"{self.mode} 模式需要 sobolev 設定")
            if self.sobolev.s * self.game.p <= self.space.grid.m:
                raise ValueError("需要 s·p > m")
        if self.mode == "blaar" and self.space.kind == "grid":
            raise ValueError("網格上的實驗請使用 sobolev 模式")
        if self.mode == "perceptron" and self.perceptron is None:
            raise ValueError("perceptron 模式需要 perceptron 設定")
        if self.generator is not None and self.generator.outcomes == "comparator" \
                and self.generator.noise >= self.game.Y:
            raise ValueError("noise 必須小於 Y")
        unknown = [b for b in self.bounds if b not in BOUND_SELECTORS]
        if unknown:
            raise ValueError(f"未知的界限選擇 {unknown}，可用值為 {BOUND_SELECTORS}")
        mismatched = [b for b in self.bounds if b not in MODE_SELECTORS[self.mode]]
        if mismatched:
            raise ValueError(f"{self.mode} 模式不支援界限 {mismatched}，可用值為 {MODE_SELECTORS[self.mode]}")
        return self

    def bound_selectors(self) -> List[str]:
        return list(self.bounds) or list(DEFAULT_BOUNDS[self.mode])

    def with_seed(self, seed: Optional[int]) -> "ExperimentConfig":
        """以 CLI 的 --seed 覆蓋產生器種子。"""
        if seed is None or self.generator is None:
            return self
        return self.model_copy(update={"generator": self.generator.model_copy(update={"seed": seed})})


BOUND_SELECTORS = ("eq1", "eq2", "remark", "kernel", "relaxed", "kaar", "theorem1", "mistakes")
DEFAULT_BOUNDS = {
    "aar": ("eq1", "kernel"),
    "kaar": ("kaar",),
    "blaar": ("theorem1",),
    "sobolev": ("theorem1",),
    "perceptron": ("mistakes",),
}
MODE_SELECTORS = {
    "aar": ("eq1", "eq2", "remark", "kernel", "relaxed"),
    "kaar": ("kaar",),
    "blaar": ("theorem1",),
    "sobolev": ("theorem1",),
    "perceptron": ("mistakes",),
}


def load_config(source: Union[str, Path, dict]) -> ExperimentConfig:
    """
    讀取並驗證實驗設定。

    :param source: JSON 檔案路徑或已解析的字典。
    :raises ConfigurationError: 檔案不存在、JSON 格式錯誤或 schema 驗證失敗。
    """
    try:
        if isinstance(source, dict):
            payload = source
        else:
            path = Path(source)
            if not path.exists():
                raise ConfigurationError(f"設定檔不存在: {path}")
            payload = json.loads(path.read_text(encoding="utf-8"))
        return ExperimentConfig.model_validate(payload)
    except json.JSONDecodeError as e:
        logger.error(f"設定檔 JSON 格式錯誤: {e}")
        raise ConfigurationError(f"設定檔 JSON 格式錯誤: {e}") from e
    except ValidationError as e:
        logger.error(f"設定檔驗證失敗: {e}")
        raise ConfigurationError(f"設定檔驗證失敗: {e}") from e

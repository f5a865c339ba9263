from functools import lru_cache
from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    執行期設定。

    唯一允許由環境變數覆蓋的項目是輸出目錄 (OUTPUT_DIR)；其餘一切實驗參數都寫在 JSON 設定檔中，
    以確保結果可重現、可比對。
    """
    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", extra="ignore")

    output_dir: Path = Path("outputs")


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """
    獲取 Settings 的單例實例 (工廠函式)。

    :return: 一個 Settings 實例。
    """
    return Settings()

import logging
import sys

import structlog

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

_configured = False


def _configure_structlog():
    """
    設定 structlog，使其建立在 Python 標準 `logging` 模組之上。

    事件會先經過 structlog 的處理器 (依等級過濾、格式化例外、以 logfmt 渲染 key/value)，
    再交給標準 logging 的 handler 輸出，因此 pytest 的 caplog 與任何標準 handler 都能接收到紀錄。
    此函式只會實際執行一次。
    """
    global _configured
    if _configured:
        return
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.LogfmtRenderer(key_order=["event"], drop_missing=True),
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
    _configured = True


def setup_logging(level: str = "INFO"):
    """
    在 CLI 啟動時設定全域日誌記錄器 (Logger)。

    此函式會配置根日誌記錄器 (root logger) 的等級，並添加一個輸出到標準錯誤 (stderr) 的處理器。
    標準輸出 (stdout) 保留給指令本身的結果。
    它會先清除任何已存在的處理器，以防止重複設定 (例如在測試中多次呼叫 CLI)。
    :param level: 日誌等級字串，例如 "INFO" 或 "DEBUG"。
    """
    _configure_structlog()
    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, level.upper(), logging.INFO))

    if root_logger.hasHandlers():
        root_logger.handlers.clear()

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root_logger.addHandler(handler)


def get_logger(name: str):
    """
    獲取一個具名日誌記錄器 (Logger) 的工廠函式。

    這是整個套件中獲取日誌記錄器的標準方式。回傳的是 structlog 的 BoundLogger，
    可以直接傳入 f-string 訊息，也可以附帶 key/value 結構化欄位，例如
    `logger.info("Lewis 基底求解完成", n=3, residual=1e-12)`。
    格式、等級與輸出目標由 `setup_logging` 統一設定。
    :param name: 日誌記錄器的名稱，通常傳入 `__name__` 以便追蹤日誌來源模組。
    :return: 一個 structlog BoundLogger 實例。
    """
    _configure_structlog()
    return structlog.stdlib.get_logger(name)

import argparse
import json
import sys
import threading
import uuid
from contextvars import ContextVar
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional

from lattice_regression import __version__
from lattice_regression.services import ExperimentService, get_settings, load_config, setup_logging
from lattice_regression.services.logger import get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_VERIFICATION_FAILED = 3

# 每次 CLI 呼叫的追蹤編號
run_id_var: ContextVar[str] = ContextVar('run_id', default="unknown")

_experiment_service_lock = threading.Lock()


@lru_cache(maxsize=8)
def get_experiment_service(output_dir: str, max_workers: Optional[int] = None) -> ExperimentService:
    """
    獲取或創建一個 ExperimentService 實例 (工廠函式)。

    同一個輸出目錄與執行緒數量只會建立一個實例。
    :param output_dir: 產出檔案的根目錄。
    :param max_workers: sweep 使用的執行緒數量。
    :return: 一個 ExperimentService 的實例。
    :raises Exception: 如果服務在初始化過程中失敗。
    """
    with _experiment_service_lock:
        try:
            service = ExperimentService(Path(output_dir), max_workers=max_workers)
            logger.info(f"ExperimentService 初始化成功 (輸出目錄: {output_dir})")
            return service
        except Exception as e:
            logger.error(f"ExperimentService 初始化失敗: {e}")
            raise


def create_response(success: bool, message: str, data: Any = None, error: str = None) -> dict:
    """
    建立標準化的 JSON 回應，成功時印到 stdout。

    :param success: 操作是否成功。
    :param message: 簡短訊息。
    :param data: (可選) 成功時要回傳的資料。
    :param error: (可選) 失敗時的錯誤描述。
    :return: 一個包含 run_id 的字典。
    """
    return {
        "success": success,
        "data": data,
        "message": message,
        "error": error,
        "run_id": run_id_var.get("unknown")
    }


def error_envelope(exc: BaseException, message: str = "指令執行失敗") -> dict:
    return {
        "success": False,
        "message": message,
        "error": str(exc),
        "error_type": type(exc).__name__,
        "run_id": run_id_var.get("unknown")
    }


def _emit(payload: dict, stream=None):
    stream = stream or sys.stdout
    stream.write(json.dumps(payload, ensure_ascii=False, sort_keys=True, default=str) + "\n")
    stream.flush()


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help="輸出目錄 (覆蓋 OUTPUT_DIR)")
    common.add_argument("--seed", type=int, default=None, help="覆蓋設定檔中的產生器種子")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="lattice-regression",
        description="Online square-loss regression in lattices: run, verify and tabulate regret bounds.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="執行一個設定，寫出 trace JSON 與 losses CSV")
    run.add_argument("config", type=Path)
    run.add_argument("--verify", action="store_true", help="同時驗證界限並寫出 report CSV")

    verify = sub.add_parser("verify", parents=[common], help="執行並驗證界限，失敗時離開碼為 3")
    verify.add_argument("config", type=Path)

    film = sub.add_parser("film", parents=[common], help="比較兩個後悔界並找出交叉點")
    film.add_argument("--pixels", type=int, default=786432)
    film.add_argument("--frames", type=int, default=2 * 786432)
    film.add_argument("--p", default="inf", help="晶格指數 (≥ 2 或 inf)")
    film.add_argument("--Y", type=float, default=1.0)
    film.add_argument("--X", type=float, default=1.0)
    film.add_argument("--fps", type=int, default=24)

    sweep = sub.add_parser("sweep", parents=[common], help="在 (p, T) 網格上執行並擬合成長階數")
    sweep.add_argument("config", type=Path)
    sweep.add_argument("--p", type=float, nargs="+", default=None, help="預設為設定檔的 p")
    sweep.add_argument("--T", type=int, nargs="+", default=[25, 50, 100, 200, 400])
    sweep.add_argument("--games", type=int, default=10)
    sweep.add_argument("--workers", type=int, default=None)

    selftest = sub.add_parser("selftest", parents=[common], help="以暴力法檢查核心數值程式")
    selftest.add_argument("--games", type=int, default=20)

    plot = sub.add_parser("plot", parents=[common], help="輸出損失曲線、界限包絡與成長階數圖")
    plot.add_argument("config", type=Path)
    plot.add_argument("--horizons", type=int, nargs="*", default=None)
    plot.add_argument("--games", type=int, default=5)
    return parser


def _film_p(value: str):
    return value if value.strip().lower() in ("inf", "infinity") else float(value)


def _paths(paths: List[Path]) -> List[str]:
    return [str(p) for p in paths]


def dispatch(args: argparse.Namespace) -> int:
    output_dir = args.out if args.out is not None else get_settings().output_dir
    service = get_experiment_service(str(output_dir), getattr(args, "workers", None))

    if args.command == "film":
        scenario = service.film(args.pixels, args.frames, _film_p(args.p), Y=args.Y, X=args.X, fps=args.fps)
        _emit(create_response(True, "電影情境比較完成", data={
            "crossover_frames": scenario.crossover_frames,
            "crossover_seconds": None if scenario.crossover_seconds is None else str(scenario.crossover_seconds),
        }))
        return EXIT_OK

    if args.command == "selftest":
        frame = service.selftest(seed=args.seed or 0, games=args.games)
        passed = bool(frame["passed"].all())
        _emit(create_response(passed, "自我檢查完成" if passed else "自我檢查失敗",
                              data=frame.to_dict(orient="records")))
        return EXIT_OK if passed else EXIT_VERIFICATION_FAILED

    config = load_config(args.config)
    base_dir = args.config.resolve().parent

    if args.command in ("run", "verify"):
        verify = args.command == "verify" or args.verify
        result = service.run(config, seed=args.seed, base_dir=base_dir, verify=verify)
        data: Dict[str, Any] = {"name": result.config.name, "n": result.n, "paths": _paths(result.paths)}
        if verify:
            data["failures"] = sum(len(r.failures) for r in result.reports)
            if not result.passed:
                _emit(create_response(False, "界限驗證失敗", data=data))
                return EXIT_VERIFICATION_FAILED
        _emit(create_response(True, "實驗執行完成", data=data))
        return EXIT_OK

    if args.command == "sweep":
        exponents = args.p if args.p else [config.game.p]
        result = service.sweep(config, exponents, args.T, args.games, seed=args.seed)
        data = {"paths": _paths(result.paths), "growth": result.growth.to_dict(orient="records")}
        _emit(create_response(result.passed, "sweep 完成" if result.passed else "sweep 驗證失敗", data=data))
        return EXIT_OK if result.passed else EXIT_VERIFICATION_FAILED

    if args.command == "plot":
        paths = service.plot(config, seed=args.seed, base_dir=base_dir, horizons=args.horizons, games=args.games)
        _emit(create_response(True, "圖表輸出完成", data={"paths": _paths(paths)}))
        return EXIT_OK

    raise ValueError(f"未知的子指令: {args.command}")


def cli_main(argv: Optional[List[str]] = None) -> int:
    """
    CLI 進入點。

    參數錯誤時 argparse 印出 usage 並回傳 2；任何未處理的例外都轉成一行 JSON 錯誤寫到 stderr，
    回傳 1；界限或自我檢查失敗回傳 3。
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK

    run_id_var.set(uuid.uuid4().hex[:12])
    setup_logging(args.log_level)
    try:
        return dispatch(args)
    except Exception as e:
        logger.error(f"[{run_id_var.get()}] 未處理的異常: {e}", exc_info=True)
        _emit(error_envelope(e), stream=sys.stderr)
        return EXIT_ERROR


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()

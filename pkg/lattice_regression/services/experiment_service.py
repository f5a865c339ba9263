import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .aar import aar_bound_eq2, aar_predictions
from .blaar import GameTrace, blaar_run
from .bound_verifier import BoundReport, FilmScenario, film_scenario, fit_growth_order, verify_bounds, verify_mistakes
from .data_generator import (Comparator, GeneratedGame, comparator_exponent, generate_game, ridge_comparator,
                             signal_exponent)
from .errors import ConfigurationError
from .experiment_config import ExperimentConfig
from .file_processor import FileProcessorService
from .kaar import GramMatrix, kaar_predictions
from .lattice_core import MeasureSpace, lp_norm, make_signals, norm_equiv_factor
from .lewis_basis import (blaar_kernel, brute_force_determinant, build_lewis_basis, integral_kernel,
                          lewis_coordinates, non_expansion_scale)
from .logger import get_logger
from .perceptron import SopTrace, sop_run
from .report_service import ReportAggregator
from .sobolev_bridge import sobolev_blaar_run

GROWTH_SLACK = 0.15
SELFTEST_COLUMNS = ["check", "cases", "worst", "tolerance", "passed"]


@dataclass(frozen=True, eq=False)
class RunResult:
    config: ExperimentConfig
    seed: Optional[int]
    generated: GeneratedGame
    trace: Union[GameTrace, SopTrace]
    n: int
    reports: List[BoundReport] = field(default_factory=list)
    paths: List[Path] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(report.all_passed for report in self.reports)

    @property
    def worst_regret(self) -> float:
        """第一個界限報告中 max_f (L_T(alg) − L_T(f))。"""
        if not self.reports or not self.reports[0].rows:
            return math.nan
        return max(row.loss_alg - row.loss_comp for row in self.reports[0].rows)


@dataclass(frozen=True, eq=False)
class SweepResult:
    summary: pd.DataFrame
    growth: pd.DataFrame
    paths: List[Path] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        bounds_ok = bool(self.summary["failures"].sum() == 0) if not self.summary.empty else True
        slopes_ok = bool(self.growth["slope_ok"].all()) if not self.growth.empty else True
        return bounds_ok and slopes_ok


class ExperimentService:
    def __init__(self, output_dir: Path, max_workers: Optional[int] = None):
        """
        初始化 ExperimentService。

        此服務負責串接資料產生、演算法執行、界限驗證與報告輸出。
        每一場遊戲的狀態彼此獨立，可以平行執行；檔案只由 ReportAggregator 寫出。
        :param output_dir: 所有產出檔案的根目錄 (CLI 的 --out 或 OUTPUT_DIR)。
        :param max_workers: sweep 使用的執行緒數量；None 時由 ThreadPoolExecutor 決定。
        """
        self.output_dir = Path(output_dir)
        self.max_workers = max_workers
        self.file_processor = FileProcessorService()
        self.logger = get_logger(__name__)

    def prepare(self, config: ExperimentConfig, seed: Optional[int] = None,
                base_dir: Optional[Path] = None) -> GeneratedGame:
        """依設定產生遊戲，或從 input_file 讀取。"""
        if config.input_file is not None:
            return self.file_processor.load_game(config, base_dir)
        return generate_game(config, seed)

    def _trace_config(self, config: ExperimentConfig, seed: Optional[int]) -> Dict:
        return {"name": config.name, "mode": config.mode, "seed": seed, **config.game.model_dump()}

    def play(self, config: ExperimentConfig, generated: GeneratedGame,
             seed: Optional[int] = None) -> Tuple[Union[GameTrace, SopTrace], int]:
        """
        依 mode 執行對應的演算法。

        設定未給 a 時，AAR 取 eq2 的建議值 (X 為訊號的實際範數上界)，
        KAAR 取同一公式在 p = 2 的值，也就是 √T。
        :return: (紀錄, n)；n 為 AAR/KAAR 的座標維度或 BLAAR/感知器的 Lewis 秩。
        """
        game = generated.game
        signals, outcomes = game.signals, game.outcomes
        T, Y = config.game.T, config.game.Y
        trace_config = self._trace_config(config, seed)
        mode = config.mode

        if mode == "aar":
            n = signals[0].dimension
            a = config.game.a
            if a is None:
                X = max(lp_norm(x, signal_exponent(config)) for x in signals)
                a = aar_bound_eq2(T, X, Y, n, config.game.p, 0.0)[0]
            predictions = aar_predictions(signals, outcomes, a, Y)
            trace = GameTrace.from_predictions(predictions, outcomes, a=a, n=n, solver_residual=None,
                                               config=trace_config, exponent=signal_exponent(config),
                                               bounds_guaranteed=game.outcomes_in_range)
            return trace, n
        if mode == "kaar":
            n = signals[0].dimension
            a = config.game.a
            if a is None:
                # 核空間是 Hilbert 空間 (p = 2)，n^{1−2/q} = 1，建議值化為 √T
                X = max(lp_norm(x, 2.0) for x in signals)
                a = aar_bound_eq2(T, X, Y, n, 2.0, 0.0)[0]
            predictions = kaar_predictions(GramMatrix.from_signals(signals), outcomes, a)
            trace = GameTrace.from_predictions(predictions, outcomes, a=a, n=n, solver_residual=None,
                                               config=trace_config, exponent=signal_exponent(config),
                                               bounds_guaranteed=game.outcomes_in_range)
            return trace, n
        if mode == "blaar":
            trace = blaar_run(game, a_rule=config.game.a_rule)
            return replace(trace, config={**trace_config, **trace.config}), trace.n
        if mode == "sobolev":
            trace = sobolev_blaar_run(generated.points, outcomes, generated.grid, generated.params, Y,
                                      a=config.game.a, a_rule=config.game.a_rule)
            return replace(trace, config={**trace_config, **trace.config}), trace.n
        if mode == "perceptron":
            basis = build_lewis_basis(signals, generated.params.dual_p)
            trace = sop_run(lewis_coordinates(basis), generated.labels, config.perceptron.a)
            return trace, basis.n
        raise ConfigurationError(f"未知的 mode: {mode}")

    def comparators_for(self, config: ExperimentConfig, generated: GeneratedGame, trace) -> List[Comparator]:
        """AAR/KAAR 額外加入以同一個 a 求得的離線嶺回歸解。"""
        comparators = list(generated.comparators)
        if config.mode in ("aar", "kaar") and config.comparators.include_ridge:
            comparators.append(ridge_comparator(generated.game.signals, generated.game.outcomes, trace.a,
                                                comparator_exponent(config)))
        return comparators

    def verify(self, config: ExperimentConfig, generated: GeneratedGame, trace) -> List[BoundReport]:
        comparators = self.comparators_for(config, generated, trace)
        if not comparators:
            self.logger.warning("沒有任何比較對象，界限報告將為空")
        signals = generated.game.signals
        reports = []
        for selector in config.bound_selectors():
            if selector == "mistakes":
                reports.append(verify_mistakes(trace, signals, comparators, config.perceptron.gamma,
                                               generated.params.p))
            else:
                reports.append(verify_bounds(trace, signals, comparators, selector, Y=config.game.Y))
        return reports

    def execute(self, config: ExperimentConfig, seed: Optional[int] = None, base_dir: Optional[Path] = None,
                verify: bool = False) -> RunResult:
        """產生 (或讀取) 遊戲、執行演算法，並視需要驗證界限；不寫任何檔案。"""
        config = config.with_seed(seed)
        seed = config.generator.seed if config.generator is not None else None
        started = time.perf_counter()
        generated = self.prepare(config, seed, base_dir)
        trace, n = self.play(config, generated, seed)
        reports = self.verify(config, generated, trace) if verify else []
        self.logger.info("實驗執行完成", name=config.name, mode=config.mode, seed=seed, n=n,
                         wall_time=round(time.perf_counter() - started, 4))
        return RunResult(config=config, seed=seed, generated=generated, trace=trace, n=n, reports=reports)

    def run(self, config: ExperimentConfig, seed: Optional[int] = None, base_dir: Optional[Path] = None,
            verify: bool = False) -> RunResult:
        """
        執行一個設定並寫出 trace JSON 與 losses CSV；verify 時另寫出 report CSV。

        所有檔案都位於 <output_dir>/<name>/ 之下，內容只由 (設定, 種子, 版本) 決定。
        """
        try:
            result = self.execute(config, seed, base_dir, verify)
            aggregator = ReportAggregator(self.output_dir / result.config.name)
            outputs = result.config.outputs
            paths = [
                aggregator.write_trace(result.trace, outputs.trace, config=self._trace_config(result.config, result.seed),
                                       n=result.n),
                aggregator.write_losses(result.trace, outputs.losses),
            ]
            if verify:
                paths.extend(aggregator.write_reports(result.reports, outputs.report))
            return replace(result, paths=paths)
        except Exception as e:
            self.logger.error(f"執行實驗 {config.name} 失敗: {e}")
            raise

    def _variant(self, config: ExperimentConfig, p: float, T: int) -> ExperimentConfig:
        if config.generator is None:
            raise ConfigurationError("sweep 需要 generator，不能使用 input_file")
        payload = config.model_dump()
        payload["game"].update({"p": p, "T": T})
        return ExperimentConfig.model_validate(payload)

    def _sweep_job(self, config: ExperimentConfig, p: float, T: int, seed: int) -> Dict:
        result = self.execute(self._variant(config, p, T), seed=seed, verify=True)
        report = result.reports[0]
        trace = result.trace
        loss_alg = float(trace.mistake_count) if isinstance(trace, SopTrace) else trace.total_loss
        return {
            "run": f"p={p:g}/T={T}/seed={seed}",
            "mode": config.mode,
            "p": p,
            "T": T,
            "seed": seed,
            "n": result.n,
            "a": trace.a,
            "loss_alg": loss_alg,
            "worst_regret": result.worst_regret,
            "rows": len(report.rows),
            "failures": len(report.failures),
        }

    def sweep(self, config: ExperimentConfig, exponents: Sequence[float], horizons: Sequence[int],
              games: int, seed: Optional[int] = None) -> SweepResult:
        """
        在 (p, T) 網格上平行執行多場遊戲，彙整界限驗證並擬合成長階數。

        每個 p 取各 T 下所有遊戲的最壞後悔，對 log T 做線性擬合；斜率不得超過
        1/2 + |1/2 − 1/p| + 0.15。
        :param games: 每個 (p, T) 的遊戲數，種子為 seed, seed+1, ...。
        """
        if games < 1:
            raise ConfigurationError("games 必須 ≥ 1")
        base_seed = config.generator.seed if seed is None and config.generator is not None else (seed or 0)
        aggregator = ReportAggregator(self.output_dir / config.name)
        jobs = [(float(p), int(T), base_seed + g) for p in exponents for T in horizons for g in range(games)]
        started = time.perf_counter()
        try:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                futures = {executor.submit(self._sweep_job, config, p, T, s): (p, T, s) for p, T, s in jobs}
                for future in as_completed(futures):
                    aggregator.add_record(future.result())
        except Exception as e:
            self.logger.error(f"sweep 執行失敗: {e}")
            raise
        summary = aggregator.summary_frame()
        growth = self._growth_table(summary)
        paths = [aggregator.write_frame(summary, "sweep.csv"), aggregator.write_frame(growth, "growth.csv")]
        if not growth.empty and growth["worst_regret"].gt(0).any():
            paths.append(aggregator.plot_growth(growth))
        self.logger.info("sweep 完成", jobs=len(jobs), failures=int(summary["failures"].sum()),
                         wall_time=round(time.perf_counter() - started, 4))
        return SweepResult(summary=summary, growth=growth, paths=paths)

    def _growth_table(self, summary: pd.DataFrame) -> pd.DataFrame:
        records = []
        for p, group in summary.groupby("p", sort=True):
            worst = group.groupby("T", sort=True)["worst_regret"].max()
            limit = 0.5 + abs(0.5 - 1.0 / p) + GROWTH_SLACK
            try:
                slope = fit_growth_order(worst.index.to_numpy(), worst.to_numpy())
            except ConfigurationError as e:
                self.logger.warning(f"p={p:g} 無法擬合成長階數: {e}")
                slope = math.nan
            for T, value in worst.items():
                records.append({"p": p, "T": int(T), "worst_regret": float(value), "slope": slope,
                                "slope_limit": limit, "slope_ok": bool(math.isnan(slope) or slope <= limit)})
        return pd.DataFrame.from_records(
            records, columns=["p", "T", "worst_regret", "slope", "slope_limit", "slope_ok"])

    def film(self, n_pixels: int, T: int, p, Y: float = 1.0, X: float = 1.0, fps: int = 24) -> FilmScenario:
        scenario = film_scenario(n_pixels, T, p, Y=Y, X=X, fps=fps)
        aggregator = ReportAggregator(self.output_dir / "film")
        aggregator.write_frame(scenario.table, "film.csv")
        aggregator.write_json(scenario.to_dict(), "film.json")
        return scenario

    def plot(self, config: ExperimentConfig, seed: Optional[int] = None, base_dir: Optional[Path] = None,
             horizons: Optional[Sequence[int]] = None, games: int = 5) -> List[Path]:
        """
        靜態圖表：累積損失曲線與界限包絡；給出 horizons 時另跑一次 sweep 畫出成長階數圖。
        """
        result = self.execute(config, seed, base_dir, verify=True)
        aggregator = ReportAggregator(self.output_dir / result.config.name)
        signals = result.generated.game.signals
        outcomes = result.generated.game.outcomes
        comparator_losses = {}
        if not isinstance(result.trace, SopTrace):
            for comparator in self.comparators_for(result.config, result.generated, result.trace)[:8]:
                comparator_losses[comparator.id] = (outcomes - comparator.predictions(signals)) ** 2
        paths = [aggregator.plot_losses(result.trace, comparator_losses)]
        if result.reports and result.reports[0].selector != "mistakes":
            paths.append(aggregator.plot_bound_envelope(result.trace, result.reports[0]))
        if horizons:
            sweep = self.sweep(result.config, [result.config.game.p], horizons, games, seed)
            paths.extend(p for p in sweep.paths if p.suffix == ".png")
        return paths

    def selftest(self, seed: int = 0, games: int = 20) -> pd.DataFrame:
        """
        以暴力法與已知恆等式檢查核心數值程式，寫出 selftest.csv。

        - AAR 與 dot-product Gram 上的 KAAR 逐步預測一致 (相對 1e−9)
        - Lewis 不動點殘差 ≤ 1e−6、座標核與積分核一致、非擴張性
        - n = 2 時 Lewis 行列式與暴力搜尋一致 (相對 1e−4)
        - 範數等價常數與電影情境的交叉點
        """
        rng = np.random.default_rng(seed)
        checks = [
            self._check_aar_kaar(rng, games),
            *self._check_lewis(rng, games),
            self._check_determinant(rng, max(1, min(games, 3))),
            self._check_norm_equivalence(rng),
            self._check_film(),
        ]
        frame = pd.DataFrame.from_records(checks, columns=SELFTEST_COLUMNS)
        ReportAggregator(self.output_dir / "selftest").write_frame(frame, "selftest.csv")
        for record in checks:
            log = self.logger.info if record["passed"] else self.logger.error
            log("自我檢查", check=record["check"], worst=record["worst"], passed=record["passed"])
        return frame

    @staticmethod
    def _record(check: str, cases: int, worst: float, tolerance: float) -> Dict:
        return {"check": check, "cases": cases, "worst": float(worst), "tolerance": tolerance,
                "passed": bool(worst <= tolerance)}

    def _check_aar_kaar(self, rng: np.random.Generator, games: int) -> Dict:
        worst = 0.0
        for _ in range(games):
            n, T = int(rng.integers(1, 6)), int(rng.integers(1, 21))
            matrix = rng.standard_normal((T, n))
            outcomes = rng.uniform(-1.0, 1.0, T)
            a = float(rng.uniform(0.1, 2.0))
            aar = aar_predictions(make_signals(matrix), outcomes, a)
            kaar = kaar_predictions(GramMatrix(matrix @ matrix.T), outcomes, a)
            worst = max(worst, float(np.max(np.abs(aar - kaar)) / max(1.0, float(np.max(np.abs(aar))))))
        return self._record("aar_kaar_equivalence", games, worst, 1e-9)

    def _check_lewis(self, rng: np.random.Generator, games: int) -> List[Dict]:
        residual, kernel_gap, expansion = 0.0, 0.0, 0.0
        cases = 0
        for p in (1.5, 2.0, 3.0, 4.0):
            for _ in range(games):
                M, n = int(rng.integers(6, 33)), int(rng.integers(1, 7))
                space = MeasureSpace(weights=rng.uniform(0.5, 1.5, M))
                signals = make_signals(rng.standard_normal((n, M)), space)
                basis = build_lewis_basis(signals, p)
                unscaled = blaar_kernel(basis, safeguard=False).entries
                residual = max(residual, basis.residual)
                kernel_gap = max(kernel_gap, float(np.max(np.abs(unscaled - integral_kernel(basis).entries))))
                scaled = unscaled * non_expansion_scale(basis)
                for s, x in enumerate(signals):
                    expansion = max(expansion, scaled[s, s] / lp_norm(x, p) ** 2 - 1.0)
                cases += 1
        return [
            self._record("lewis_residual", cases, residual, 1e-6),
            self._record("kernel_equivalence", cases, kernel_gap, 1e-6),
            self._record("non_expansion", cases, expansion, 1e-8),
        ]

    def _check_determinant(self, rng: np.random.Generator, games: int) -> Dict:
        worst, cases = 0.0, 0
        for p in (1.5, 3.0, 4.0):
            for _ in range(games):
                M = int(rng.integers(3, 9))
                signals = make_signals(rng.standard_normal((2, M)), MeasureSpace.uniform(M))
                solved = build_lewis_basis(signals, p).determinant
                oracle = brute_force_determinant(signals, p, seed=int(rng.integers(0, 2 ** 31 - 1)))
                worst = max(worst, abs(solved - oracle) / oracle)
                cases += 1
        return self._record("lewis_determinant", cases, worst, 1e-4)

    def _check_norm_equivalence(self, rng: np.random.Generator, samples: int = 1000) -> Dict:
        worst = 0.0
        for _ in range(samples):
            n = int(rng.integers(1, 11))
            values = rng.standard_normal(n)
            q = float(rng.uniform(1.0, 8.0))
            bound = norm_equiv_factor(n, q) * lp_norm(values, q)
            worst = max(worst, (lp_norm(values, 2.0) - bound) / bound)
        return self._record("norm_equivalence", samples, max(worst, 0.0), 1e-12)

    def _check_film(self) -> Dict:
        scenario = film_scenario(786432, 2 * 786432, "inf")
        gap = abs(float(scenario.crossover_seconds) - 32768.0)
        return self._record("film_crossover", 1, gap, 0.0)

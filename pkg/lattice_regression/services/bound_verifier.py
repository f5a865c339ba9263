"""
後悔界的經驗驗證、電影情境的交叉點表格與成長階數擬合。
"""
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .aar import aar_bound_eq1, aar_bound_eq2, aar_bound_kernel_form, aar_bound_relaxed, aar_bound_remark
from .blaar import GameTrace, theorem1_bound
from .data_generator import Comparator
from .errors import ConfigurationError
from .experiment_config import BOUND_SELECTORS
from .kaar import GramMatrix, kaar_bound
from .lattice_core import Signal, dual_exponent, dual_norm, lp_norm, sup_norm
from .logger import get_logger
from .perceptron import SopTrace, hinge_loss, mistake_bound, rank_term

logger = get_logger(__name__)

PASS_TOLERANCE = 1e-9
REPORT_COLUMNS = ["comparator_id", "loss_alg", "loss_comp", "bound", "margin", "pass"]
FILM_COLUMNS = ["T", "seconds", "aar_bound", "blaar_bound", "better"]


@dataclass(frozen=True)
class BoundRow:
    """
    單一比較對象的驗證結果；margin = bound + loss_comp − loss_alg。

    mistakes 選擇下 loss_alg 是出錯次數、loss_comp 是 hinge 損失總和；hinge 已包含在 bound 中，
    因此 margin = bound − loss_alg。
    """
    comparator_id: str
    loss_alg: float
    loss_comp: float
    bound: float
    margin: float
    passed: bool

    @classmethod
    def evaluate(cls, comparator_id: str, loss_alg: float, loss_comp: float, bound: float,
                 margin: Optional[float] = None) -> "BoundRow":
        if margin is None:
            margin = bound + loss_comp - loss_alg
        scale = max(1.0, abs(loss_alg), abs(bound + loss_comp))
        return cls(comparator_id=comparator_id, loss_alg=float(loss_alg), loss_comp=float(loss_comp),
                   bound=float(bound), margin=float(margin), passed=bool(margin >= -PASS_TOLERANCE * scale))


@dataclass(frozen=True)
class BoundReport:
    selector: str
    rows: List[BoundRow]
    metadata: Dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(row.passed for row in self.rows)

    @property
    def failures(self) -> List[BoundRow]:
        return [row for row in self.rows if not row.passed]

    def to_frame(self) -> pd.DataFrame:
        """report.csv 的固定欄位順序。"""
        records = [
            {"comparator_id": r.comparator_id, "loss_alg": r.loss_alg, "loss_comp": r.loss_comp,
             "bound": r.bound, "margin": r.margin, "pass": r.passed}
            for r in self.rows
        ]
        return pd.DataFrame.from_records(records, columns=REPORT_COLUMNS)


def _max_norm(signals: Sequence[Signal], exponent: float) -> float:
    return max(lp_norm(x, exponent) for x in signals)


def _l2_sq(comparator: Comparator) -> float:
    return lp_norm(comparator.functional.values, 2.0) ** 2


def _bound_for(selector: str, trace: GameTrace, signals: Sequence[Signal], comparator: Comparator,
               Y: float, cache: Dict) -> float:
    T = trace.T
    a = trace.a
    if selector == "eq1":
        if "sup" not in cache:
            cache["sup"] = max(sup_norm(x.values) for x in signals)
        return aar_bound_eq1(T, cache["sup"], Y, a, signals[0].dimension, _l2_sq(comparator))
    if selector in ("eq2", "remark"):
        q = trace.exponent
        p = dual_exponent(q)
        if "Xq" not in cache:
            cache["Xq"] = _max_norm(signals, q)
        theta_sq = dual_norm(comparator.functional) ** 2
        n = signals[0].dimension
        if selector == "remark":
            return aar_bound_remark(T, cache["Xq"], Y, n, p, a, theta_sq)
        recommended, regret = aar_bound_eq2(T, cache["Xq"], Y, n, p, theta_sq)
        if not math.isclose(a, recommended, rel_tol=1e-9) and not cache.get("eq2_warned"):
            logger.warning(f"eq2 界假設 a={recommended:.6g}，但紀錄中的 a={a:.6g}")
            cache["eq2_warned"] = True
        return regret
    if selector == "kernel":
        return aar_bound_kernel_form(signals, a, Y, _l2_sq(comparator))
    if selector == "relaxed":
        if "l2" not in cache:
            cache["l2"] = max(lp_norm(x.values, 2.0) ** 2 for x in signals)
        return aar_bound_relaxed(T, cache["l2"], a, Y, _l2_sq(comparator))
    if selector == "kaar":
        if "gram" not in cache:
            cache["gram"] = GramMatrix.from_signals(signals)
        return kaar_bound(cache["gram"], a, Y, _l2_sq(comparator))
    if selector == "theorem1":
        if "X" not in cache:
            cache["X"] = _max_norm(signals, trace.exponent)
        return theorem1_bound(T, cache["X"], Y, trace.exponent, dual_norm(comparator.functional) ** 2)
    raise ConfigurationError(f"未知的界限選擇 {selector}，可用值為 {BOUND_SELECTORS}")


def verify_bounds(trace: GameTrace, signals: Sequence[Signal], comparators: Sequence[Comparator],
                  selector: str, Y: Optional[float] = None) -> BoundReport:
    """
    對每個比較對象 f 檢查 L_T(alg) ≤ L_T(f) + bound(f)。

    比較對象的範數一律取全空間的對偶範數，這只會放大右式。輸入不會被修改。
    :param trace: 完整的遊戲紀錄。
    :param signals: 產生該紀錄的訊號。
    :param selector: eq1、eq2、remark、kernel、relaxed、kaar 或 theorem1。
    :param Y: 結果界；省略時取紀錄設定中的 Y。
    """
    if selector == "mistakes" or selector not in BOUND_SELECTORS:
        raise ConfigurationError(f"verify_bounds 不支援 {selector}")
    started = time.perf_counter()
    Y = float(trace.config["Y"] if Y is None else Y)
    cache: Dict = {}
    rows = []
    for comparator in comparators:
        bound = _bound_for(selector, trace, signals, comparator, Y, cache)
        rows.append(BoundRow.evaluate(comparator.id, trace.total_loss,
                                      comparator.loss(signals, trace.outcomes), bound))
    elapsed = time.perf_counter() - started
    report = BoundReport(selector=selector, rows=rows, metadata={
        "n": trace.n, "a": trace.a, "solver_residual": trace.solver_residual,
        "bounds_guaranteed": trace.bounds_guaranteed, "wall_time": elapsed,
    })
    logger.info("界限驗證完成", selector=selector, rows=len(rows), failures=len(report.failures),
                wall_time=round(elapsed, 4))
    return report


def verify_mistakes(trace: SopTrace, signals: Sequence[Signal], comparators: Sequence[Comparator],
                    gamma: float, p: float) -> BoundReport:
    """
    二階感知器的錯誤次數上界驗證：每個比較對象 η = lift(f) 給出一個上界。

    :param signals: 對偶訊號 β_i ∈ L_{p′}。
    :param p: Sobolev 空間的可積指數，決定秩因子 T^{1/2−1/p}。
    """
    started = time.perf_counter()
    dual_p = dual_exponent(p)
    c_B = _max_norm(signals, dual_p)
    mistakes = list(trace.mistakes)
    rows = []
    for comparator in comparators:
        f_values = comparator.predictions(signals)
        hinge_total = float(sum(hinge_loss(v, int(y), gamma) for v, y in zip(f_values, trace.labels)))
        bound = mistake_bound(gamma=gamma, f_norm_sq=dual_norm(comparator.functional) ** 2,
                              n_rank_term=rank_term(len(signals), p), a=trace.a,
                              f_values_on_mistakes=f_values[mistakes], c_B=c_B, D_gamma_total=hinge_total)
        rows.append(BoundRow.evaluate(comparator.id, trace.mistake_count, hinge_total, bound,
                                      margin=bound - trace.mistake_count))
    elapsed = time.perf_counter() - started
    logger.info("錯誤上界驗證完成", rows=len(rows), mistakes=trace.mistake_count, wall_time=round(elapsed, 4))
    return BoundReport(selector="mistakes", rows=rows,
                       metadata={"a": trace.a, "mistakes": trace.mistake_count, "c_B": c_B, "wall_time": elapsed})


@dataclass(frozen=True)
class FilmScenario:
    """
    AAR 在 ℓ_p^n 上的界 (Y²X²+‖θ‖²)T^{1/2}n^{1/2−1/p} 與 BLAAR 的界 (Y²X²+‖θ‖²)T^{1−1/p} 的比較。

    crossover_frames 為兩者相等的 T；p = 2 時兩者同階，沒有交叉點。
    """
    n_pixels: int
    p: Union[float, str]
    fps: int
    crossover_frames: Optional[int]
    crossover_seconds: Optional[Fraction]
    table: pd.DataFrame

    def to_dict(self) -> Dict:
        return {
            "n_pixels": self.n_pixels,
            "p": self.p,
            "fps": self.fps,
            "crossover_frames": self.crossover_frames,
            "crossover_seconds": None if self.crossover_seconds is None else str(self.crossover_seconds),
            "rows": self.table.to_dict(orient="records"),
        }


def _film_exponent(p) -> Fraction:
    """1/2 − 1/p 的精確值；p = inf 時為 1/2。"""
    if isinstance(p, str) or math.isinf(p):
        return Fraction(1, 2)
    return Fraction(1, 2) - 1 / Fraction(p).limit_denominator(10 ** 6)


def film_scenario(n_pixels: int, T: int, p, Y: float = 1.0, X: float = 1.0, theta_norm_sq: float = 0.0,
                  fps: int = 24) -> FilmScenario:
    """
    逐幀觀看一部影片：每幀 n_pixels 個像素，T 為總幀數。

    兩個界的比值為 (n/T)^{1/2−1/p}，所以 p > 2 時交叉點恰為 T = n，以整數比較決定，
    不經過浮點數。表格列出 T ≤ 總幀數的 2 的冪次、交叉點與 T 本身。
    :param p: 2 ≤ p ≤ ∞；可以是 float("inf") 或字串 "inf"。
    :raises ConfigurationError: n_pixels、T 或 fps 不是正整數，或 p < 2。
    """
    for name, value in (("n_pixels", n_pixels), ("T", T), ("fps", fps)):
        if int(value) != value or value < 1:
            raise ConfigurationError(f"{name} 必須為正整數，收到 {value}")
    if isinstance(p, str):
        if p.strip().lower() not in ("inf", "infinity"):
            raise ConfigurationError(f"p 必須是數字或 inf，收到 {p}")
        p = math.inf
    if not p >= 2:
        raise ConfigurationError(f"電影情境需要 p ≥ 2，收到 {p}")
    n_pixels, T, fps = int(n_pixels), int(T), int(fps)
    exponent = _film_exponent(p)
    coefficient = Y ** 2 * X ** 2 + theta_norm_sq

    crossover = n_pixels if exponent > 0 else None
    steps = {1 << k for k in range(T.bit_length()) if (1 << k) <= T} | {T}
    if crossover is not None and crossover <= T:
        steps.add(crossover)

    records = []
    for step in sorted(steps):
        if exponent == 0 or step == n_pixels:
            better = "equal"
        elif step < n_pixels:
            better = "blaar"
        else:
            better = "aar"
        records.append({
            "T": step,
            "seconds": step / fps,
            "aar_bound": coefficient * math.sqrt(step) * float(n_pixels) ** float(exponent),
            "blaar_bound": coefficient * float(step) ** (0.5 + float(exponent)),
            "better": better,
        })
    table = pd.DataFrame.from_records(records, columns=FILM_COLUMNS)
    seconds = None if crossover is None else Fraction(crossover, fps)
    logger.info("電影情境比較完成", n_pixels=n_pixels, p=p, crossover_frames=crossover,
                crossover_seconds=None if seconds is None else str(seconds))
    return FilmScenario(n_pixels=n_pixels, p="inf" if math.isinf(p) else p, fps=fps,
                        crossover_frames=crossover, crossover_seconds=seconds, table=table)


def fit_growth_order(horizons: Sequence[int], regrets: Sequence[float]) -> float:
    """
    以最小平方法擬合 log(regret) 對 log(T) 的斜率。

    非正的後悔值無法取對數，會被略過並記錄警告。
    :raises ConfigurationError: 可用的點少於兩個。
    """
    horizons = np.asarray(horizons, dtype=float)
    regrets = np.asarray(regrets, dtype=float)
    if horizons.shape != regrets.shape:
        raise ConfigurationError("horizons 與 regrets 長度不一致")
    usable = (regrets > 0) & (horizons > 0)
    if not np.all(usable):
        logger.warning(f"略過 {int(np.sum(~usable))} 個非正的後悔值")
    if np.count_nonzero(usable) < 2 or np.unique(horizons[usable]).size < 2:
        raise ConfigurationError("擬合成長階數至少需要兩個不同 T 的正後悔值")
    slope, _ = np.polyfit(np.log(horizons[usable]), np.log(regrets[usable]), 1)
    return float(slope)

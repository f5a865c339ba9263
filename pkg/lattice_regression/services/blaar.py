"""
半線上協定下的 BLAAR 全流程以及三組後悔界。

流程：第一步取最大線性獨立子集合，第二步求 Lewis 基底，第三步取
a = √(T·n^{−|1/2−1/p|})，之後每一步以 Lewis 座標導出的核呼叫 KAAR。
"""
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ConvergenceError, DegenerateSignalError, DimensionMismatchError
from .kaar import kaar_predictions
from .lattice_core import GameConfig, Signal, same_space, validate_exponent
from .lewis_basis import LewisBasis, blaar_kernel, build_lewis_basis, non_expansion_scale, DEFAULT_DAMPING
from .logger import get_logger

logger = get_logger(__name__)

A_RULES = ("algorithm", "proof")


@dataclass(frozen=True, eq=False)
class SemiOnlineGame:
    """
    半線上協定：Reality 先宣告 T 與全部訊號 x_1..x_T，之後逐步揭露 y_t。
    """
    signals: Sequence[Signal]
    outcomes: np.ndarray
    config: GameConfig

    def __post_init__(self):
        signals = tuple(self.signals)
        outcomes = np.array(self.outcomes, dtype=float)
        if len(signals) != self.config.T or outcomes.shape != (self.config.T,):
            raise DimensionMismatchError(
                f"T={self.config.T} 與訊號數 {len(signals)}、結果數 {outcomes.size} 不一致")
        if not np.all(np.isfinite(outcomes)):
            raise ConfigurationError("結果含有非有限值")
        first = signals[0]
        for s in signals:
            if s.dimension != first.dimension or not same_space(s.space, first.space):
                raise DimensionMismatchError("半線上遊戲的訊號必須位於同一個空間")
        outcomes.setflags(write=False)
        object.__setattr__(self, "signals", signals)
        object.__setattr__(self, "outcomes", outcomes)
        if not self.outcomes_in_range:
            logger.warning(f"有結果超出 [-Y, Y] (Y={self.config.Y})，後悔界不再保證")

    @property
    def outcomes_in_range(self) -> bool:
        return bool(np.all(np.abs(self.outcomes) <= self.config.Y))


@dataclass(frozen=True, eq=False)
class GameTrace:
    """
    一場遊戲的完整紀錄；L_t = L_{t−1} + (y_t − γ_t)²，L_0 = 0。

    :param exponent: BLAAR 實際使用的晶格指數 (Sobolev 流程中為 p′)。
    :param kernel_scale: 非擴張性保護的縮放係數，1 表示未縮放。
    """
    predictions: np.ndarray
    outcomes: np.ndarray
    losses: np.ndarray
    a: float
    n: int
    solver_residual: Optional[float]
    config: Dict = field(default_factory=dict)
    exponent: Optional[float] = None
    kernel_scale: float = 1.0
    bounds_guaranteed: bool = True
    snap_distances: Optional[List[float]] = None

    @classmethod
    def from_predictions(cls, predictions, outcomes, **kwargs) -> "GameTrace":
        predictions = np.asarray(predictions, dtype=float)
        outcomes = np.asarray(outcomes, dtype=float)
        if predictions.shape != outcomes.shape:
            raise DimensionMismatchError("預測與結果長度不一致")
        return cls(predictions=predictions, outcomes=outcomes,
                   losses=np.cumsum((outcomes - predictions) ** 2), **kwargs)

    @property
    def T(self) -> int:
        return int(self.predictions.size)

    @property
    def total_loss(self) -> float:
        return float(self.losses[-1]) if self.losses.size else 0.0

    def to_dict(self) -> Dict:
        payload = {
            "config": self.config,
            "predictions": self.predictions.tolist(),
            "outcomes": self.outcomes.tolist(),
            "losses": self.losses.tolist(),
            "a": self.a,
            "n": self.n,
            "solver_residual": self.solver_residual,
            "exponent": self.exponent,
            "kernel_scale": self.kernel_scale,
            "bounds_guaranteed": self.bounds_guaranteed,
        }
        if self.snap_distances is not None:
            payload["snap_distances"] = list(self.snap_distances)
        return payload

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True)


def blaar_parameter(T: int, n: int, p: float) -> float:
    """BLAAR 第三步：a = √(T · n^{−|1/2−1/p|})。"""
    return math.sqrt(T * float(n) ** (-abs(0.5 - 1.0 / p)))


def blaar_proof_parameter(T: int, n: int, p: float) -> float:
    """後悔界推導中使用的 a = √T / n^{|1/2−1/p|}；只要 n ≤ T 即可使後悔界成立。"""
    return math.sqrt(T) / float(n) ** abs(0.5 - 1.0 / p)


def resolve_parameter(config: GameConfig, n: int, a_rule: str = "algorithm") -> float:
    if config.a is not None:
        return float(config.a)
    if a_rule == "algorithm":
        return blaar_parameter(config.T, n, config.p)
    if a_rule == "proof":
        return blaar_proof_parameter(config.T, n, config.p)
    raise ConfigurationError(f"未知的 a_rule: {a_rule}，可用值為 {A_RULES}")


def _solve_basis(signals: Sequence[Signal], p: float) -> LewisBasis:
    try:
        return build_lewis_basis(signals, p)
    except ConvergenceError as e:
        logger.warning(f"Lewis 求解未收斂 (殘差 {e.residual:.3e})，以阻尼 {DEFAULT_DAMPING} 重試")
        return build_lewis_basis(signals, p, damping=DEFAULT_DAMPING)


def blaar_run(game: SemiOnlineGame, a_rule: str = "algorithm") -> GameTrace:
    """
    執行 BLAAR 並回傳完整紀錄。

    a 優先取自設定；否則依 a_rule 決定 (預設為第三步公式)。所有訊號皆為零時
    回傳全零預測並記錄警告。
    """
    config = game.config
    config_dict = asdict(config)
    config_dict["a_rule"] = a_rule
    try:
        basis = _solve_basis(game.signals, config.p)
    except DegenerateSignalError:
        logger.warning("所有訊號皆為零 (n = 0)，改以常數 0 預測")
        a = float(config.a) if config.a is not None else math.sqrt(config.T)
        return GameTrace.from_predictions(
            np.zeros(config.T), game.outcomes, a=a, n=0, solver_residual=None,
            config=config_dict, exponent=config.p, bounds_guaranteed=game.outcomes_in_range)

    scale = non_expansion_scale(basis)
    gram = blaar_kernel(basis, safeguard=True, scale=scale)
    a = resolve_parameter(config, basis.n, a_rule)
    predictions = kaar_predictions(gram, game.outcomes, a)
    logger.info("BLAAR 執行完成", T=config.T, n=basis.n, a=a, p=config.p)
    return GameTrace.from_predictions(
        predictions, game.outcomes, a=a, n=basis.n, solver_residual=basis.residual,
        config=config_dict, exponent=config.p, kernel_scale=scale,
        bounds_guaranteed=game.outcomes_in_range)


def _check_common(T: int, X: float, Y: float, f_norm_sq: float):
    if T < 1:
        raise ConfigurationError(f"T 必須 ≥ 1，收到 {T}")
    if X < 0 or Y < 0 or f_norm_sq < 0:
        raise ConfigurationError("X、Y 與 ‖f‖² 不可為負")


def theorem1_bound(T: int, X: float, Y: float, p: float, f_dual_norm_sq: float) -> float:
    """L_p 上的後悔項 (Y²X² + ‖f‖²)·T^{1/2+|1/2−1/p|}。"""
    validate_exponent(p)
    _check_common(T, X, Y, f_dual_norm_sq)
    return (Y ** 2 * X ** 2 + f_dual_norm_sq) * float(T) ** (0.5 + abs(0.5 - 1.0 / p))


def theorem2_bound(T: int, X: float, Y: float, p: float, q: float, Mp: float, Mq: float,
                   f_dual_norm_sq: float) -> float:
    """
    p-凸、q-凹 Banach 格上的後悔項 (Y²X² + ‖f‖²)·M^{(p)}·M_{(q)}·T^{1/2+α}，
    α = max{1/p − 1/2, 1/2 − 1/q}。只提供數值，不實作對應演算法。
    """
    if not (1 < p <= 2 <= q < math.inf):
        raise ConfigurationError(f"需要 1 < p ≤ 2 ≤ q < ∞，收到 p={p}, q={q}")
    if Mp < 1 or Mq < 1:
        raise ConfigurationError("凸性與凹性常數必須 ≥ 1")
    _check_common(T, X, Y, f_dual_norm_sq)
    alpha = max(1.0 / p - 0.5, 0.5 - 1.0 / q)
    return (Y ** 2 * X ** 2 + f_dual_norm_sq) * Mp * Mq * float(T) ** (0.5 + alpha)


def theorem3_bound(T: int, Y: float, p: float, q: float, c_B: float, Mp: float, Mq: float,
                   f_norm_sq: float) -> float:
    """
    函數空間 (點評估連續) 上的後悔項 (Y²c_B² + ‖f‖²)·M_{(p)}·M^{(q)}·T^{1/2+β}，
    β = max{1/q − 1/2, 1/2 − 1/p}，此處 p 為凹性指數、q 為凸性指數 (1 < q ≤ 2 ≤ p)。
    """
    if not (1 < q <= 2 <= p < math.inf):
        raise ConfigurationError(f"需要 1 < q ≤ 2 ≤ p < ∞，收到 p={p}, q={q}")
    if not math.isfinite(c_B):
        raise ConfigurationError("c_B 必須為有限值")
    if Mp < 1 or Mq < 1:
        raise ConfigurationError("凸性與凹性常數必須 ≥ 1")
    _check_common(T, c_B, Y, f_norm_sq)
    beta = max(1.0 / q - 0.5, 0.5 - 1.0 / p)
    return (Y ** 2 * c_B ** 2 + f_norm_sq) * Mp * Mq * float(T) ** (0.5 + beta)

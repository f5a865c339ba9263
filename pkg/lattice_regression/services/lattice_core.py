"""
有限測度空間、p-範數、對偶配對，以及 ℓ_2 與 ℓ_q 範數等價常數。

L_p 函數一律以有限加權樣本空間表示 (求積觀點)：所有積分都是有限加權和，
因此每一條涉及 ∫ 的公式都能精確計算與測試。兩種模式共用同一組運算：
- 座標模式 (ℓ_p^n)：Signal.space 為 None，權重視為 1。
- L_p 模式：Signal.space 指向一個 MeasureSpace，權重為 μ_k。
"""
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DimensionMismatchError, NonFiniteInputError

DEFAULT_RTOL = 1e-9


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{name} 必須是一維陣列，收到形狀 {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInputError(f"{name} 含有非有限值")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MeasureSpace:
    """
    有限加權樣本空間，代表 (Ω, μ)。

    :param weights: M 個嚴格為正的權重 μ_k。
    :param points: (可選) 樣本點座標或索引；僅供記錄，不參與積分。
    """
    weights: np.ndarray
    points: Optional[np.ndarray] = None

    def __post_init__(self):
        weights = _frozen_array(self.weights, "weights")
        if weights.size < 1:
            raise ConfigurationError("MeasureSpace 至少需要一個樣本點")
        if np.any(weights <= 0):
            raise ConfigurationError("MeasureSpace 的權重必須嚴格為正")
        object.__setattr__(self, "weights", weights)
        if self.points is None:
            object.__setattr__(self, "points", np.arange(weights.size))
        else:
            points = np.array(self.points)
            if points.shape[0] != weights.size:
                raise DimensionMismatchError("points 與 weights 的長度不一致")
            points.setflags(write=False)
            object.__setattr__(self, "points", points)

    @classmethod
    def uniform(cls, size: int, weight: float = 1.0) -> "MeasureSpace":
        return cls(weights=np.full(size, float(weight)))

    @property
    def size(self) -> int:
        return int(self.weights.size)

    @property
    def total_measure(self) -> float:
        return float(self.weights.sum())

    def integrate(self, values) -> float:
        """以加權和計算 ∫ values dμ。"""
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.size:
            raise DimensionMismatchError(f"被積函數長度 {values.shape[-1]} 與空間大小 {self.size} 不一致")
        return float(values @ self.weights)


def same_space(a: Optional[MeasureSpace], b: Optional[MeasureSpace]) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a is b or (a.size == b.size and np.array_equal(a.weights, b.weights))


def space_weights(space: Optional[MeasureSpace], size: int) -> np.ndarray:
    """座標模式回傳全 1 權重，L_p 模式回傳 μ。"""
    if space is None:
        return np.ones(size)
    if space.size != size:
        raise DimensionMismatchError(f"長度 {size} 與空間大小 {space.size} 不一致")
    return space.weights


@dataclass(frozen=True, eq=False)
class Signal:
    """
    一個訊號 x_t：座標模式下是 ℓ_p^n 的向量，L_p 模式下是 MeasureSpace 上的取樣函數值。
    """
    values: np.ndarray
    space: Optional[MeasureSpace] = None

    def __post_init__(self):
        values = _frozen_array(self.values, "Signal.values")
        if self.space is not None and values.size != self.space.size:
            raise DimensionMismatchError(f"Signal 長度 {values.size} 與空間大小 {self.space.size} 不一致")
        object.__setattr__(self, "values", values)

    @property
    def dimension(self) -> int:
        return int(self.values.size)

    @property
    def weights(self) -> np.ndarray:
        return space_weights(self.space, self.dimension)

    def scaled(self, factor: float) -> "Signal":
        return Signal(self.values * factor, self.space)


@dataclass(frozen=True, eq=False)
class DualVector:
    """
    對偶空間中的元素 f ∈ (L_p)* ≅ L_{p′}，以權重函數 w 表示，f(x) = ∫ w x dμ。

    :param exponent: 對偶指數 p′，滿足 1/p + 1/p′ = 1。
    """
    values: np.ndarray
    exponent: float
    space: Optional[MeasureSpace] = None

    def __post_init__(self):
        values = _frozen_array(self.values, "DualVector.values")
        if self.space is not None and values.size != self.space.size:
            raise DimensionMismatchError(f"DualVector 長度 {values.size} 與空間大小 {self.space.size} 不一致")
        validate_exponent(self.exponent)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "exponent", float(self.exponent))

    @property
    def dimension(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class GameConfig:
    """
    平方損失遊戲的參數：Ω = [-Y, Y]，晶格指數 p，步數 T，以及 (可選) 正則化參數 a。
    a 為 None 時由演算法自行推導。
    """
    p: float
    Y: float
    T: int
    a: Optional[float] = None

    def __post_init__(self):
        validate_exponent(self.p)
        if not (self.Y > 0 and math.isfinite(self.Y)):
            raise ConfigurationError(f"Y 必須為正有限值，收到 {self.Y}")
        if int(self.T) != self.T or self.T < 1:
            raise ConfigurationError(f"T 必須為正整數，收到 {self.T}")
        if self.a is not None and not (self.a > 0 and math.isfinite(self.a)):
            raise ConfigurationError(f"a 必須為正有限值，收到 {self.a}")


def validate_exponent(p: float) -> float:
    """p 必須落在 (1, ∞)；p = 1 與 p = ∞ 只給出平凡界，於設定時即拒絕。"""
    if not (p > 1 and math.isfinite(p)):
        raise ConfigurationError(f"晶格指數必須落在 (1, ∞)，收到 {p}")
    return float(p)


def lp_norm(x, p: float, weights: Optional[np.ndarray] = None) -> float:
    """
    計算 p-範數：L_p 模式為 (Σ_k μ_k |v_k|^p)^{1/p}，座標模式為 (Σ_i |v_i|^p)^{1/p}。

    :param x: Signal、DualVector 或一維陣列 (此時以 weights 或全 1 權重計算)。
    :param p: 有限指數，p ≥ 1。
    :param weights: 僅在 x 為裸陣列時使用的權重。
    :return: 非負實數。
    :raises ConfigurationError: p < 1 或 p 非有限。
    :raises NonFiniteInputError: 值含有 NaN 或 ±inf。
    """
    if not (p >= 1 and math.isfinite(p)):
        raise ConfigurationError(f"lp_norm 需要有限的 p ≥ 1，收到 {p}")
    if isinstance(x, (Signal, DualVector)):
        values = x.values
        weights = space_weights(x.space, x.dimension)
    else:
        values = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(values)):
            raise NonFiniteInputError("lp_norm 的輸入含有非有限值")
        weights = np.ones(values.shape[-1]) if weights is None else np.asarray(weights, dtype=float)
    scale = np.max(np.abs(values)) if values.size else 0.0
    if scale == 0.0:
        return 0.0
    # 先除以最大值，避免大 p 時溢位
    return float(scale * (weights @ (np.abs(values) / scale) ** p) ** (1.0 / p))


def dual_exponent(p: float) -> float:
    """回傳 p′ = p / (p − 1)；p ≤ 1 (p′ = ∞) 不支援。"""
    validate_exponent(p)
    return p / (p - 1.0)


def norm_equiv_factor(n: int, q: float) -> float:
    """
    最小常數 c 使得對所有 a ∈ R^n 皆有 ‖a‖_2 ≤ c‖a‖_q。

    q ≤ 2 時 c = 1 (範數隨指數遞減)；q ≥ 2 時 c = n^{1/2 − 1/q} (Hölder)。
    """
    if n < 1 or int(n) != n:
        raise ConfigurationError(f"n 必須為正整數，收到 {n}")
    if q < 1:
        raise ConfigurationError(f"q 必須 ≥ 1，收到 {q}")
    if q <= 2:
        return 1.0
    return float(n) ** (0.5 - 1.0 / q)


def dual_norm(f: DualVector) -> float:
    """‖f‖ = ‖w‖_{p′}，以同一組權重計算。"""
    return lp_norm(f, f.exponent)


def pairing(f: DualVector, x: Signal, p: Optional[float] = None) -> float:
    """
    計算 f(x)：L_p 模式為 Σ_k μ_k w_k v_k，座標模式為 Σ_i w_i v_i。

    Hölder 不等式保證 |f(x)| ≤ ‖f‖_{p′} ‖x‖_p。
    :param p: (可選) 訊號所在空間的指數；提供時檢查 f 的指數是否為其對偶。
    :raises DimensionMismatchError: f 與 x 不在同一個空間。
    :raises ConfigurationError: f 的指數與 p 的對偶不符。
    """
    if f.dimension != x.dimension or not same_space(f.space, x.space):
        raise DimensionMismatchError("pairing 的對偶向量與訊號不在同一個空間")
    if p is not None and not math.isclose(f.exponent, dual_exponent(p), rel_tol=DEFAULT_RTOL):
        raise ConfigurationError(f"對偶向量指數 {f.exponent} 不是 p={p} 的對偶指數")
    return float(np.sum(x.weights * f.values * x.values))


def stack_signals(signals: Sequence[Signal]) -> np.ndarray:
    """
    將一組共享同一空間的訊號疊成 T×M 矩陣。

    :raises DimensionMismatchError: 訊號長度或空間不一致。
    """
    if len(signals) == 0:
        raise DimensionMismatchError("至少需要一個訊號")
    space = signals[0].space
    size = signals[0].dimension
    for s in signals:
        if s.dimension != size or not same_space(s.space, space):
            raise DimensionMismatchError("所有訊號必須位於同一個空間")
    return np.vstack([s.values for s in signals])


def make_signals(matrix, space: Optional[MeasureSpace] = None) -> list:
    """stack_signals 的反向操作：把 T×M 矩陣拆成 Signal 列表。"""
    return [Signal(row, space) for row in np.atleast_2d(np.asarray(matrix, dtype=float))]


def sup_norm(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(np.max(np.abs(values))) if values.size else 0.0

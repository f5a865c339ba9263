"""
以 BLAAR 前處理 (對偶訊號 + Lewis 座標) 為輸入的二階感知器、hinge 損失與錯誤次數上界。
"""
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigurationError, DimensionMismatchError
from .lattice_core import Signal, lp_norm, pairing
from .lewis_basis import build_lewis_basis, lewis_coordinates
from .logger import get_logger
from .sobolev_bridge import DomainGrid, SobolevParams, comparator_from_function, dual_signal, sobolev_norm

logger = get_logger(__name__)

LABELS = (-1, 1)


def _check_label(y) -> int:
    if y not in LABELS:
        raise ConfigurationError(f"標籤必須是 -1 或 +1，收到 {y}")
    return int(y)


@dataclass(frozen=True, eq=False)
class ClassifierState:
    """
    二階感知器的狀態。

    :param mistakes: 出錯的回合索引集合 𝓜_t。
    :param accumulator: aI + Σ_{i∈𝓜} r_i r_i′。
    :param vote: Σ_{i∈𝓜} y_i r_i。
    """
    accumulator: np.ndarray
    vote: np.ndarray
    a: float
    mistakes: Tuple[int, ...] = ()

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ConfigurationError(f"a 必須為正有限值，收到 {self.a}")
        accumulator = np.array(self.accumulator, dtype=float)
        vote = np.array(self.vote, dtype=float)
        if accumulator.shape != (vote.size, vote.size):
            raise DimensionMismatchError(f"accumulator {accumulator.shape} 與 vote {vote.shape} 維度不一致")
        accumulator.setflags(write=False)
        vote.setflags(write=False)
        object.__setattr__(self, "accumulator", accumulator)
        object.__setattr__(self, "vote", vote)

    @classmethod
    def fresh(cls, n: int, a: float) -> "ClassifierState":
        return cls(accumulator=a * np.eye(n), vote=np.zeros(n), a=a)

    @property
    def n(self) -> int:
        return int(self.vote.size)


def sop_predict(state: ClassifierState, r_t) -> int:
    """
    sign[(Σ y_i r_i)′(aI + Σ r_i r_i′)^{−1} r_t]，sign(0) 取 +1。

    把 r_t r_t′ 也加入矩陣 (原始二階感知器的寫法) 只會把引數除以 1 + r_t′A^{−1}r_t，符號不變。
    """
    r_t = np.asarray(r_t, dtype=float)
    if r_t.shape != (state.n,):
        raise DimensionMismatchError(f"座標維度 {r_t.shape} 與分類器維度 {state.n} 不一致")
    margin = float(state.vote @ cho_solve(cho_factor(state.accumulator, lower=True), r_t))
    return 1 if margin >= 0.0 else -1


def sop_update(state: ClassifierState, r_t, y_t: int, predicted: int, t: Optional[int] = None) -> ClassifierState:
    """預測正確時狀態不變；出錯時把 t 加入 𝓜 並累加 r_t r_t′ 與 y_t r_t。"""
    y_t = _check_label(y_t)
    _check_label(predicted)
    if predicted == y_t:
        return state
    r_t = np.asarray(r_t, dtype=float)
    if r_t.shape != (state.n,):
        raise DimensionMismatchError(f"座標維度 {r_t.shape} 與分類器維度 {state.n} 不一致")
    index = len(state.mistakes) if t is None else int(t)
    return ClassifierState(
        accumulator=state.accumulator + np.outer(r_t, r_t),
        vote=state.vote + y_t * r_t,
        a=state.a,
        mistakes=state.mistakes + (index,),
    )


def hinge_loss(f_value: float, y: int, gamma: float) -> float:
    """D_γ(f, (x, y)) = max{0, γ − y·f(x)}。"""
    if not gamma > 0:
        raise ConfigurationError(f"gamma 必須為正，收到 {gamma}")
    return max(0.0, gamma - y * f_value)


def rank_term(T: int, p: float) -> float:
    """錯誤上界中的 T^{1/2−1/p} 因子，照公式計算。"""
    return float(T) ** (0.5 - 1.0 / p)


def mistake_bound(gamma: float, f_norm_sq: float, n_rank_term: float, a: float,
                  f_values_on_mistakes: Sequence[float], c_B: float, D_gamma_total: float) -> float:
    """
    錯誤次數上界 R²/(2γ²) + D/γ + (R/γ)·√(D/γ + R²/(4γ²))，
    其中 R² = c_B²·(n_rank_term·‖f‖² + (1/a)·Σ_{i∈𝓜} f(x_i)²)，D 為 hinge 損失總和。

    D = 0 時化簡為 R²/γ²。
    """
    if not gamma > 0:
        raise ConfigurationError(f"gamma 必須為正，收到 {gamma}")
    if not a > 0:
        raise ConfigurationError(f"a 必須為正，收到 {a}")
    if f_norm_sq < 0 or D_gamma_total < 0 or n_rank_term < 0:
        raise ConfigurationError("‖f‖²、n_rank_term 與 D_γ 不可為負")
    f_values = np.asarray(f_values_on_mistakes, dtype=float)
    r_sq = c_B ** 2 * (n_rank_term * f_norm_sq + float(np.sum(f_values ** 2)) / a)
    r = math.sqrt(r_sq)
    d = D_gamma_total
    return r_sq / (2 * gamma ** 2) + d / gamma + (r / gamma) * math.sqrt(d / gamma + r_sq / (4 * gamma ** 2))


@dataclass(frozen=True, eq=False)
class SopTrace:
    predictions: np.ndarray
    labels: np.ndarray
    mistakes: Tuple[int, ...]
    a: float

    @property
    def mistake_count(self) -> int:
        return len(self.mistakes)


def sop_run(coordinates: np.ndarray, labels: Sequence[int], a: float) -> SopTrace:
    """在 T×n 座標矩陣上依序執行二階感知器，回傳完整的預測與出錯紀錄。"""
    coordinates = np.atleast_2d(np.asarray(coordinates, dtype=float))
    labels = [_check_label(int(y)) for y in labels]
    if coordinates.shape[0] != len(labels):
        raise DimensionMismatchError("座標數量與標籤數量不一致")
    state = ClassifierState.fresh(coordinates.shape[1], a)
    predictions = np.empty(len(labels), dtype=int)
    for t, (r_t, y_t) in enumerate(zip(coordinates, labels)):
        predictions[t] = sop_predict(state, r_t)
        state = sop_update(state, r_t, y_t, int(predictions[t]), t)
    return SopTrace(predictions=predictions, labels=np.asarray(labels), mistakes=state.mistakes, a=a)


def comparator_coordinates(coordinates: np.ndarray, f_values: Sequence[float]) -> np.ndarray:
    """求最小範數的 u 使 u·r_i = f(x_i)；‖u‖ 用來檢查 ‖g‖ ≤ ‖U^{−1}‖·‖f‖ 的轉移。"""
    return np.linalg.lstsq(np.atleast_2d(coordinates), np.asarray(f_values, dtype=float), rcond=None)[0]


@dataclass(frozen=True, eq=False)
class ClassificationResult:
    mistakes: int
    bound: float
    n: int
    trace: SopTrace
    comparator_norm: float
    hinge_total: float


def classify_run(points: Sequence, labels: Sequence[int], grid: DomainGrid, params: SobolevParams,
                 gamma: float, a: float, comparator: Signal) -> ClassificationResult:
    """
    完整流程：點 → 對偶訊號 β_i ∈ L_{p′} → Lewis 座標 r_i = U(β_i) → 二階感知器。

    :param comparator: 網格上的比較函數 f，其範數取 ‖lift(f)‖_p。
    :return: 出錯次數、對 f 的錯誤上界與 Lewis 秩 n。
    """
    signals = [dual_signal(x, grid, params) for x in points]
    basis = build_lewis_basis(signals, params.dual_p)
    coordinates = lewis_coordinates(basis)
    trace = sop_run(coordinates, labels, a)

    eta = comparator_from_function(comparator, grid, params)
    f_values = np.array([pairing(eta, beta) for beta in signals])
    hinge_total = float(sum(hinge_loss(fv, int(y), gamma) for fv, y in zip(f_values, labels)))
    c_B = max(lp_norm(beta, params.dual_p) for beta in signals)
    f_norm = sobolev_norm(comparator, grid, params)
    bound = mistake_bound(
        gamma=gamma,
        f_norm_sq=f_norm ** 2,
        n_rank_term=rank_term(len(signals), params.p),
        a=a,
        f_values_on_mistakes=f_values[list(trace.mistakes)],
        c_B=c_B,
        D_gamma_total=hinge_total,
    )
    logger.info("二階感知器執行完成", mistakes=trace.mistake_count, bound=bound, n=basis.n)
    return ClassificationResult(mistakes=trace.mistake_count, bound=bound, n=basis.n, trace=trace,
                                comparator_norm=f_norm, hinge_total=hinge_total)

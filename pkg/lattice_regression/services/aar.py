"""
R^n 上的回歸聚合演算法 (AAR) 與其三組後悔界。

預測公式 γ_T = (Σ_{t<T} y_t x_t)′ (aI + Σ_{t≤T} x_t x_t′)^{-1} x_T，
反矩陣中的和「包含」當前訊號 x_T。線性系統以 Cholesky 分解求解；
aI 項保證正定，不需要樞軸備援。
"""
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigurationError, DimensionMismatchError, NonFiniteInputError, NotPositiveSemidefiniteError
from .lattice_core import Signal, dual_exponent, stack_signals
from .logger import get_logger

logger = get_logger(__name__)


def _as_vector(x) -> np.ndarray:
    values = x.values if isinstance(x, Signal) else np.asarray(x, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NonFiniteInputError("AAR 的輸入含有非有限值")
    return values


@dataclass(frozen=True, eq=False)
class AarState:
    """
    AAR 的累加狀態快照。

    :param gram: n×n 對稱正定累加器 aI + Σ x_t x_t′。
    :param moment: 長度 n 的累加器 Σ y_t x_t。
    :param a: 正則化參數。
    """
    gram: np.ndarray
    moment: np.ndarray
    a: float

    def __post_init__(self):
        gram = np.array(self.gram, dtype=float)
        moment = np.array(self.moment, dtype=float)
        if gram.ndim != 2 or gram.shape[0] != gram.shape[1] or gram.shape[0] != moment.size:
            raise DimensionMismatchError(f"gram {gram.shape} 與 moment {moment.shape} 維度不一致")
        if not self.a > 0:
            raise ConfigurationError(f"a 必須為正，收到 {self.a}")
        gram.setflags(write=False)
        moment.setflags(write=False)
        object.__setattr__(self, "gram", gram)
        object.__setattr__(self, "moment", moment)

    @classmethod
    def fresh(cls, n: int, a: float) -> "AarState":
        return cls(gram=a * np.eye(n), moment=np.zeros(n), a=a)

    @property
    def n(self) -> int:
        return int(self.moment.size)


def aar_predict(state: AarState, x_new) -> float:
    """
    在新訊號上給出 AAR 預測；預測不需要 y_T。

    先把 x_new x_new′ 加入 gram 的副本，再解線性系統。
    :raises DimensionMismatchError: 訊號維度與狀態不符。
    """
    x = _as_vector(x_new)
    if x.size != state.n:
        raise DimensionMismatchError(f"訊號維度 {x.size} 與 AAR 狀態維度 {state.n} 不一致")
    factor = cho_factor(state.gram + np.outer(x, x), lower=True)
    return float(state.moment @ cho_solve(factor, x))


def aar_update(state: AarState, x, y: float, Y: Optional[float] = None) -> AarState:
    """
    回傳加入 (x, y) 後的新狀態：gram 增加 x x′，moment 增加 y·x。

    |y| > Y 時只記錄警告並繼續，界限因此不再有保證。
    """
    x = _as_vector(x)
    if x.size != state.n:
        raise DimensionMismatchError(f"訊號維度 {x.size} 與 AAR 狀態維度 {state.n} 不一致")
    if not math.isfinite(y):
        raise NonFiniteInputError("結果 y 不是有限值")
    if Y is not None and abs(y) > Y:
        logger.warning(f"結果 |y|={abs(y):.6g} 超出範圍 Y={Y}，界限不再保證")
    return AarState(gram=state.gram + np.outer(x, x), moment=state.moment + y * x, a=state.a)


def aar_predictions(signals: Sequence[Signal], outcomes: Sequence[float], a: float,
                    Y: Optional[float] = None) -> np.ndarray:
    """依線上協定逐步預測並更新，回傳所有預測 γ_1..γ_T。"""
    matrix = stack_signals(signals)
    if len(outcomes) != matrix.shape[0]:
        raise DimensionMismatchError("訊號數量與結果數量不一致")
    state = AarState.fresh(matrix.shape[1], a)
    predictions = np.empty(matrix.shape[0])
    for t, (x, y) in enumerate(zip(matrix, outcomes)):
        predictions[t] = aar_predict(state, x)
        state = aar_update(state, x, float(y), Y)
    return predictions


def offline_ridge(signals: Sequence[Signal], outcomes: Sequence[float], a: float) -> np.ndarray:
    """離線嶺回歸解 argmin_θ Σ (y_t − θ′x_t)² + a‖θ‖²。"""
    matrix = stack_signals(signals)
    gram = a * np.eye(matrix.shape[1]) + matrix.T @ matrix
    return cho_solve(cho_factor(gram, lower=True), matrix.T @ np.asarray(outcomes, dtype=float))


def _check_positive(**kwargs):
    for name, value in kwargs.items():
        if not (value > 0 and math.isfinite(value)):
            raise ConfigurationError(f"{name} 必須為正有限值，收到 {value}")


def _check_nonnegative(**kwargs):
    for name, value in kwargs.items():
        if not (value >= 0 and math.isfinite(value)):
            raise ConfigurationError(f"{name} 必須為非負有限值，收到 {value}")


def aar_bound_eq1(T: int, X: float, Y: float, a: float, n: int, theta_l2_sq: float) -> float:
    """
    AAR 經典後悔項 a‖θ‖²_2 + nY² ln(TX²/a + 1)，其中 ‖x_t‖_∞ ≤ X。

    對 T 單調遞增。
    """
    _check_positive(T=T, a=a, n=n)
    _check_nonnegative(X=X, Y=Y, theta_l2_sq=theta_l2_sq)
    return a * theta_l2_sq + n * Y ** 2 * math.log1p(T * X ** 2 / a)


def aar_bound_eq2(T: int, X: float, Y: float, n: int, p: float, theta_p_norm_sq: float) -> Tuple[float, float]:
    """
    以 ℓ_p^n 範數表示的 AAR 後悔界，‖x_t‖_q ≤ X、θ ∈ ℓ_p^n。

    取 a = √(T n^{1−2/q})，後悔項為 (Y²X² + ‖θ‖²_p) T^{1/2} n^{1/2 − 1/max(q,p)}；
    q ≥ 2 與 1 < q < 2 兩種情形都由 max(q, p) 涵蓋。
    :return: (a, regret)。
    """
    q = dual_exponent(p)
    _check_positive(T=T, n=n)
    _check_nonnegative(X=X, Y=Y, theta_p_norm_sq=theta_p_norm_sq)
    a = math.sqrt(T * n ** (1.0 - 2.0 / q))
    regret = (Y ** 2 * X ** 2 + theta_p_norm_sq) * math.sqrt(T) * n ** (0.5 - 1.0 / max(q, p))
    return a, regret


def aar_bound_remark(T: int, X: float, Y: float, n: int, p: float, a: float, theta_p_norm_sq: float) -> float:
    """
    由經典界推得的另一組後悔項 (對 T 較好、對 n 較差)：

    - q ≥ 2：a‖θ‖²_p + Y²n ln(TX²/a + 1)
    - 1 < q < 2：a n^{1/2−1/p}‖θ‖²_p + Y²n ln(TX²/a + 1)
    """
    q = dual_exponent(p)
    _check_positive(T=T, a=a, n=n)
    _check_nonnegative(X=X, Y=Y, theta_p_norm_sq=theta_p_norm_sq)
    log_term = Y ** 2 * n * math.log1p(T * X ** 2 / a)
    if q >= 2:
        return a * theta_p_norm_sq + log_term
    return a * n ** (0.5 - 1.0 / p) * theta_p_norm_sq + log_term


def aar_bound_kernel_form(signals: Sequence[Signal], a: float, Y: float, theta_l2_sq: float) -> float:
    """緊的對數行列式形式 a‖θ‖²_2 + Y² ln det(I + (1/a) Σ x_t x_t′)，經典界即由此放寬而來。"""
    _check_positive(a=a)
    _check_nonnegative(Y=Y, theta_l2_sq=theta_l2_sq)
    matrix = stack_signals(signals)
    system = np.eye(matrix.shape[1]) + matrix.T @ matrix / a
    sign, logdet = np.linalg.slogdet(system)
    if sign <= 0 or not np.isfinite(logdet):
        min_eigenvalue = float(np.linalg.eigvalsh(system)[0])
        raise NotPositiveSemidefiniteError(
            f"I + X′X/a 的行列式不為正 (最小特徵值 {min_eigenvalue:.3e})", min_eigenvalue)
    return a * theta_l2_sq + Y ** 2 * logdet


def aar_bound_relaxed(T: int, max_l2_sq: float, a: float, Y: float, theta_l2_sq: float) -> float:
    """ln(1+x) ≤ x 放寬後的中間界 a‖θ‖²_2 + Y²T·max_t‖x_t‖²_2 / a。"""
    _check_positive(T=T, a=a)
    _check_nonnegative(max_l2_sq=max_l2_sq, Y=Y, theta_l2_sq=theta_l2_sq)
    return a * theta_l2_sq + Y ** 2 * T * max_l2_sq / a

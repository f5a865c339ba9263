"""
核化的 AAR (KAAR)：由 Gram 矩陣直接給出預測，以及對數行列式後悔界。

半線上設定下所有訊號一開始就已知，因此完整的 T×T 矩陣 K̃ 可以先建好；
第 t 步只使用左上角的 t×t 區塊，並把第 t 個標籤歸零。
aI + K̃ 的 Cholesky 因子其左上區塊恰為 aI + K̃_t 的 Cholesky 因子，
所以整場遊戲只需分解一次。
"""
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh, solve_triangular

from .errors import ConfigurationError, DimensionMismatchError, NonFiniteInputError, NotPositiveSemidefiniteError
from .lattice_core import Signal, stack_signals
from .logger import get_logger

logger = get_logger(__name__)

PSD_TOLERANCE = 1e-8


def _repair_psd(entries: np.ndarray) -> np.ndarray:
    """
    檢查對稱矩陣是否半正定；落在 [−tol·‖K‖, 0) 的特徵值截斷為 0，更負的值視為錯誤。
    """
    eigenvalues, eigenvectors = eigh(entries)
    scale = float(np.max(np.abs(eigenvalues))) if eigenvalues.size else 0.0
    min_eigenvalue = float(eigenvalues[0]) if eigenvalues.size else 0.0
    if min_eigenvalue >= 0.0:
        return entries
    if min_eigenvalue < -PSD_TOLERANCE * scale:
        raise NotPositiveSemidefiniteError(
            f"Gram 矩陣不是半正定 (最小特徵值 {min_eigenvalue:.3e})", min_eigenvalue)
    logger.warning(f"Gram 矩陣有微小負特徵值 {min_eigenvalue:.3e}，截斷為 0")
    clipped = np.clip(eigenvalues, 0.0, None)
    repaired = (eigenvectors * clipped) @ eigenvectors.T
    return 0.5 * (repaired + repaired.T)


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """
    兩兩純量積構成的 T×T 對稱半正定矩陣 K̃。

    建構時會對稱化並做半正定修補。
    """
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DimensionMismatchError(f"Gram 矩陣必須是方陣，收到形狀 {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise NonFiniteInputError("Gram 矩陣含有非有限值")
        asymmetry = np.max(np.abs(entries - entries.T)) if entries.size else 0.0
        if asymmetry > PSD_TOLERANCE * max(1.0, float(np.max(np.abs(entries)))):
            raise ConfigurationError(f"Gram 矩陣不對稱 (最大差異 {asymmetry:.3e})")
        entries = _repair_psd(0.5 * (entries + entries.T))
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_signals(cls, signals: Sequence[Signal]) -> "GramMatrix":
        """以 L_2 純量積 Σ_k μ_k x_s(ω_k) x_l(ω_k) 建立 Gram 矩陣；座標模式即一般內積。"""
        matrix = stack_signals(signals)
        weights = signals[0].weights
        return cls((matrix * weights) @ matrix.T)

    @property
    def size(self) -> int:
        return int(self.entries.shape[0])

    def leading_block(self, t: int) -> "GramMatrix":
        return GramMatrix(self.entries[:t, :t])

    def diagonal_part(self) -> "GramMatrix":
        return GramMatrix(np.diag(np.diag(self.entries)))

    def scaled(self, factor: float) -> "GramMatrix":
        return GramMatrix(self.entries * factor)


def _check_a(a: float):
    if not (a > 0 and math.isfinite(a)):
        raise ConfigurationError(f"a 必須為正有限值，收到 {a}")


def kaar_predict(gram: GramMatrix, labels: Sequence[float], a: float) -> float:
    """
    γ_T = (y_1, …, y_{T−1}, 0)(aI + K̃)^{−1} k̃(x_T)，k̃(x_T) 為 K̃ 的最後一行。

    :param labels: 長度 T 的標籤，最後一個必須為 0。
    :raises DimensionMismatchError: 標籤長度與 Gram 大小不符。
    :raises ConfigurationError: a ≤ 0 或最後一個標籤不為 0。
    """
    _check_a(a)
    labels = np.asarray(labels, dtype=float)
    if gram.size < 1 or labels.shape != (gram.size,):
        raise DimensionMismatchError(f"標籤長度 {labels.size} 與 Gram 大小 {gram.size} 不一致")
    if labels[-1] != 0.0:
        raise ConfigurationError("預測時第 T 個標籤必須歸零")
    factor = cho_factor(a * np.eye(gram.size) + gram.entries, lower=True)
    return float(labels @ cho_solve(factor, gram.entries[:, -1]))


def kaar_predictions(gram: GramMatrix, outcomes: Sequence[float], a: float) -> np.ndarray:
    """
    依序給出 γ_1..γ_T；第 t 步使用 K̃ 的左上 t×t 區塊與前 t−1 個結果。

    只分解一次 aI + K̃，每一步用因子的左上區塊做兩次三角求解。
    """
    _check_a(a)
    outcomes = np.asarray(outcomes, dtype=float)
    if outcomes.shape != (gram.size,):
        raise DimensionMismatchError(f"結果數量 {outcomes.size} 與 Gram 大小 {gram.size} 不一致")
    lower = np.linalg.cholesky(a * np.eye(gram.size) + gram.entries)
    predictions = np.zeros(gram.size)
    for t in range(1, gram.size):
        block = lower[:t + 1, :t + 1]
        z = solve_triangular(block, gram.entries[:t + 1, t], lower=True)
        w = solve_triangular(block.T, z, lower=False)
        predictions[t] = outcomes[:t] @ w[:t]
    return predictions


def log_det_term(gram: GramMatrix, a: float) -> float:
    """ln det(I + K̃/a)，以 Cholesky 對角線計算。"""
    _check_a(a)
    if gram.size == 0:
        return 0.0
    lower = np.linalg.cholesky(np.eye(gram.size) + gram.entries / a)
    return float(2.0 * np.sum(np.log(np.diag(lower))))


def kaar_bound(gram: GramMatrix, a: float, Y: float, h_norm_sq: float) -> float:
    """KAAR 後悔項 a‖h‖²_H + Y² ln det(I + K̃/a)。"""
    if h_norm_sq < 0:
        raise ConfigurationError(f"h_norm_sq 不可為負，收到 {h_norm_sq}")
    return a * h_norm_sq + Y ** 2 * log_det_term(gram, a)


def kaar_simplified_bound(T: int, max_diag: float, a: float, Y: float, h_norm_sq: float) -> float:
    """
    以 ln(1+x) ≤ x 與 Hadamard 不等式放寬後的界 a‖h‖² + Y²T·max_t K̃_tt / a。

    在同一組資料上恆不小於 kaar_bound。
    """
    _check_a(a)
    if max_diag < 0 or h_norm_sq < 0:
        raise ConfigurationError("max_diag 與 h_norm_sq 不可為負")
    return a * h_norm_sq + Y ** 2 * T * max_diag / a

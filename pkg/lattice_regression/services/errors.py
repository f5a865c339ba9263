from typing import Optional


class LatticeRegressionError(ValueError):
    """套件內所有可預期錯誤的基底類別。"""


class DimensionMismatchError(LatticeRegressionError):
    """向量、矩陣或空間的維度不一致。"""


class NonFiniteInputError(LatticeRegressionError):
    """輸入包含 NaN 或 ±inf。"""


class ConfigurationError(LatticeRegressionError):
    """參數或實驗設定違反前置條件。"""


class DegenerateSignalError(LatticeRegressionError):
    """所有訊號皆為零，線性獨立子集合為空 (n = 0)。"""


class NotPositiveSemidefiniteError(LatticeRegressionError):
    """Gram 矩陣的負特徵值超出容許誤差。"""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class ConvergenceError(LatticeRegressionError):
    """
    迭代求解器在上限次數內未收斂。

    :param residual: 最後一次迭代的殘差，呼叫端可據此決定是否以阻尼重試。
    :param iterations: 已執行的迭代次數。
    """

    def __init__(self, message: str, residual: float, iterations: int, damping: Optional[float] = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.damping = damping

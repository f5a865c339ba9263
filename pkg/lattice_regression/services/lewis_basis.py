"""
BLAAR 的前兩步與其核：最大線性獨立子集合、Lewis 基底 (行列式最大化) 以及導出的純量積。

給定獨立訊號 x_{r_1}..x_{r_n}，令 γ_i = Σ_j c_ij x_{r_j}、γ_Z = √(Σ_i γ_i²)，
在限制 ‖γ_Z‖_p ≤ 1 下最大化 |det C|。最優解滿足雙正交條件

    n · Σ_k μ_k γ_i(ω_k) γ_j(ω_k) |γ_Z(ω_k)|^{p−2} = δ_ij

其權重指數為 p−2，此時 integral_kernel 與未縮放的 blaar_kernel 在不動點上重合。
此條件的跡給出 ‖γ_Z‖_p = 1，所以不動點與限制條件相容。

求解採用 Lewis 權重的不動點疊代：h = γ_Z^{p−2}，G_h = B diag(μh) B′，C ← G_h^{−1/2}/√n，
再縮放使限制成立。p ≥ 4 時一開始即以 0.5 的幾何阻尼更新 h；其他情形在殘差上升時才啟用。
"""
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import minimize

from .errors import ConvergenceError, DegenerateSignalError, DimensionMismatchError
from .kaar import GramMatrix
from .lattice_core import MeasureSpace, Signal, lp_norm, space_weights, stack_signals, validate_exponent
from .logger import get_logger

logger = get_logger(__name__)

RANK_TOLERANCE = 1e-10
LEWIS_TOLERANCE = 1e-10
MAX_ITERATIONS = 500
DEFAULT_DAMPING = 0.5
CLAMP_RATIO = 1e-12
NON_EXPANSION_SLACK = 1e-8
# 殘差停滯時可接受的上限；停滯判定為連續 STALL_WINDOW 次沒有 0.1% 的改善
STALL_ACCEPT = 1e-8
STALL_WINDOW = 25


def max_independent_subset(signals: Sequence[Signal], tol: float = RANK_TOLERANCE) -> Tuple[Tuple[int, ...], np.ndarray]:
    """
    BLAAR 第一步：依出現順序挑出最大線性獨立子集合。

    奇異值低於 tol × 最大奇異值者視為 0；數值秩決定 n。其後依序以 Gram-Schmidt
    (重正交化一次) 檢查每個訊號是否擴張目前的張成空間。
    :return: (indices, alphas)，indices 為 0 起算的索引，alphas 為 T×n 矩陣，x_s = Σ_i α_si x_{r_i}。
    :raises DegenerateSignalError: 所有訊號皆為零。
    """
    matrix = stack_signals(signals)
    singular_values = np.linalg.svd(matrix, compute_uv=False)
    sigma_max = float(singular_values[0]) if singular_values.size else 0.0
    if sigma_max == 0.0:
        raise DegenerateSignalError("所有訊號皆為零，沒有可用的線性獨立子集合")
    rank = int(np.sum(singular_values > tol * sigma_max))

    indices = []
    basis = np.zeros((0, matrix.shape[1]))
    for s, x in enumerate(matrix):
        if len(indices) == rank:
            break
        residual = x - (x @ basis.T) @ basis
        residual = residual - (residual @ basis.T) @ basis
        norm = np.linalg.norm(residual)
        if norm > tol * sigma_max:
            indices.append(s)
            basis = np.vstack([basis, residual / norm])

    selected = matrix[indices]
    alphas = np.linalg.lstsq(selected.T, matrix.T, rcond=None)[0].T
    for i, s in enumerate(indices):
        alphas[s] = np.eye(len(indices))[i]
    return tuple(indices), alphas


@dataclass(frozen=True, eq=False)
class LewisBasis:
    """
    已求解的 Lewis 基底。

    :param indices: 第一步選出的 r_1..r_n (0 起算)。
    :param C: n×n 係數矩陣，γ = C·B。
    :param D: C 的反矩陣。
    :param gammaZ: γ_Z = √(Σ_i γ_i²)，‖γ_Z‖_p = 1。
    :param weight: |γ_Z|^{p−2} (p < 2 時在零點附近截斷)。
    :param alphas: T×n 矩陣，x_s = Σ_i α_si x_{r_i}。
    :param selected: n×M 矩陣，被選中訊號的取樣值 B。
    :param stalled: 殘差停滯於 STALL_ACCEPT 以下而提前接受時為 True，此時 residual 可能大於 tol。
    """
    indices: Tuple[int, ...]
    C: np.ndarray
    D: np.ndarray
    gammaZ: Signal
    weight: Signal
    alphas: np.ndarray
    selected: np.ndarray
    p: float
    residual: float
    iterations: int
    damping: Optional[float] = None
    space: Optional[MeasureSpace] = field(default=None)
    stalled: bool = False

    @property
    def n(self) -> int:
        return int(self.C.shape[0])

    @property
    def determinant(self) -> float:
        return float(abs(np.linalg.det(self.C)))

    @property
    def measure(self) -> np.ndarray:
        return space_weights(self.space, self.selected.shape[1])

    def signal_values(self) -> np.ndarray:
        """以 α·B 重建的全部 T 個訊號取樣值。"""
        return self.alphas @ self.selected

    def to_dict(self) -> Dict:
        return {
            "indices": list(self.indices),
            "p": self.p,
            "n": self.n,
            "C": self.C.tolist(),
            "D": self.D.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "damping": self.damping,
            "stalled": self.stalled,
        }


def _inverse_sqrt(matrix: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = eigh(matrix)
    return (eigenvectors / np.sqrt(eigenvalues)) @ eigenvectors.T


def _gamma_z(C: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum((C @ B) ** 2, axis=0))


def _lewis_weight(gamma_z: np.ndarray, p: float) -> np.ndarray:
    if p < 2:
        floor = CLAMP_RATIO * float(np.max(gamma_z))
        return np.maximum(gamma_z, floor) ** (p - 2)
    return gamma_z ** (p - 2)


def _normalize(C: np.ndarray, B: np.ndarray, mu: np.ndarray, p: float) -> np.ndarray:
    return C / lp_norm(_gamma_z(C, B), p, mu)


def biorthogonality_residual(C: np.ndarray, B: np.ndarray, mu: np.ndarray, p: float) -> float:
    """‖n·Γ W Γ′ − I‖_F，W = diag(μ_k · |γ_Z(ω_k)|^{p−2})。"""
    n = C.shape[0]
    gamma = C @ B
    h = _lewis_weight(_gamma_z(C, B), p)
    return float(np.linalg.norm(n * (gamma * (mu * h)) @ gamma.T - np.eye(n)))


def solve_lewis(signals: Sequence[Signal], p: float, space: Optional[MeasureSpace] = None,
                tol: float = LEWIS_TOLERANCE, max_iterations: int = MAX_ITERATIONS,
                damping: Optional[float] = None, indices: Optional[Sequence[int]] = None,
                alphas: Optional[np.ndarray] = None) -> LewisBasis:
    """
    BLAAR 第二步：在 L_p 截面限制下最大化 |det C|。
    殘差連續 STALL_WINDOW 次沒有改善且已不大於 STALL_ACCEPT (1e-8) 時接受目前解並標記
    stalled，因此有效容許誤差為 max(tol, STALL_ACCEPT)。

    :param signals: 線性獨立的訊號 x_{r_1}..x_{r_n}。
    :param space: (可選) 測度空間；省略時取自訊號本身。
    :param damping: 指定時一開始即以此阻尼更新權重。
    :param indices: (可選) 這些訊號在整場遊戲中的索引，預設為 0..n−1。
    :param alphas: (可選) 整場遊戲的 α 矩陣，預設為單位矩陣。
    :raises ConvergenceError: 疊代上限內殘差未降至 tol，例外中帶有最後的殘差。
    """
    validate_exponent(p)
    B = stack_signals(signals)
    if space is None:
        space = signals[0].space
    elif signals[0].space is not None and signals[0].space is not space:
        raise DimensionMismatchError("solve_lewis 的 space 與訊號所在空間不一致")
    mu = space_weights(space, B.shape[1])
    n = B.shape[0]

    C = _normalize(_inverse_sqrt((B * mu) @ B.T) / math.sqrt(n), B, mu, p)
    active_damping = damping if damping is not None else (DEFAULT_DAMPING if p >= 4 else None)
    h_used = None
    previous = math.inf
    best = math.inf
    stalled = 0
    accepted_stall = False
    residual = biorthogonality_residual(C, B, mu, p)
    iterations = 0

    while residual > tol:
        if iterations >= max_iterations:
            raise ConvergenceError(
                f"Lewis 基底在 {iterations} 次疊代後未收斂 (殘差 {residual:.3e})",
                residual=residual, iterations=iterations, damping=active_damping)
        if residual > previous and active_damping is None:
            active_damping = DEFAULT_DAMPING
            logger.warning(f"Lewis 疊代殘差上升 ({previous:.3e} → {residual:.3e})，啟用阻尼 {active_damping}")
        if residual < best * (1 - 1e-3):
            best, stalled = residual, 0
        else:
            stalled += 1
            if stalled >= STALL_WINDOW and residual <= STALL_ACCEPT:
                logger.debug(f"Lewis 疊代在殘差 {residual:.3e} 停滯，接受目前解")
                accepted_stall = True
                break
        previous = residual

        h = _lewis_weight(_gamma_z(C, B), p)
        if active_damping is not None and h_used is not None:
            h = h_used ** (1.0 - active_damping) * h ** active_damping
        h_used = h
        C = _normalize(_inverse_sqrt((B * (mu * h)) @ B.T) / math.sqrt(n), B, mu, p)
        iterations += 1
        residual = biorthogonality_residual(C, B, mu, p)
        logger.debug(f"Lewis 疊代 {iterations}: 殘差 {residual:.3e}")

    gamma_z = _gamma_z(C, B)
    if alphas is None:
        alphas = np.eye(n)
    if indices is None:
        indices = tuple(range(n))
    return LewisBasis(
        indices=tuple(int(i) for i in indices),
        C=C,
        D=np.linalg.inv(C),
        gammaZ=Signal(gamma_z, space),
        weight=Signal(_lewis_weight(gamma_z, p), space),
        alphas=np.asarray(alphas, dtype=float),
        selected=B,
        p=float(p),
        residual=residual,
        iterations=iterations,
        damping=active_damping,
        space=space,
        stalled=accepted_stall,
    )


def build_lewis_basis(signals: Sequence[Signal], p: float, tol: float = LEWIS_TOLERANCE,
                      damping: Optional[float] = None) -> LewisBasis:
    """第一步與第二步的組合：挑出獨立子集合後求解 Lewis 基底。"""
    indices, alphas = max_independent_subset(signals)
    basis = solve_lewis([signals[i] for i in indices], p, tol=tol, damping=damping,
                        indices=indices, alphas=alphas)
    logger.info("Lewis 基底求解完成", n=basis.n, p=p, residual=basis.residual, iterations=basis.iterations)
    return basis


def non_expansion_scale(basis: LewisBasis) -> float:
    """
    使 K̃_ss ≤ ‖x_s‖²_p 對所有 s 成立的縮放係數。

    p ≥ 2 時由 Hölder 不等式直接成立 (回傳 1)；p < 2 時 K̃_ss 最多可達 n^{2/p−1}‖x_s‖²_p，
    需要縮小核。超出 1e−8 的違反才會觸發縮放。
    """
    coordinates = basis.alphas @ basis.D / math.sqrt(basis.n)
    diag = np.sum(coordinates ** 2, axis=1)
    values = basis.signal_values()
    ratio = 0.0
    for s in range(values.shape[0]):
        norm_sq = lp_norm(values[s], basis.p, basis.measure) ** 2
        if norm_sq > 0:
            ratio = max(ratio, diag[s] / norm_sq)
    if ratio > 1.0 + NON_EXPANSION_SLACK:
        logger.warning(f"核違反非擴張性 (比值 {ratio:.6g})，縮放 1/{ratio:.6g}")
        return 1.0 / ratio
    return 1.0


def lewis_coordinates(basis: LewisBasis, safeguard: bool = True, scale: Optional[float] = None) -> np.ndarray:
    """
    座標向量 r_s = U(x_s) = D′α_s / √n (以列排成 T×n 矩陣)，其 Gram 矩陣即 blaar_kernel。

    :param scale: 已算好的 non_expansion_scale；省略時在 safeguard 下重新計算。
    """
    coordinates = basis.alphas @ basis.D / math.sqrt(basis.n)
    if safeguard:
        if scale is None:
            scale = non_expansion_scale(basis)
        coordinates = coordinates * math.sqrt(scale)
    return coordinates


def blaar_kernel(basis: LewisBasis, safeguard: bool = True, scale: Optional[float] = None) -> GramMatrix:
    """K̃_sl = (1/n) Σ_{i,j} α_si α_lj Σ_k d_ik d_jk，即 (1/n)·A D D′ A′。"""
    coordinates = lewis_coordinates(basis, safeguard=safeguard, scale=scale)
    return GramMatrix(coordinates @ coordinates.T)


def integral_kernel(basis: LewisBasis) -> GramMatrix:
    """k_sl = ∫ x_s x_l |γ_Z|^{p−2} dμ；在不動點上與未縮放的 blaar_kernel 相同，作為交叉驗證用。"""
    values = basis.signal_values()
    return GramMatrix((values * (basis.measure * basis.weight.values)) @ values.T)


@dataclass(frozen=True)
class DistanceEstimate:
    norm_forward: float
    norm_inverse: float
    product: float
    bound: float


def distance_estimate(basis: LewisBasis, samples: np.ndarray, safeguard: bool = True) -> DistanceEstimate:
    """
    在張成空間的樣本上量測 ‖U‖、‖U^{−1}‖ 與其乘積，並與 n^{|1/2−1/p|} 比較。

    :param samples: k×n 矩陣，每列 β 代表 x = Σ_i β_i x_{r_i}。
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[1] != basis.n:
        raise DimensionMismatchError(f"樣本維度 {samples.shape[1]} 與基底大小 {basis.n} 不一致")
    scale = non_expansion_scale(basis) if safeguard else 1.0
    images = samples @ basis.D * math.sqrt(scale / basis.n)
    forward, inverse = 0.0, 0.0
    for beta, image in zip(samples, images):
        x_norm = lp_norm(beta @ basis.selected, basis.p, basis.measure)
        u_norm = float(np.linalg.norm(image))
        if x_norm == 0.0:
            continue
        forward = max(forward, u_norm / x_norm)
        inverse = max(inverse, x_norm / u_norm)
    return DistanceEstimate(forward, inverse, forward * inverse, distance_bound(basis.n, basis.p))


def distance_bound(n: int, p: float, q: Optional[float] = None, Mp: float = 1.0, Mq: float = 1.0) -> float:
    """
    n 維子空間到 ℓ_2^n 的 Banach–Mazur 距離上界。

    只給 p 時視為 L_p 空間：n^{|1/2−1/p|}。給出 q 時視為 p-凸、q-凹的 Banach 格
    (1 < p ≤ 2 ≤ q)：n^α·M^{(p)}·M_{(q)}，α = max{1/p − 1/2, 1/2 − 1/q}。
    """
    if q is None:
        return float(n) ** abs(0.5 - 1.0 / p)
    alpha = max(1.0 / p - 0.5, 0.5 - 1.0 / q)
    return float(n) ** alpha * Mp * Mq


def john_bound(n: int) -> float:
    """不使用格結構時的一般上界 √n。"""
    return math.sqrt(n)


def brute_force_determinant(signals: Sequence[Signal], p: float, starts: int = 200, polish: int = 5,
                            seed: int = 0) -> float:
    """
    以隨機搜尋加 Nelder-Mead 精修估計限制下的最大 |det C|，供小規模驗證 solve_lewis。

    目標函數 log|det C| − n·log‖γ_Z‖_p 對 C 的縮放不變，因此可以不帶限制地搜尋。
    """
    B = stack_signals(signals)
    mu = space_weights(signals[0].space, B.shape[1])
    n = B.shape[0]
    rng = np.random.default_rng(seed)

    def objective(c: np.ndarray) -> float:
        C = c.reshape(n, n)
        sign, logdet = np.linalg.slogdet(C)
        norm = lp_norm(_gamma_z(C, B), p, mu)
        if sign == 0 or norm == 0.0:
            return math.inf
        return -(logdet - n * math.log(norm))

    candidates = sorted((objective(c), tuple(c)) for c in rng.standard_normal((starts, n * n)))
    best = math.inf
    for value, start in candidates[:polish]:
        result = minimize(objective, np.array(start), method="Nelder-Mead",
                          options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000, "maxfev": 20000})
        best = min(best, float(result.fun), value)
    return math.exp(-best)

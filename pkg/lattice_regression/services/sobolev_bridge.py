"""
Sobolev 空間 W_p^s 與 L_p 之間的 Bessel 位勢同構，以及點評估的對偶訊號。

區域取週期方盒 (環面) 上的均勻網格，兩個方向的 Fourier 變換都用離散 FFT 實現：

    lift(f)  = ((1 + |k|²)^{+s/2} f̂)^∨      W_p^s → L_p
    lower(η) = ((1 + |k|²)^{−s/2} η̂)^∨      L_p → W_p^s

波數 k = 2π·j / L (L 為邊長)。Fourier 係數採么正慣例並乘上 √(格胞體積)，
使 Σ_k |f̂_k|² 等於 ‖f‖²_{L_2}。網格外的查詢點會對齊到最近的格點，距離記錄在紀錄中。
"""
import math
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .blaar import GameTrace, SemiOnlineGame, blaar_run
from .errors import ConfigurationError, DimensionMismatchError
from .lattice_core import DualVector, GameConfig, MeasureSpace, Signal, dual_exponent, lp_norm, validate_exponent
from .logger import get_logger

logger = get_logger(__name__)

MAX_GRID_POINTS = 1 << 16
DIRECTIONS = ("lift", "lower")


@dataclass(frozen=True)
class DomainGrid:
    """
    m 維週期方盒 [0, side)^m 上、每軸 N 個點的均勻網格。

    誘導的測度空間權重皆為格胞體積 (side/N)^m。
    """
    m: int
    side: float
    N: int
    max_points: int = MAX_GRID_POINTS

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ConfigurationError(f"維度 m 必須為正整數，收到 {self.m}")
        if not (self.side > 0 and math.isfinite(self.side)):
            raise ConfigurationError(f"邊長必須為正，收到 {self.side}")
        if int(self.N) != self.N or self.N < 2:
            raise ConfigurationError(f"每軸解析度 N 必須 ≥ 2，收到 {self.N}")
        if self.N ** self.m > self.max_points:
            raise ConfigurationError(f"網格點數 {self.N ** self.m} 超過上限 {self.max_points}")

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.N,) * self.m

    @property
    def size(self) -> int:
        return self.N ** self.m

    @property
    def spacing(self) -> float:
        return self.side / self.N

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.m

    @cached_property
    def space(self) -> MeasureSpace:
        return MeasureSpace(weights=np.full(self.size, self.cell_volume), points=self.coordinates())

    def coordinates(self) -> np.ndarray:
        """回傳 M×m 的格點座標，順序與 reshape(-1) 的展開順序一致。"""
        axes = [np.arange(self.N) * self.spacing] * self.m
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([axis.reshape(-1) for axis in mesh], axis=1)

    def wavenumber_sq(self) -> np.ndarray:
        """|k|²，形狀與網格相同，k = 2π·fftfreq(N, d=side/N)。"""
        k = 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.spacing)
        mesh = np.meshgrid(*([k] * self.m), indexing="ij")
        return sum(axis ** 2 for axis in mesh)

    def snap(self, point) -> Tuple[Tuple[int, ...], float]:
        """
        把任意點對齊到最近的格點 (週期意義下)。

        :return: (多重索引, 對齊距離)。
        """
        point = np.atleast_1d(np.asarray(point, dtype=float))
        if point.shape != (self.m,):
            raise DimensionMismatchError(f"點的維度 {point.shape} 與網格維度 {self.m} 不一致")
        if not np.all(np.isfinite(point)):
            raise ConfigurationError("查詢點含有非有限值")
        raw = np.rint(point / self.spacing)
        offset = point - raw * self.spacing
        index = tuple(int(i) % self.N for i in raw)
        return index, float(np.linalg.norm(offset))

    def flat_index(self, index: Tuple[int, ...]) -> int:
        return int(np.ravel_multi_index(index, self.shape))


@dataclass(frozen=True)
class SobolevParams:
    """平滑度 s > 0、可積指數 p > 1、維度 m，且需 s·p > m (函數連續、點評估有界)。"""
    s: float
    p: float
    m: int

    def __post_init__(self):
        if not (self.s > 0 and math.isfinite(self.s)):
            raise ConfigurationError(f"s 必須為正，收到 {self.s}")
        validate_exponent(self.p)
        if int(self.m) != self.m or self.m < 1:
            raise ConfigurationError(f"m 必須為正整數，收到 {self.m}")
        if not self.s * self.p > self.m:
            raise ConfigurationError(f"需要 s·p > m，收到 s={self.s}, p={self.p}, m={self.m}")

    @property
    def dual_p(self) -> float:
        return dual_exponent(self.p)


@lru_cache(maxsize=64)
def _multiplier(grid: DomainGrid, exponent: float) -> np.ndarray:
    values = (1.0 + grid.wavenumber_sq()) ** exponent
    values.setflags(write=False)
    return values


def _grid_values(f, grid: DomainGrid) -> np.ndarray:
    values = f.values if isinstance(f, Signal) else np.asarray(f, dtype=float)
    if values.size != grid.size:
        raise DimensionMismatchError(f"函數取樣數 {values.size} 與網格點數 {grid.size} 不一致")
    return values.reshape(grid.shape)


def bessel_multiplier_apply(f, grid: DomainGrid, s: float, direction: str = "lift") -> Signal:
    """
    套用 Fourier 乘子 (1 + |k|²)^{±s/2}；lift 取 +s/2，lower 取 −s/2。

    :param f: 網格上的 Signal 或取樣值陣列。
    :raises ConfigurationError: direction 不是 lift 或 lower。
    """
    if direction not in DIRECTIONS:
        raise ConfigurationError(f"direction 必須是 {DIRECTIONS} 之一，收到 {direction}")
    sign = 1.0 if direction == "lift" else -1.0
    spectrum = np.fft.fftn(_grid_values(f, grid)) * _multiplier(grid, sign * s / 2.0)
    return Signal(np.real(np.fft.ifftn(spectrum)).reshape(-1), grid.space)


def fourier_coefficients(f, grid: DomainGrid) -> np.ndarray:
    """么正 FFT 乘上 √(格胞體積)，Σ|f̂|² = ‖f‖²_{L_2}。"""
    return np.fft.fftn(_grid_values(f, grid), norm="ortho") * math.sqrt(grid.cell_volume)


def sobolev_norm(f, grid: DomainGrid, params: SobolevParams) -> float:
    """‖f‖_{W_p^s} := ‖lift(f)‖_p。"""
    return lp_norm(bessel_multiplier_apply(f, grid, params.s, "lift"), params.p)


def plancherel_norm(f, grid: DomainGrid, s: float) -> float:
    """Hilbert 情形的 Sobolev 範數 (Σ_k (1+|k|²)^s |f̂_k|²)^{1/2}。"""
    coefficients = fourier_coefficients(f, grid)
    return float(math.sqrt(np.sum(_multiplier(grid, s) * np.abs(coefficients) ** 2)))


@lru_cache(maxsize=64)
def _kernel_at_origin(grid: DomainGrid, s: float) -> np.ndarray:
    delta = np.zeros(grid.size)
    delta[0] = 1.0
    kernel = bessel_multiplier_apply(delta, grid, s, "lower").values / grid.cell_volume
    kernel = kernel.reshape(grid.shape)
    kernel.setflags(write=False)
    return kernel


def dual_signal(x_point, grid: DomainGrid, params: SobolevParams) -> Signal:
    """
    點評估在 L_{p′} 中的代表元 β = lower(δ_x)/格胞體積。

    對網格上任何 η 都有 pairing(β, η) = lower(η)(x)，因此 pairing(β, lift(f)) = f(x)。
    β 是以 x 為中心的 Bessel 核取樣，由原點的核循環平移得到。
    """
    index, _ = grid.snap(x_point)
    kernel = np.roll(_kernel_at_origin(grid, params.s), shift=index, axis=tuple(range(grid.m)))
    return Signal(kernel.reshape(-1), grid.space)


def comparator_from_function(f, grid: DomainGrid, params: SobolevParams) -> DualVector:
    """把 W_p^s 中的函數 f 轉成 BLAAR 的比較對象 η = lift(f) ∈ L_p = (L_{p′})*。"""
    lifted = bessel_multiplier_apply(f, grid, params.s, "lift")
    return DualVector(lifted.values, exponent=params.p, space=grid.space)


def sobolev_blaar_run(points: Sequence, outcomes: Sequence[float], grid: DomainGrid, params: SobolevParams,
                      Y: float, a: Optional[float] = None, a_rule: str = "algorithm") -> GameTrace:
    """
    將每個點轉為對偶訊號 β_i ∈ L_{p′}，再以指數 p′ 執行 BLAAR。

    紀錄中的 exponent 為實際使用的 p′，snap_distances 為各點的對齊距離。
    """
    snapped = snap_points(points, grid)
    signals = [dual_signal(x, grid, params) for x in points]
    config = GameConfig(p=params.dual_p, Y=Y, T=len(signals), a=a)
    trace = blaar_run(SemiOnlineGame(signals, np.asarray(outcomes, dtype=float), config), a_rule=a_rule)
    trace_config = dict(trace.config)
    trace_config.update({"s": params.s, "sobolev_p": params.p, "m": params.m, "N": grid.N, "side": grid.side})
    return replace(trace, config=trace_config, snap_distances=[d for _, d in snapped])


def band_limited_probe(grid: DomainGrid, seed: int, max_mode: int = 3) -> Signal:
    """
    以固定種子產生的帶限三角多項式 Σ_j a_j cos(2π j·x/L + φ_j)，|j_i| ≤ max_mode。

    係數只由種子與 max_mode 決定，與解析度無關，因此同一個探針可以在 N 與 2N 上比較。
    """
    if 2 * max_mode >= grid.N:
        raise ConfigurationError(f"max_mode={max_mode} 對解析度 N={grid.N} 而言會產生混疊")
    rng = np.random.default_rng(seed)
    modes = np.array(np.meshgrid(*([np.arange(-max_mode, max_mode + 1)] * grid.m), indexing="ij"))
    modes = modes.reshape(grid.m, -1).T
    amplitudes = rng.standard_normal(len(modes))
    phases = rng.uniform(0.0, 2.0 * np.pi, len(modes))
    angles = 2.0 * np.pi * grid.coordinates() @ modes.T / grid.side + phases
    return Signal(np.cos(angles) @ amplitudes, grid.space)


def isomorphism_constant(params: SobolevParams, grid: DomainGrid, probes: Sequence[Signal]) -> float:
    """
    量測 Bessel 位勢範數與 Plancherel 範數之間的夾擠常數 C：
    (1/C)·‖f‖_{H^s} ≤ ‖lift(f)‖_p ≤ C·‖f‖_{H^s}，在給定探針上取最壞值。
    """
    ratios = []
    for probe in probes:
        reference = plancherel_norm(probe, grid, params.s)
        if reference > 0:
            ratios.append(sobolev_norm(probe, grid, params) / reference)
    if not ratios:
        raise ConfigurationError("沒有非零的探針函數")
    constant = max(max(ratios), 1.0 / min(ratios))
    logger.info("量測的同構常數", constant=constant, s=params.s, p=params.p, N=grid.N)
    return constant


def evaluation_constant(params: SobolevParams, grid: DomainGrid) -> float:
    """量測的 c_{W_p^s} = ‖dual_signal‖_{p′}；由平移不變性，各格點相同。"""
    return lp_norm(dual_signal(np.zeros(grid.m), grid, params), params.dual_p)


def regret_exponents(p: float, m: int, s: float) -> Dict[str, float]:
    """
    比較 T 的成長階數：BLAAR 在 L_p 上為 1/2 + |1/2 − 1/p|，度量熵方法為 m/(m+s)。

    後者來自嵌入 W_p^s ⊂ B^s_{p,∞}，僅作為公式比較，方法本身不實作。
    """
    validate_exponent(p)
    return {"blaar": 0.5 + abs(0.5 - 1.0 / p), "metric_entropy": m / (m + s)}


def snap_points(points: Sequence, grid: DomainGrid) -> List[Tuple[Tuple[int, ...], float]]:
    return [grid.snap(x) for x in points]

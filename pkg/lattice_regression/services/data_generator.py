"""
依實驗設定產生可重現的半線上遊戲與驗證用的比較對象。

所有亂數都來自單一的 numpy Generator(seed)，相同種子必定產生相同的遊戲。
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from .aar import offline_ridge
from .blaar import SemiOnlineGame
from .errors import ConfigurationError
from .experiment_config import ExperimentConfig
from .lattice_core import DualVector, GameConfig, MeasureSpace, Signal, dual_exponent, dual_norm, lp_norm, pairing
from .logger import get_logger
from .sobolev_bridge import DomainGrid, SobolevParams, band_limited_probe, comparator_from_function, dual_signal

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class Comparator:
    """一個明確的比較對象 f，以對偶向量表示，因此 ‖f‖ 可以精確計算。"""
    id: str
    functional: DualVector

    def predictions(self, signals: Sequence[Signal]) -> np.ndarray:
        return np.array([pairing(self.functional, x) for x in signals])

    def loss(self, signals: Sequence[Signal], outcomes) -> float:
        return float(np.sum((np.asarray(outcomes, dtype=float) - self.predictions(signals)) ** 2))


@dataclass(frozen=True, eq=False)
class GeneratedGame:
    game: SemiOnlineGame
    comparators: List[Comparator] = field(default_factory=list)
    generating: Optional[Comparator] = None
    points: Optional[np.ndarray] = None
    grid: Optional[DomainGrid] = None
    params: Optional[SobolevParams] = None
    generating_function: Optional[Signal] = None
    labels: Optional[np.ndarray] = None


def build_space(config: ExperimentConfig) -> Union[None, MeasureSpace, DomainGrid]:
    """coordinates → None (權重為 1)，measure → MeasureSpace，grid → DomainGrid。"""
    spec = config.space
    if spec.kind == "coordinates":
        return None
    if spec.kind == "measure":
        return MeasureSpace(weights=np.asarray(spec.weights, dtype=float))
    return DomainGrid(m=spec.grid.m, side=spec.grid.side, N=spec.grid.N)


def sobolev_params(config: ExperimentConfig) -> SobolevParams:
    return SobolevParams(s=config.sobolev.s, p=config.game.p, m=config.space.grid.m)


def signal_exponent(config: ExperimentConfig) -> float:
    """
    訊號所在空間的指數：AAR 的 x_t ∈ ℓ_q^n (q 為 p 的對偶)，BLAAR 的 x_t ∈ L_p，
    Sobolev 流程中的對偶訊號 β_t ∈ L_{p′}。
    """
    if config.mode == "blaar":
        return config.game.p
    return dual_exponent(config.game.p)


def comparator_exponent(config: ExperimentConfig) -> float:
    """比較對象的指數一律是訊號空間指數的對偶。"""
    return dual_exponent(signal_exponent(config))


def clip_signal(values: np.ndarray, X: float, exponent: float, weights: Optional[np.ndarray]) -> np.ndarray:
    """把訊號縮到 ‖x‖ ≤ X；已經在範圍內的不動。"""
    norm = lp_norm(values, exponent, weights)
    if norm > X:
        return values * (X / norm)
    return values


def random_dual_vector(rng: np.random.Generator, size: int, exponent: float, space: Optional[MeasureSpace],
                       norm: float) -> DualVector:
    """方向取標準常態、對偶範數正好為 norm 的隨機對偶向量。"""
    direction = rng.standard_normal(size)
    unit = DualVector(direction, exponent, space)
    return DualVector(direction * (norm / dual_norm(unit)), exponent, space)


def ridge_comparator(signals: Sequence[Signal], outcomes, a: float, exponent: float) -> Comparator:
    """離線嶺回歸解 θ，作為 AAR 驗證時的比較對象之一。"""
    theta = offline_ridge(signals, outcomes, a)
    return Comparator("ridge", DualVector(theta, exponent, signals[0].space))


def _comparator_family(config: ExperimentConfig, rng: np.random.Generator, size: int,
                       space: Optional[MeasureSpace], generating: Optional[Comparator]) -> List[Comparator]:
    spec = config.comparators
    exponent = comparator_exponent(config)
    family = []
    for i, vector in enumerate(spec.vectors):
        if len(vector) != size:
            raise ConfigurationError(f"明確比較向量 {i} 的長度 {len(vector)} 與空間大小 {size} 不一致")
        family.append(Comparator(f"explicit-{i}", DualVector(vector, exponent, space)))
    if spec.include_zero:
        family.append(Comparator("zero", DualVector(np.zeros(size), exponent, space)))
    if spec.include_generating and generating is not None:
        family.append(generating)
    for i in range(spec.count):
        norm = spec.scale * rng.uniform(0.0, 1.0)
        family.append(Comparator(f"random-{i}", random_dual_vector(rng, size, exponent, space, norm)))
    return family


def _outcomes_from(values: np.ndarray, rng: np.random.Generator, config: ExperimentConfig) -> np.ndarray:
    noise = config.generator.noise
    return values + noise * rng.uniform(-1.0, 1.0, values.size) if noise > 0 else values.copy()


def generate_game(config: ExperimentConfig, seed: Optional[int] = None) -> GeneratedGame:
    """
    產生一場遊戲：訊號先全部宣告，結果為 [−Y, Y] 上的亂數或產生比較對象的值加有界雜訊。

    :param seed: 覆蓋設定中的種子；省略時使用 generator.seed。
    :raises ConfigurationError: 設定沒有 generator 區段。
    """
    if config.generator is None:
        raise ConfigurationError("此設定使用 input_file，沒有 generator 可用")
    seed = config.generator.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    if config.mode in ("sobolev", "perceptron"):
        return _generate_grid_game(config, rng)

    space = build_space(config)
    size = config.space.n if space is None else space.size
    weights = None if space is None else space.weights
    exponent = signal_exponent(config)
    T, Y, X = config.game.T, config.game.Y, config.generator.X

    raw = rng.standard_normal((T, size)) * rng.uniform(0.1, 1.0, (T, 1))
    signals = []
    for row in raw:
        scaled = row * (X / lp_norm(row, exponent, weights)) * rng.uniform(0.2, 1.0)
        signals.append(Signal(clip_signal(scaled, X, exponent, weights), space))

    generating = None
    if config.generator.outcomes == "comparator":
        functional = random_dual_vector(rng, size, comparator_exponent(config), space, config.comparators.scale)
        values = np.array([pairing(functional, x) for x in signals])
        limit = Y - config.generator.noise
        peak = float(np.max(np.abs(values)))
        if peak > limit:
            functional = DualVector(functional.values * (limit / peak), functional.exponent, space)
            values = values * (limit / peak)
        generating = Comparator("generating", functional)
        outcomes = _outcomes_from(values, rng, config)
    else:
        outcomes = rng.uniform(-Y, Y, T)

    game = SemiOnlineGame(signals, outcomes, GameConfig(p=config.game.p, Y=Y, T=T, a=config.game.a))
    comparators = _comparator_family(config, rng, size, space, generating)
    logger.info("遊戲產生完成", mode=config.mode, T=T, size=size, seed=seed)
    return GeneratedGame(game=game, comparators=comparators, generating=generating)


def _scaled_probe(grid: DomainGrid, rng: np.random.Generator, max_mode: int, peak: float) -> Signal:
    probe = band_limited_probe(grid, seed=int(rng.integers(0, 2 ** 31 - 1)), max_mode=max_mode)
    top = float(np.max(np.abs(probe.values)))
    return probe.scaled(peak / top) if top > 0 else probe


def _generate_grid_game(config: ExperimentConfig, rng: np.random.Generator) -> GeneratedGame:
    grid = build_space(config)
    params = sobolev_params(config)
    T, Y = config.game.T, config.game.Y
    coordinates = grid.coordinates()
    points = coordinates[rng.integers(0, grid.size, T)]
    signals = [dual_signal(x, grid, params) for x in points]

    modes = config.generator.band_modes
    function = _scaled_probe(grid, rng, modes, Y - config.generator.noise)
    generating = Comparator("generating", comparator_from_function(function, grid, params))
    values = generating.predictions(signals)
    labels = None
    if config.mode == "perceptron":
        labels = np.where(values >= 0.0, 1, -1)
        outcomes = labels.astype(float)
    elif config.generator.outcomes == "comparator":
        outcomes = _outcomes_from(values, rng, config)
    else:
        outcomes = rng.uniform(-Y, Y, T)

    game = SemiOnlineGame(signals, outcomes, GameConfig(p=params.dual_p, Y=Y, T=T, a=config.game.a))
    spec = config.comparators
    comparators = []
    if spec.include_zero:
        comparators.append(Comparator("zero", DualVector(np.zeros(grid.size), params.p, grid.space)))
    if spec.include_generating:
        comparators.append(generating)
    for i in range(spec.count):
        probe = _scaled_probe(grid, rng, modes, spec.scale * rng.uniform(0.0, 1.0) * Y)
        comparators.append(Comparator(f"random-{i}", comparator_from_function(probe, grid, params)))
    logger.info("網格遊戲產生完成", mode=config.mode, T=T, N=grid.N, m=grid.m)
    return GeneratedGame(game=game, comparators=comparators, generating=generating, points=points,
                         grid=grid, params=params, generating_function=function, labels=labels)

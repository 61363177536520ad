"""
相空间图样模块
由系数矩阵按矩形格张量基 (或小波包基) 合成图样，计算局域化/离域化指标并分类

max_level 为求和所含的最大伸缩层，每轴共 2^(max_level+1) 个模式
小波模式枚举顺序: 粗层优先，层号升序，同层平移升序
即矩形模式分解拼接顺序 [coarse, d_c, ..., d_{J-1}] 的前 2^(max_level+1) 项
"""
import math
import logging
from enum import Enum
from pathlib import Path
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import PatternConfig, get_config
from .errors import BadParams, BadSpec, ShapeMismatch, ZeroField
from .tensor2d import Decomposition2D, Grid2D, RECTANGLE, dwt2, idwt2
from .utils import log2_exact
from .wavelet_core import PacketNode, WaveletFilter, packet_basis, uniform_tiling
from .wigner_dyn import (
    LindbladParams, PhaseSpaceDerivative, PolynomialPotential, WignerState, evolve,
)

logger = logging.getLogger(__name__)


class MatrixKind(str, Enum):
    """系数矩阵生成器"""
    ONES = "ones"
    BAND_DIAGONAL = "band_diagonal"
    BAND_TRIANGULAR = "band_triangular"
    RANDOM = "random"
    EXPLICIT = "explicit"


class PatternClass(str, Enum):
    WAVELETON = "waveleton"
    CHAOTIC_LIKE = "chaotic_like"
    INTERMEDIATE = "intermediate"


@dataclass
class MatrixSpec:
    kind: MatrixKind = MatrixKind.ONES
    width: int = 1
    band_value: float = 5.0
    off_value: float = 1.0
    seed: int = 0
    values: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def parse(cls, text: str) -> "MatrixSpec":
        """
        解析命令行写法

        ones | band:w,bv,ov | tri:w,bv,ov | random:seed | file.csv
        """
        text = text.strip()
        if text == "ones":
            return cls(MatrixKind.ONES)
        head, _, tail = text.partition(":")
        try:
            if head in ("band", "tri"):
                w, bv, ov = tail.split(",")
                kind = MatrixKind.BAND_DIAGONAL if head == "band" else MatrixKind.BAND_TRIANGULAR
                return cls(kind, width=int(w), band_value=float(bv), off_value=float(ov))
            if head == "random":
                return cls(MatrixKind.RANDOM, seed=int(tail or 0))
        except ValueError as e:
            raise BadSpec(f"无法解析矩阵规格 {text}: {e}") from e
        path = Path(text)
        if path.suffix.lower() == ".csv":
            if not path.exists():
                raise BadSpec(f"矩阵文件不存在: {path}")
            return cls(MatrixKind.EXPLICIT, values=np.loadtxt(path, delimiter=",", ndmin=2))
        raise BadSpec(f"无法解析矩阵规格: {text}")

    def describe(self) -> Dict[str, Any]:
        info = {"kind": self.kind.value}
        if self.kind in (MatrixKind.BAND_DIAGONAL, MatrixKind.BAND_TRIANGULAR):
            info.update(width=self.width, band_value=self.band_value, off_value=self.off_value)
        elif self.kind == MatrixKind.RANDOM:
            info["seed"] = self.seed
        return info


@dataclass
class CoefficientMatrix:
    values: np.ndarray
    spec: MatrixSpec

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass
class PatternMetrics:
    """局域化指标 (separability_defect 为辅助指标，不参与分类)"""
    concentration_50: float
    participation_ratio: float
    coeff_entropy: float
    max_cell_share: float
    separability_defect: float = 0.0

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def generate_matrix(spec: MatrixSpec, n: int) -> CoefficientMatrix:
    """
    生成系数矩阵

    Raises:
        BadSpec: N < 2，带宽不满足 1 ≤ width < N，或显式矩阵非法
    """
    if n < 2:
        raise BadSpec(f"矩阵尺寸必须 ≥ 2，收到 {n}")
    kind = MatrixKind(spec.kind)
    i, j = np.indices((n, n))

    if kind == MatrixKind.ONES:
        values = np.ones((n, n))
    elif kind in (MatrixKind.BAND_DIAGONAL, MatrixKind.BAND_TRIANGULAR):
        if not 1 <= spec.width < n:
            raise BadSpec(f"带宽需满足 1 ≤ width < N，收到 width={spec.width}, N={n}")
        if kind == MatrixKind.BAND_DIAGONAL:
            band = np.abs(i - j) < spec.width
        else:
            band = (i - j >= 0) & (i - j < spec.width)
        values = np.where(band, spec.band_value, spec.off_value).astype(float)
    elif kind == MatrixKind.RANDOM:
        values = np.random.default_rng(spec.seed).random((n, n))
    else:
        if spec.values is None:
            raise BadSpec("explicit 矩阵缺少数值")
        values = np.asarray(spec.values, dtype=float)
        if values.shape != (n, n):
            raise BadSpec(f"显式矩阵形状 {values.shape} 与 N={n} 不符")

    if not np.all(np.isfinite(values)):
        raise BadSpec("系数矩阵含非有限值")
    return CoefficientMatrix(values=values, spec=spec)


# ==================== 合成 ====================

class BasisKind(str, Enum):
    WAVELET = "wavelet"
    PACKET = "packet"


DEFAULT_PACKET_DEPTH = 3


def mode_count(max_level: int) -> int:
    """含到伸缩层 max_level 的每轴模式数，即 dim V_{max_level+1}"""
    return 2 ** (max_level + 1)


def _grid_template(grid: Union[Grid2D, Tuple[int, int], int]) -> Grid2D:
    if isinstance(grid, Grid2D):
        return grid
    if isinstance(grid, int):
        grid = (grid, grid)
    return Grid2D.zeros(*grid)


def flat_mode_levels(n: int, levels: int) -> np.ndarray:
    """拼接顺序中每个模式的层号，粗层记为 c-1"""
    J = log2_exact(n)
    c = J - levels
    labels = np.full(n, c - 1)
    for j in range(c, J):
        labels[2 ** j:2 ** (j + 1)] = j
    return labels


@dataclass
class SynthesisBasis:
    """
    图样合成所用的张量模式集合

    wavelet: 粗层 c 加细节层 c..max_level，按 [coarse, d_c, ..., d_max_level] 枚举
    packet:  同一空间 V_{max_level+1} 上的小波包铺砌，按频带起点枚举
    """
    wavelet: WaveletFilter
    max_level: int
    kind: BasisKind = BasisKind.WAVELET
    nodes: Optional[Sequence[PacketNode]] = None
    coarse_level: int = 0
    _packet: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.kind = BasisKind(self.kind)
        if not 0 <= self.coarse_level <= self.max_level:
            raise BadParams(f"层号需满足 0 ≤ c ≤ max_level: c={self.coarse_level}, max_level={self.max_level}")
        if self.kind == BasisKind.PACKET and self.nodes is None:
            self.nodes = uniform_tiling(min(DEFAULT_PACKET_DEPTH, self.max_level + 1))

    @property
    def count(self) -> int:
        return mode_count(self.max_level)

    def packet_matrix(self) -> np.ndarray:
        if self._packet is None:
            self._packet = packet_basis(self.count, self.wavelet, self.nodes)
        return self._packet

    def _depths(self, shape: Tuple[int, int]) -> Tuple[int, int]:
        """两轴的 idwt2 深度: wavelet 深达粗层 c，packet 停在 V_{max_level+1}"""
        base = self.coarse_level if self.kind == BasisKind.WAVELET else self.max_level + 1
        depths = []
        for n in shape:
            if self.count > n:
                raise ShapeMismatch(f"{n} 点网格容纳不下 {self.count} 个模式 (max_level={self.max_level})")
            depths.append(log2_exact(n) - base)
        return depths[0], depths[1]

    def to_grid(self, values: np.ndarray, template: Grid2D) -> Grid2D:
        shape = template.values.shape
        lq, lp = self._depths(shape)
        if values.shape != (self.count, self.count):
            raise ShapeMismatch(
                f"系数矩阵 {values.shape} 与 max_level={self.max_level} 的模式数 "
                f"{self.count}×{self.count} 不符")
        block = values
        if self.kind == BasisKind.PACKET:
            P = self.packet_matrix()
            block = P @ values @ P.T
        matrix = np.zeros(shape)
        matrix[:self.count, :self.count] = block
        decomp = Decomposition2D(mode=RECTANGLE, levels_q=lq, levels_p=lp, shape=shape,
                                 extents=template.extents, matrix=matrix)
        return idwt2(decomp, self.wavelet)

    def coefficients(self, grid: Grid2D) -> np.ndarray:
        """to_grid 的伴随: 网格在所含模式上的系数"""
        lq, lp = self._depths(grid.values.shape)
        block = dwt2(grid, self.wavelet, (lq, lp), RECTANGLE).matrix[:self.count, :self.count]
        if self.kind == BasisKind.PACKET:
            P = self.packet_matrix()
            block = P.T @ block @ P
        return block


def _matrix_values(matrix: Union[CoefficientMatrix, np.ndarray]) -> np.ndarray:
    return matrix.values if isinstance(matrix, CoefficientMatrix) else np.asarray(matrix, dtype=float)


def synthesize(matrix: Union[CoefficientMatrix, np.ndarray], filt: WaveletFilter,
               max_level: int, grid: Union[Grid2D, Tuple[int, int], int],
               basis: Union[str, BasisKind] = BasisKind.WAVELET, nodes=None,
               coarse_level: int = 0) -> Grid2D:
    """
    W = Σ a_ij U^i ⊗ V^j，求和到伸缩层 max_level

    矩阵须为 mode_count(max_level) 阶方阵，对应 V_{max_level+1} 的全部模式

    Raises:
        ShapeMismatch: 矩阵阶数与模式数不符，或网格容纳不下
    """
    return SynthesisBasis(filt, max_level, basis, nodes, coarse_level).to_grid(
        _matrix_values(matrix), _grid_template(grid))


def partial_syntheses(matrix: Union[CoefficientMatrix, np.ndarray], filt: WaveletFilter,
                      max_level: int, grid, coarse_level: int = 0) -> List[Tuple[int, Grid2D]]:
    """
    逐尺度部分和: 慢部分 (粗层) 依次加上各层快振荡部分

    返回 [(j, 含层号 ≤ j 的所有模式之和), ...]，最后一项等于 synthesize
    """
    values = _matrix_values(matrix)
    basis = SynthesisBasis(filt, max_level, coarse_level=coarse_level)
    template = _grid_template(grid)
    labels = flat_mode_levels(basis.count, max_level + 1 - coarse_level)
    out = []
    for j in range(coarse_level - 1, max_level + 1):
        mask = (labels[:, None] <= j) & (labels[None, :] <= j)
        out.append((j, basis.to_grid(np.where(mask, values, 0.0), template)))
    return out


# ==================== 指标 ====================

def _entropy_and_participation(coeffs: np.ndarray) -> Tuple[float, float]:
    energy = coeffs ** 2
    total = energy.sum()
    if total == 0:
        raise ZeroField("所含模式上的能量为零")
    count = energy.size
    participation = float(total ** 2 / np.sum(energy ** 2) / count)
    p = energy[energy > 0] / total
    entropy = float(-(p * np.log(p)).sum() / math.log(count))
    return entropy, participation


def compute_metrics(grid: Grid2D, filt: Optional[WaveletFilter] = None,
                    levels: Optional[int] = None,
                    basis: Union[str, BasisKind] = BasisKind.WAVELET, nodes=None) -> PatternMetrics:
    """
    concentration_50 与 max_cell_share 在网格单元上计算

    参与比与熵在合成系数上计算: 给定滤波器时取网格在 V_{levels+1} 全部模式上的系数
    (与 synthesize 同一基)，否则取像素基

    Raises:
        ZeroField: 全零网格
    """
    values = grid.values
    cell_energy = np.sort((values ** 2).ravel())[::-1]
    total = cell_energy.sum()
    if total == 0:
        raise ZeroField("全零场无法计算局域化指标")

    cumulative = np.cumsum(cell_energy)
    cells_half = int(np.searchsorted(cumulative, 0.5 * total * (1 - 1e-12)) + 1)
    concentration = min(1.0, cells_half / cell_energy.size)

    if filt is not None:
        max_level = levels if levels is not None else get_config().wavelet.levels
        coeffs = SynthesisBasis(filt, max_level, basis, nodes).coefficients(grid)
    else:
        coeffs = values
    entropy, participation = _entropy_and_participation(coeffs)

    singular = np.linalg.svd(values, compute_uv=False)
    defect = float(max(0.0, 1.0 - singular[0] ** 2 / np.sum(singular ** 2)))

    return PatternMetrics(
        concentration_50=concentration,
        participation_ratio=participation,
        coeff_entropy=entropy,
        max_cell_share=float(cell_energy[0] / total),
        separability_defect=defect,
    )


def classify(metrics: PatternMetrics, thresholds: Optional[PatternConfig] = None) -> PatternClass:
    """
    waveleton:    concentration_50 ≤ c_lo 且 entropy ≤ e_lo
    chaotic_like: entropy ≥ e_hi
    其余为 intermediate
    """
    t = thresholds or get_config().patterns
    if metrics.concentration_50 <= t.c_lo and metrics.coeff_entropy <= t.e_lo:
        return PatternClass.WAVELETON
    if metrics.coeff_entropy >= t.e_hi:
        return PatternClass.CHAOTIC_LIKE
    return PatternClass.INTERMEDIATE


# ==================== 时间持续性 ====================

@dataclass
class EvolutionSpec:
    """waveleton_persistence 使用的动力学设置"""
    potential: PolynomialPotential
    dt: float
    lindblad: Optional[LindbladParams] = None
    hbar: float = 1.0
    mass: float = 1.0
    method: str = "rk4"
    sample_every: int = 10
    derivative: Optional[PhaseSpaceDerivative] = None


@dataclass
class PersistenceReport:
    times: List[float]
    metrics: List[PatternMetrics]
    localized_throughout: bool

    @property
    def concentration(self) -> np.ndarray:
        return np.array([m.concentration_50 for m in self.metrics])


def waveleton_persistence(initial: Grid2D, equation: EvolutionSpec, horizon: float,
                          filt: Optional[WaveletFilter] = None, levels: Optional[int] = None,
                          thresholds: Optional[PatternConfig] = None) -> PersistenceReport:
    """
    沿时间演化采样图样指标，并报告 concentration_50 是否始终低于 c_lo

    演化前把初态归一化到单位质量
    """
    t = thresholds or get_config().patterns
    values = initial.values
    mass = values.sum() * initial.dq * initial.dp
    if mass != 0:
        values = values / mass
    state = WignerState(grid=initial.with_values(values), hbar=equation.hbar, mass=equation.mass)

    steps = int(round(horizon / equation.dt)) if horizon > 0 else 0
    trajectory = evolve(state, equation.potential, equation.lindblad, equation.dt, steps,
                        equation.method, derivative=equation.derivative,
                        record_every=equation.sample_every)
    metrics = [compute_metrics(s.grid, filt, levels) for s in trajectory.states]
    localized = all(m.concentration_50 <= t.c_lo for m in metrics)
    logger.info(f"📊 持续性: {len(metrics)} 个采样, 始终局域={localized}")
    return PersistenceReport(
        times=[s.time for s in trajectory.states],
        metrics=metrics,
        localized_throughout=localized,
    )

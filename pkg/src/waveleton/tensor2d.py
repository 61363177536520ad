"""
二维张量积小波模块
相空间网格上的正方形 (各向同性) 与矩形格 (各向异性) 分解

行 = q 下标，列 = p 下标，行优先存储
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import BadShape, BadLength, IndexOutOfRange, ShapeMismatch
from .utils import is_power_of_two, log2_exact
from .wavelet_core import (
    WaveletFilter, analysis_step, synthesis_step, wavedec_flat, waverec_flat,
)

logger = logging.getLogger(__name__)

SQUARE = "square"
RECTANGLE = "rectangle"

# 正方形模式的三族细节: (q 方向, p 方向)
DETAIL_FAMILIES = ("phi_psi", "psi_phi", "psi_psi")
FAMILY_ALIASES = {
    "φφ": "phi_phi", "φΨ": "phi_psi", "Ψφ": "psi_phi", "ΨΨ": "psi_psi",
    "phi_phi": "phi_phi", "phi_psi": "phi_psi", "psi_phi": "psi_phi", "psi_psi": "psi_psi",
}


@dataclass
class Grid2D:
    """相空间网格，格点 q_i = q_min + iΔq，左闭右开"""
    values: np.ndarray
    q_min: float = 0.0
    q_max: float = 1.0
    p_min: float = 0.0
    p_max: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise BadShape(f"网格必须是二维数组，收到 {self.values.shape}")
        nq, n_p = self.values.shape
        if not (is_power_of_two(nq) and is_power_of_two(n_p)):
            raise BadShape(f"网格尺寸 {self.values.shape} 不是 2 的幂")
        extents = (self.q_min, self.q_max, self.p_min, self.p_max)
        if not all(np.isfinite(extents)) or self.q_max <= self.q_min or self.p_max <= self.p_min:
            raise BadShape(f"非法相空间范围: {extents}")

    @property
    def extents(self) -> Tuple[float, float, float, float]:
        return self.q_min, self.q_max, self.p_min, self.p_max

    @property
    def dq(self) -> float:
        return (self.q_max - self.q_min) / self.values.shape[0]

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / self.values.shape[1]

    @property
    def q(self) -> np.ndarray:
        return self.q_min + self.dq * np.arange(self.values.shape[0])

    @property
    def p(self) -> np.ndarray:
        return self.p_min + self.dp * np.arange(self.values.shape[1])

    def with_values(self, values: np.ndarray) -> "Grid2D":
        return replace(self, values=values)

    @classmethod
    def zeros(cls, nq: int, n_p: int, extents=(0.0, 1.0, 0.0, 1.0)) -> "Grid2D":
        return cls(np.zeros((nq, n_p)), *extents)

    @property
    def nq(self) -> int:
        return self.values.shape[0]

    @property
    def np(self) -> int:
        return self.values.shape[1]


@dataclass
class Decomposition2D:
    """
    二维分解

    square:    coarse 为 φφ 系数，details[i] 为第 i 粗的层的三族系数
    rectangle: matrix = W_q X W_pᵀ，两轴按 [coarse, d_c, ..., d_{J-1}] 排列
    """
    mode: str
    levels_q: int
    levels_p: int
    shape: Tuple[int, int]
    extents: Tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
    coarse: Optional[np.ndarray] = field(default=None, repr=False)
    details: List[Dict[str, np.ndarray]] = field(default_factory=list, repr=False)
    matrix: Optional[np.ndarray] = field(default=None, repr=False)

    def energy(self) -> float:
        if self.mode == RECTANGLE:
            return float(np.sum(self.matrix ** 2))
        total = float(np.sum(self.coarse ** 2))
        for level in self.details:
            total += sum(float(np.sum(c ** 2)) for c in level.values())
        return total


def _analysis_axis(x: np.ndarray, filt: WaveletFilter, axis: int):
    moved = np.moveaxis(x, axis, -1)
    a, d = analysis_step(moved, filt)
    return np.moveaxis(a, -1, axis), np.moveaxis(d, -1, axis)


def _synthesis_axis(a: np.ndarray, d: np.ndarray, filt: WaveletFilter, axis: int):
    out = synthesis_step(np.moveaxis(a, axis, -1), np.moveaxis(d, axis, -1), filt)
    return np.moveaxis(out, -1, axis)


def _normalize_levels(levels: Union[int, Sequence[int]]) -> Tuple[int, int]:
    if isinstance(levels, (int, np.integer)):
        return int(levels), int(levels)
    lq, lp = levels
    return int(lq), int(lp)


def _check_levels(shape: Tuple[int, int], filt: WaveletFilter, lq: int, lp: int):
    for n, lv, axis in ((shape[0], lq, "q"), (shape[1], lp, "p")):
        try:
            J = log2_exact(n)
        except BadLength as e:
            raise BadShape(str(e)) from e
        if n < filt.length or not 0 <= lv <= J:
            raise BadShape(f"{axis} 轴长度 {n} 不支持 {lv} 层 {filt.name} 分解")


def dwt2(grid: Grid2D, filt: WaveletFilter, levels: Union[int, Sequence[int]],
         mode: str = RECTANGLE) -> Decomposition2D:
    """
    二维周期分解

    Raises:
        BadShape: 尺寸非 2 的幂或层数不合法
    """
    lq, lp = _normalize_levels(levels)
    values = grid.values
    _check_levels(values.shape, filt, lq, lp)

    if mode == RECTANGLE:
        along_p = wavedec_flat(values, filt, lp)
        matrix = wavedec_flat(along_p.T, filt, lq).T
        return Decomposition2D(mode=mode, levels_q=lq, levels_p=lp, shape=values.shape,
                               extents=grid.extents, matrix=matrix)

    if mode != SQUARE:
        raise BadShape(f"未知分解模式: {mode}")
    if lq != lp:
        raise BadShape("正方形模式两轴层数必须相同")

    ll = values
    details = []
    for _ in range(lq):
        lo_q, hi_q = _analysis_axis(ll, filt, axis=0)
        ll_next, lo_hi = _analysis_axis(lo_q, filt, axis=1)
        hi_lo, hi_hi = _analysis_axis(hi_q, filt, axis=1)
        details.append({"phi_psi": lo_hi, "psi_phi": hi_lo, "psi_psi": hi_hi})
        ll = ll_next
    details.reverse()
    return Decomposition2D(mode=mode, levels_q=lq, levels_p=lp, shape=values.shape,
                           extents=grid.extents, coarse=ll, details=details)


def idwt2(decomp: Decomposition2D, filt: WaveletFilter) -> Grid2D:
    """dwt2 的逆"""
    if decomp.mode == RECTANGLE:
        if decomp.matrix is None or decomp.matrix.shape != tuple(decomp.shape):
            raise ShapeMismatch("矩形模式系数矩阵形状不符")
        along_q = waverec_flat(decomp.matrix.T, filt, decomp.levels_q).T
        values = waverec_flat(along_q, filt, decomp.levels_p)
        return Grid2D(values, *decomp.extents)

    ll = decomp.coarse
    for level in decomp.details:
        if any(level[name].shape != ll.shape for name in DETAIL_FAMILIES):
            raise ShapeMismatch("正方形模式细节块形状不符")
        lo_q = _synthesis_axis(ll, level["phi_psi"], filt, axis=1)
        hi_q = _synthesis_axis(level["psi_phi"], level["psi_psi"], filt, axis=1)
        ll = _synthesis_axis(lo_q, hi_q, filt, axis=0)
    return Grid2D(ll, *decomp.extents)


def basis_vector_1d(n: int, filt: WaveletFilter, kind: str, level: int, shift: int) -> np.ndarray:
    """
    一维基函数 φ_{j,k} 或 Ψ_{j,k} 在 n 点网格上的采样 (离散单位范数)

    Raises:
        IndexOutOfRange: 层号或平移越界
    """
    J = log2_exact(n)
    max_level = J if kind == "phi" else J - 1
    if not 0 <= level <= max_level:
        raise IndexOutOfRange(f"{kind} 层号 {level} 不在 0..{max_level}")
    if not 0 <= shift < 2 ** level:
        raise IndexOutOfRange(f"平移 {shift} 不在 0..{2 ** level - 1}")
    coeffs = np.zeros(n)
    offset = 0 if kind == "phi" else 2 ** level
    coeffs[offset + shift] = 1.0
    return waverec_flat(coeffs, filt, J - level)


def basis_function_2d(filt: WaveletFilter, family: str, level_q: int, level_p: int,
                      shift_q: int, shift_p: int,
                      grid: Union[Grid2D, Tuple[int, int]]) -> Grid2D:
    """张量基函数 (φφ / φΨ / Ψφ / ΨΨ) 的采样"""
    key = FAMILY_ALIASES.get(family)
    if key is None:
        raise IndexOutOfRange(f"未知基函数族: {family}")
    if isinstance(grid, Grid2D):
        (nq, n_p), extents = grid.values.shape, grid.extents
    else:
        (nq, n_p), extents = grid, (0.0, 1.0, 0.0, 1.0)
    kind_q, kind_p = key.split("_")
    u = basis_vector_1d(nq, filt, kind_q, level_q, shift_q)
    v = basis_vector_1d(n_p, filt, kind_p, level_p, shift_p)
    return Grid2D(np.outer(u, v), *extents)


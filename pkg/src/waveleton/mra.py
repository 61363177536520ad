"""
多分辨率分析模块
逐尺度投影重构、多层范数、截断层选择，以及演示信号 (kick / multikick / RW 分形)
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import stats

from .errors import BadParams, LevelOutOfRange, ShapeMismatch
from .utils import log2_exact
from .wavelet_core import MraDecomposition, WaveletFilter, idwt_periodic

logger = logging.getLogger(__name__)

COARSE = "coarse"
DEMO_KINDS = ("kick", "multikick", "rw_fractal")

# 演示信号默认参数
DEFAULT_KICK_WIDTH = 4.0
DEFAULT_RW = {"a": 0.5, "b": 3, "terms": 20}
DEFAULT_KICKS = [(0.25, 1.0), (0.5, -0.5), (0.75, 0.8)]


@dataclass
class MultiNorm:
    """逐层能量 (粗层在前) 与总能量"""
    per_level_energy: np.ndarray
    total: float


@dataclass
class Cutoff:
    """截断层选择结果，converged=False 表示最细层仍超出 ε"""
    level: int
    converged: bool


def _resolve_filter(decomp: MraDecomposition, filt: Optional[WaveletFilter]) -> WaveletFilter:
    filt = filt or decomp.wavelet
    if filt is None:
        raise ShapeMismatch("分解未记录滤波器，需显式传入")
    return filt


def reconstruct_level(decomp: MraDecomposition, j: Union[int, str],
                      filt: Optional[WaveletFilter] = None) -> np.ndarray:
    """
    单个尺度的投影: j = "coarse" 给出 P_c f，整数 j 给出 Q_j f

    Raises:
        LevelOutOfRange: j 不在 c..J-1
    """
    filt = _resolve_filter(decomp, filt)
    coarse = np.zeros_like(decomp.coarse)
    details = [np.zeros_like(d) for d in decomp.details]
    if j == COARSE:
        coarse = decomp.coarse
    else:
        if not isinstance(j, (int, np.integer)):
            raise LevelOutOfRange(f"非法层号: {j!r}")
        offset = int(j) - decomp.coarse_level
        if not 0 <= offset < decomp.levels:
            raise LevelOutOfRange(
                f"层号 {j} 不在 {decomp.coarse_level}..{decomp.finest_level - 1}")
        details[offset] = decomp.details[offset]
    projected = MraDecomposition(
        coarse_level=decomp.coarse_level,
        coarse=coarse,
        details=details,
        original_length=decomp.original_length,
    )
    return idwt_periodic(projected, filt)


def level_reconstructions(decomp: MraDecomposition,
                          filt: Optional[WaveletFilter] = None) -> List[Tuple[str, np.ndarray]]:
    """所有尺度投影，顺序 coarse, D_c, ..., D_{J-1}"""
    out = [(COARSE, reconstruct_level(decomp, COARSE, filt))]
    for j in range(decomp.coarse_level, decomp.finest_level):
        out.append((f"D{j}", reconstruct_level(decomp, j, filt)))
    return out


def multi_norm(decomp: MraDecomposition) -> MultiNorm:
    """逐层能量 (离散 L² 范数平方)"""
    energies = [float(decomp.coarse @ decomp.coarse)]
    energies.extend(float(d @ d) for d in decomp.details)
    per_level = np.array(energies)
    return MultiNorm(per_level_energy=per_level, total=float(per_level.sum()))


def cutoff_level(decomp: MraDecomposition, eps: float) -> Cutoff:
    """
    最小的 N，使所有更细层 i > N 满足 ‖W^{i+1} - W^i‖ = ‖d_i‖ ≤ ε

    最细层 J-1 本身超出 ε 时返回 J-1 并标记未收敛
    """
    if eps <= 0:
        raise BadParams(f"ε 必须为正，收到 {eps}")
    norms = [float(np.linalg.norm(d)) for d in decomp.details]
    level = decomp.coarse_level
    for offset in range(len(norms) - 1, -1, -1):
        if norms[offset] > eps:
            level = decomp.coarse_level + offset
            break
    converged = not norms or norms[-1] <= eps
    if not converged:
        logger.warning(f"⚠️ 最细层 {decomp.finest_level - 1} 细节范数 {norms[-1]:.3e} 仍大于 ε={eps:.1e}")
    return Cutoff(level=level, converged=converged)


def level_energy_slope(decomp: MraDecomposition, skip_coarsest: int = 0) -> Tuple[float, float]:
    """log2(细节能量) 对层号的线性拟合，返回 (斜率, R²)"""
    levels = np.arange(decomp.coarse_level, decomp.finest_level)[skip_coarsest:]
    energies = np.array([float(d @ d) for d in decomp.details])[skip_coarsest:]
    fit = stats.linregress(levels, np.log2(np.maximum(energies, np.finfo(float).tiny)))
    return float(fit.slope), float(fit.rvalue ** 2)


# ==================== 演示信号 ====================

def _kick(t: np.ndarray, center: float, width_cells: float, n: int) -> np.ndarray:
    if not 0.0 <= center < 1.0:
        raise BadParams(f"kick 中心必须在 [0,1)，收到 {center}")
    if width_cells <= 0:
        raise BadParams(f"kick 宽度必须为正，收到 {width_cells}")
    dist = (t - center + 0.5) % 1.0 - 0.5
    return np.exp(-0.5 * (dist * n / width_cells) ** 2)


def demo_signal(kind: str, params: Optional[Dict[str, Any]], length: int) -> np.ndarray:
    """
    演示信号，t_m = m / length ∈ [0, 1)

    kick:        {center, width (格点数), amplitude}
    multikick:   {kicks: [(center, amplitude), ...], width}
    rw_fractal:  {a, b, terms}，f(t) = Σ a^n cos(b^n π t)

    Raises:
        BadParams: 参数越界
    """
    params = dict(params or {})
    log2_exact(length)
    t = np.arange(length) / length

    if kind == "kick":
        width = params.get("width", DEFAULT_KICK_WIDTH)
        return params.get("amplitude", 1.0) * _kick(t, params.get("center", 0.5), width, length)

    if kind == "multikick":
        width = params.get("width", DEFAULT_KICK_WIDTH)
        out = np.zeros(length)
        for center, amplitude in params.get("kicks", DEFAULT_KICKS):
            out += amplitude * _kick(t, center, width, length)
        return out

    if kind == "rw_fractal":
        a = params.get("a", DEFAULT_RW["a"])
        b = params.get("b", DEFAULT_RW["b"])
        terms = params.get("terms", DEFAULT_RW["terms"])
        if not 0 < a < 1:
            raise BadParams(f"RW 分形要求 0 < a < 1，收到 {a}")
        if int(b) != b or b < 2:
            raise BadParams(f"RW 分形要求整数 b ≥ 2，收到 {b}")
        if a * b <= 1:
            raise BadParams(f"RW 分形要求 a·b > 1，收到 {a * b}")
        if int(terms) != terms or terms < 1:
            raise BadParams(f"RW 分形要求 terms ≥ 1，收到 {terms}")
        out = np.zeros(length)
        for n in range(int(terms)):
            out += a ** n * np.cos(float(b) ** n * np.pi * t)
        return out

    raise BadParams(f"未知演示信号: {kind}，可选 {DEMO_KINDS}")

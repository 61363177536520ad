"""
算子模块
连接系数微分模板、非标准形式 (A_j, B_j, Γ_j) 的构造、作用与阈值稀疏化

约定:
    ρ_ℓ = ∫ φ^{(n)}(y) φ(y-ℓ) dy，|ℓ| ≤ L-2
    (D s)_m = Δ^{-n} Σ_ℓ ρ_ℓ s_{m-ℓ}，归一化 Σ_ℓ ℓ^n ρ_ℓ = (-1)^n n!
    非标准形式层号 ℓ = 1..levels 由细到粗
"""
import math
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.ndimage import correlate1d

from .errors import InsufficientRegularity, SingularSystem, ShapeMismatch, BadParams
from .utils import log2_exact
from .wavelet_core import WaveletFilter, analysis_step, synthesis_step

logger = logging.getLogger(__name__)

NULL_SPACE_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class ConnectionCoefficients:
    """n 阶导数的连接系数，values[i] 对应 ℓ = shifts[i]"""
    order: int
    wavelet: WaveletFilter = field(repr=False)
    shifts: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    refinement_residual: float = 0.0

    @property
    def r(self) -> Dict[int, float]:
        return {int(l): float(v) for l, v in zip(self.shifts, self.values)}

    @property
    def half_width(self) -> int:
        return int(self.shifts[-1])

    def stencil_weights(self) -> np.ndarray:
        """correlate1d 使用的权重，w[j] = ρ_{K-j}"""
        return self.values[::-1].copy()


def required_order(n: int) -> int:
    """n 阶导数所需最小消失矩 M"""
    return math.ceil((n + 1) / 2) + 1


def autocorrelation(h: np.ndarray) -> np.ndarray:
    """a_m = Σ_k h_k h_{k+m}，m = -(L-1)..(L-1)"""
    return np.correlate(h, h, mode="full")


def _connection_cache_key(filt: WaveletFilter, n: int) -> Tuple[str, int]:
    return filt.name, n


_CACHE: Dict[Tuple[str, int], ConnectionCoefficients] = {}


def connection_coeffs(filt: WaveletFilter, n: int) -> ConnectionCoefficients:
    """
    求解两尺度线性方程组 ρ = 2^n A ρ，A_{ℓ,i} = a_{i-2ℓ}

    Raises:
        InsufficientRegularity: M < ⌈(n+1)/2⌉ + 1
        SingularSystem: 零空间维数不为 1
    """
    if n < 1:
        raise BadParams(f"导数阶数必须 ≥ 1，收到 {n}")
    if filt.order < required_order(n):
        raise InsufficientRegularity(
            f"{filt.name} (M={filt.order}) 不足以计算 {n} 阶连接系数，需要 M ≥ {required_order(n)}")

    key = _connection_cache_key(filt, n)
    if key in _CACHE:
        return _CACHE[key]

    L = filt.length
    K = L - 2
    shifts = np.arange(-K, K + 1)
    a = autocorrelation(filt.h)          # a[m + L - 1] = a_m
    size = len(shifts)

    system = np.zeros((size, size))
    for row, ell in enumerate(shifts):
        for col, i in enumerate(shifts):
            m = i - 2 * ell
            if abs(m) <= L - 1:
                system[row, col] = a[m + L - 1]
    homogeneous = (2.0 ** n) * system - np.eye(size)

    singular = np.linalg.svd(homogeneous, compute_uv=False)
    null_dim = int(np.sum(singular <= NULL_SPACE_RTOL * singular[0]))
    if null_dim != 1:
        raise SingularSystem(f"{filt.name} n={n} 的两尺度方程组零空间维数为 {null_dim}")

    moment_row = shifts.astype(float) ** n
    stacked = np.vstack([homogeneous, moment_row])
    rhs = np.zeros(size + 1)
    rhs[-1] = (-1) ** n * math.factorial(n)
    values, *_ = np.linalg.lstsq(stacked, rhs, rcond=None)

    # 奇偶对称 ρ_{-ℓ} = (-1)^n ρ_ℓ
    values = 0.5 * (values + (-1) ** n * values[::-1])
    residual = float(np.max(np.abs(homogeneous @ values)))
    values.setflags(write=False)

    cc = ConnectionCoefficients(
        order=n, wavelet=filt, shifts=shifts, values=values,
        refinement_residual=residual,
    )
    _CACHE[key] = cc
    logger.debug(f"连接系数 {filt.name} n={n}: 残差 {residual:.2e}")
    return cc


def apply_stencil(values: np.ndarray, cc: ConnectionCoefficients,
                  spacing: float = 1.0, axis: int = -1) -> np.ndarray:
    """沿指定轴的周期导数模板"""
    out = correlate1d(values, cc.stencil_weights(), axis=axis, mode="wrap")
    return out / spacing ** cc.order


def differentiation_matrix(cc: ConnectionCoefficients, size: int,
                           spacing: float = 1.0) -> sparse.csr_matrix:
    """周期环形导数矩阵 C[m, (m-ℓ) mod N] = ρ_ℓ Δ^{-n}"""
    rows = np.repeat(np.arange(size), len(cc.shifts))
    cols = (rows - np.tile(cc.shifts, size)) % size
    data = np.tile(cc.values, size) / spacing ** cc.order
    # 重复下标求和即为周期折叠
    return sparse.coo_matrix((data, (rows, cols)), shape=(size, size)).tocsr()


def convergence_order(filt: WaveletFilter, n: int,
                      sizes=(64, 128, 256, 512, 1024)) -> Tuple[float, List[float]]:
    """在 sin(2πx) 上测网格加密收敛阶，返回 (log-log 斜率, 各网格相对误差)"""
    cc = connection_coeffs(filt, n)
    errors = []
    for size in sizes:
        x = np.arange(size) / size
        f = np.sin(2 * np.pi * x)
        exact = (2 * np.pi) ** n * np.sin(2 * np.pi * x + n * np.pi / 2)
        approx = apply_stencil(f, cc, spacing=1.0 / size)
        errors.append(float(np.linalg.norm(approx - exact) / np.linalg.norm(exact)))
    slope = -np.polyfit(np.log(sizes), np.log(errors), 1)[0]
    return float(slope), errors


# ==================== 非标准形式 ====================

@dataclass
class OperatorSpec:
    """
    待压缩的算子

    kind: derivative | kernel | identity | zero
    kernel 可以是 N×N 采样矩阵 K(x_m, x_k)，也可以是可调用对象 K(x, y)
    """
    kind: str = "derivative"
    order: int = 1
    kernel: Optional[Union[np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]] = None
    derivative_filter: Optional[WaveletFilter] = None

    @classmethod
    def derivative(cls, order: int, derivative_filter: WaveletFilter = None) -> "OperatorSpec":
        return cls(kind="derivative", order=order, derivative_filter=derivative_filter)

    @classmethod
    def from_kernel(cls, kernel) -> "OperatorSpec":
        return cls(kind="kernel", kernel=kernel)


@dataclass
class NsfLevel:
    """单层块: A (细节→细节), B (粗→细节), Γ (细节→粗)"""
    level: int
    A: sparse.csr_matrix
    B: sparse.csr_matrix
    Gamma: sparse.csr_matrix

    def blocks(self) -> Dict[str, sparse.csr_matrix]:
        return {"A": self.A, "B": self.B, "Gamma": self.Gamma}


@dataclass
class NonStandardForm:
    """非标准形式: 各层块 + 最粗层 T_c"""
    size: int
    levels: int
    wavelet: WaveletFilter = field(repr=False)
    blocks: List[NsfLevel] = field(repr=False)
    coarse_block: sparse.csr_matrix = field(repr=False)

    def nonzeros(self) -> int:
        total = int(np.count_nonzero(self.coarse_block.data))
        for lvl in self.blocks:
            total += sum(int(np.count_nonzero(m.data)) for m in lvl.blocks().values())
        return total

    def triplets(self) -> Iterator[Tuple[int, str, int, int, float]]:
        """(level, block, row, col, value)，level 0 表示最粗层块"""
        coo = self.coarse_block.tocoo()
        for r, c, v in zip(coo.row, coo.col, coo.data):
            if v != 0:
                yield 0, "T", int(r), int(c), float(v)
        for lvl in self.blocks:
            for name, mat in lvl.blocks().items():
                coo = mat.tocoo()
                for r, c, v in zip(coo.row, coo.col, coo.data):
                    if v != 0:
                        yield lvl.level, name, int(r), int(c), float(v)


@dataclass
class ThresholdStats:
    nonzeros_before: int
    nonzeros_after: int
    max_apply_error_bound: float


def one_level_matrices(size: int, filt: WaveletFilter) -> Tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """单层周期分析矩阵 H, G (size/2 × size)"""
    half = size // 2
    rows = np.repeat(np.arange(half), filt.length)
    cols = (2 * rows + np.tile(np.arange(filt.length), half)) % size
    H = sparse.coo_matrix((np.tile(filt.h, half), (rows, cols)), shape=(half, size)).tocsr()
    G = sparse.coo_matrix((np.tile(filt.g, half), (rows, cols)), shape=(half, size)).tocsr()
    return H, G


def dense_operator(op_spec: OperatorSpec, filt: WaveletFilter, size: int) -> np.ndarray:
    """网格 x_m = m/N 上的稠密算子矩阵 T"""
    return _operator_matrix(op_spec, filt, size).toarray()


def _operator_matrix(op_spec: OperatorSpec, filt: WaveletFilter, size: int) -> sparse.csr_matrix:
    if op_spec.kind == "identity":
        return sparse.identity(size, format="csr")
    if op_spec.kind == "zero":
        return sparse.csr_matrix((size, size))
    if op_spec.kind == "derivative":
        cc = connection_coeffs(op_spec.derivative_filter or filt, op_spec.order)
        return differentiation_matrix(cc, size, spacing=1.0 / size)
    if op_spec.kind == "kernel":
        kernel = op_spec.kernel
        if callable(kernel):
            x = np.arange(size) / size
            values = kernel(x[:, None], x[None, :])
        else:
            values = np.asarray(kernel, dtype=float)
        if values.shape != (size, size):
            raise ShapeMismatch(f"核矩阵形状 {values.shape} 与网格 {size} 不符")
        # 单点尺度函数求积
        return sparse.csr_matrix(values / size)
    raise BadParams(f"未知算子类型: {op_spec.kind}")


def build_nonstandard_form(op_spec: OperatorSpec, filt: WaveletFilter,
                           levels: int, size: int) -> NonStandardForm:
    """
    逐层构造 A = G T Gᵀ, B = G T Hᵀ, Γ = H T Gᵀ，T ← H T Hᵀ

    Raises:
        ShapeMismatch: size < 2^levels·(L-1)
    """
    log2_exact(size)
    if levels < 1 or size < 2 ** levels * filt.support_length:
        raise ShapeMismatch(
            f"网格 {size} 不足以容纳 {levels} 层 {filt.name} (需要 ≥ {2 ** levels * filt.support_length})")

    T = _operator_matrix(op_spec, filt, size)
    blocks = []
    n = size
    for level in range(1, levels + 1):
        H, G = one_level_matrices(n, filt)
        TG = T @ G.T
        TH = T @ H.T
        blocks.append(NsfLevel(
            level=level,
            A=(G @ TG).tocsr(),
            B=(G @ TH).tocsr(),
            Gamma=(H @ TG).tocsr(),
        ))
        T = (H @ TH).tocsr()
        n //= 2

    nsf = NonStandardForm(size=size, levels=levels, wavelet=filt, blocks=blocks, coarse_block=T)
    logger.info(f"📋 非标准形式 {op_spec.kind} ({filt.name}, N={size}, {levels} 层): {nsf.nonzeros()} 个非零元")
    return nsf


def apply_nonstandard(nsf: NonStandardForm, f: np.ndarray) -> np.ndarray:
    """
    稀疏作用，代价 O(N·带宽)

    Raises:
        ShapeMismatch: 输入长度与网格不符
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (nsf.size,):
        raise ShapeMismatch(f"输入形状 {f.shape} 与非标准形式网格 {nsf.size} 不符")

    smooth = [f]
    details = [None]
    for _ in range(nsf.levels):
        s, d = analysis_step(smooth[-1], nsf.wavelet)
        smooth.append(s)
        details.append(d)

    out = nsf.coarse_block @ smooth[nsf.levels]
    for lvl in reversed(nsf.blocks):
        s, d = smooth[lvl.level], details[lvl.level]
        v = out + lvl.Gamma @ d
        w = lvl.A @ d + lvl.B @ s
        out = synthesis_step(v, w, nsf.wavelet)
    return out


def _threshold_matrix(mat: sparse.csr_matrix, eps: float) -> Tuple[sparse.csr_matrix, float]:
    kept = mat.copy().tocsr()
    dropped = np.abs(kept.data) < eps
    error = float(np.sqrt(np.sum(kept.data[dropped] ** 2)))
    kept.data[dropped] = 0.0
    kept.eliminate_zeros()
    return kept, error


def threshold_sparsity(nsf: NonStandardForm, eps: float) -> Tuple[NonStandardForm, ThresholdStats]:
    """
    把 |值| < ε 的元素置零

    误差界 Σ_blocks ‖E_block‖_F 以单位输入范数计
    """
    if eps < 0:
        raise BadParams(f"阈值必须非负，收到 {eps}")
    before = nsf.nonzeros()
    coarse, bound = _threshold_matrix(nsf.coarse_block, eps)
    blocks = []
    for lvl in nsf.blocks:
        A, eA = _threshold_matrix(lvl.A, eps)
        B, eB = _threshold_matrix(lvl.B, eps)
        Gamma, eG = _threshold_matrix(lvl.Gamma, eps)
        bound += eA + eB + eG
        blocks.append(NsfLevel(level=lvl.level, A=A, B=B, Gamma=Gamma))
    thresholded = replace(nsf, blocks=blocks, coarse_block=coarse)
    stats = ThresholdStats(
        nonzeros_before=before,
        nonzeros_after=thresholded.nonzeros(),
        max_apply_error_bound=bound,
    )
    logger.info(f"✂️ 阈值 ε={eps:g}: 非零元 {before} → {stats.nonzeros_after}")
    return thresholded, stats


def band_profile(mat: sparse.spmatrix, tol: float = 0.0) -> int:
    """|值| > tol 的元素的最大周期带距离"""
    coo = mat.tocoo()
    mask = np.abs(coo.data) > tol
    if not mask.any():
        return 0
    n = mat.shape[0]
    dist = np.abs(coo.row[mask] - coo.col[mask])
    return int(np.max(np.minimum(dist, n - dist)))

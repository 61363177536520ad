"""
小波核心模块
滤波器构造、尺度函数/小波函数求值、周期快速小波变换与小波包最优基

约定:
    - 低通 h 长度 L = 2M，高通 g_k = (-1)^k h_{L-1-k}
    - 抽取保留偶数下标输出: a_k = Σ_n h_n x_{(2k+n) mod N}
    - 所有变换作用于数组最后一个轴，可批量处理二维数组的行
"""
import json
import logging
import itertools
from functools import lru_cache
from dataclasses import dataclass, field
from math import comb, sqrt
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.integrate import trapezoid

from .errors import (
    UnsupportedOrder, BadLength, TooManyLevels, ShapeMismatch, BadParams,
    ComputationError, FormatError,
)
from .utils import log2_exact, parse_filter_name

logger = logging.getLogger(__name__)

FAMILIES = ("haar", "daubechies", "symmlet")
MIN_ORDER, MAX_ORDER = 2, 10

# (层号, 分支路径) 0=低通, 1=高通
PacketNode = Tuple[int, Tuple[int, ...]]


@dataclass(frozen=True, eq=False)
class WaveletFilter:
    """正交镜像滤波器对"""
    family: str
    order: int
    h: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)

    @property
    def length(self) -> int:
        return len(self.h)

    @property
    def support_length(self) -> int:
        """φ 与 Ψ 的支撑为 [0, L-1]"""
        return len(self.h) - 1

    @property
    def name(self) -> str:
        if self.family == "haar":
            return "haar"
        return f"{self.family}{self.order}"


@dataclass
class MraDecomposition:
    """
    多分辨率分解 (粗层 + 各层细节)

    details[0] 对应最粗细节层 c，details[-1] 对应最细层 J-1
    """
    coarse_level: int
    coarse: np.ndarray
    details: List[np.ndarray]
    original_length: int
    wavelet: Optional["WaveletFilter"] = field(default=None, repr=False)

    @property
    def levels(self) -> int:
        return len(self.details)

    @property
    def finest_level(self) -> int:
        """J，即 original_length = 2^J"""
        return self.coarse_level + len(self.details)

    def detail(self, j: int) -> np.ndarray:
        return self.details[j - self.coarse_level]

    def flat(self) -> np.ndarray:
        """按 [coarse, d_c, ..., d_{J-1}] 拼接的系数向量"""
        return np.concatenate([self.coarse] + list(self.details), axis=-1)


@dataclass
class CascadeResult:
    """级联算法在二进网格上的采样"""
    x: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    depth: int

    def integral_phi(self) -> float:
        return float(trapezoid(self.phi, self.x))


@dataclass
class PacketTree:
    """小波包树与最优基"""
    depth: int
    nodes: Dict[PacketNode, np.ndarray]
    chosen_basis: Set[PacketNode] = field(default_factory=set)
    energy: float = 0.0

    def cost(self, basis: Sequence[PacketNode]) -> float:
        """给定铺砌的可加 Shannon 熵代价"""
        return sum(shannon_cost(self.nodes[node], self.energy) for node in basis)

    @property
    def chosen_cost(self) -> float:
        return self.cost(self.chosen_basis)

    def chosen_coefficients(self) -> np.ndarray:
        ordered = sorted(self.chosen_basis)
        if not ordered:
            return np.zeros(0)
        return np.concatenate([self.nodes[node] for node in ordered])


# ==================== 滤波器构造 ====================

def _inside_outside_pairs(order: int) -> List[Tuple[complex, complex]]:
    """
    求 Daubechies 多项式 P(y) = Σ C(M-1+k, k) y^k 的根，
    并对每个根解 z + 1/z = 2 - 4y 得到 (单位圆内, 单位圆外) 一对 z 根
    """
    ascending = [comb(order - 1 + k, k) for k in range(order)]
    y_roots = np.roots(ascending[::-1]) if order > 1 else np.array([])
    pairs = []
    for y in y_roots:
        z = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
        z = sorted(z, key=abs)
        pairs.append((complex(z[0]), complex(z[1])))
    return pairs


def _filter_from_roots(roots: Sequence[complex], order: int) -> np.ndarray:
    all_roots = list(roots) + [-1.0] * order
    h = np.real(np.poly(all_roots))
    return h * (sqrt(2.0) / h.sum())


def _polish(h: np.ndarray, order: int, iterations: int = 8) -> np.ndarray:
    """Gauss-Newton 精修: 归一化 + 正交性 + 消失矩方程"""
    L = len(h)
    k = np.arange(L, dtype=float)
    centered = k - (L - 1) / 2.0
    alt = (-1.0) ** np.arange(L)

    def residual_and_jacobian(v):
        res = [v.sum() - sqrt(2.0)]
        jac = [np.ones(L)]
        for m in range(order):
            shifted = np.zeros(L)
            shifted[:L - 2 * m] = v[2 * m:]
            back = np.zeros(L)
            back[2 * m:] = v[:L - 2 * m]
            res.append(v @ shifted - (1.0 if m == 0 else 0.0))
            jac.append(shifted + back)
        for m in range(1, order):
            row = alt * centered ** m
            res.append(row @ v)
            jac.append(row)
        return np.array(res), np.vstack(jac)

    for _ in range(iterations):
        res, jac = residual_and_jacobian(h)
        if np.max(np.abs(res)) < 1e-15:
            break
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        h = h + step
    return h


def _phase_nonlinearity(h: np.ndarray) -> float:
    omega = np.linspace(0.0, 0.9 * np.pi, 256)
    response = np.exp(-1j * np.outer(omega, np.arange(len(h)))) @ h
    phase = np.unwrap(np.angle(response))
    coeffs = np.polyfit(omega, phase, 1)
    return float(np.linalg.norm(phase - np.polyval(coeffs, omega)))


def _symmlet_roots(order: int) -> List[complex]:
    """在每组共轭根中选择单位圆内/外，取相位最接近线性的组合"""
    pairs = _inside_outside_pairs(order)
    groups: List[List[int]] = []
    used = set()
    for i, (zin, _) in enumerate(pairs):
        if i in used:
            continue
        group = [i]
        used.add(i)
        if abs(zin.imag) > 1e-8:
            j = min(
                (j for j in range(len(pairs)) if j not in used),
                key=lambda j: abs(pairs[j][0] - zin.conjugate()),
            )
            group.append(j)
            used.add(j)
        groups.append(group)

    best_roots, best_score = None, np.inf
    for choice in itertools.product((0, 1), repeat=len(groups)):
        roots = []
        for pick, group in zip(choice, groups):
            roots.extend(pairs[i][pick] for i in group)
        score = _phase_nonlinearity(_filter_from_roots(roots, order))
        if score < best_score - 1e-9:
            best_roots, best_score = roots, score
    return best_roots


def filter_residuals(filt: WaveletFilter) -> Dict[str, float]:
    """
    返回三类不变量的残差

    消失矩用相对残差 |Σ g_k k^m| / Σ |g_k k^m|，
    高阶滤波器的绝对矩在双精度下无法达到 1e-10
    """
    h, g = filt.h, filt.g
    L = len(h)
    ortho = 0.0
    for m in range(L // 2):
        value = float(h[:L - 2 * m] @ h[2 * m:])
        ortho = max(ortho, abs(value - (1.0 if m == 0 else 0.0)))
    k = np.arange(L, dtype=float)
    moments = 0.0
    for m in range(filt.order):
        terms = g * k ** m
        scale = np.abs(terms).sum()
        moments = max(moments, abs(terms.sum()) / scale)
    return {
        "sum": abs(float(h.sum()) - sqrt(2.0)),
        "orthonormality": ortho,
        "moments": moments,
    }


@lru_cache(maxsize=None)
def make_filter(family: str, order: int) -> WaveletFilter:
    """
    构造小波滤波器

    Args:
        family: haar / daubechies / symmlet
        order: 消失矩阶数 M

    Raises:
        UnsupportedOrder: 阶数超出支持范围
    """
    family = family.lower()
    if family not in FAMILIES:
        raise UnsupportedOrder(f"未知滤波器族: {family}")
    if family == "haar":
        if order != 1:
            raise UnsupportedOrder(f"haar 只支持 order=1，收到 {order}")
        h = np.array([1.0, 1.0]) / sqrt(2.0)
    else:
        if not MIN_ORDER <= order <= MAX_ORDER:
            raise UnsupportedOrder(
                f"{family} 支持阶数 {MIN_ORDER}..{MAX_ORDER}，收到 {order}")
        if family == "daubechies":
            roots = [zin for zin, _ in _inside_outside_pairs(order)]
        else:
            roots = _symmlet_roots(order)
        h = _polish(_filter_from_roots(roots, order), order)

    L = len(h)
    g = np.array([(-1.0) ** k * h[L - 1 - k] for k in range(L)])
    h.setflags(write=False)
    g.setflags(write=False)
    filt = WaveletFilter(family=family, order=order, h=h, g=g)

    res = filter_residuals(filt)
    if res["sum"] > 1e-12 or res["orthonormality"] > 1e-12 or res["moments"] > 1e-10:
        raise ComputationError(f"滤波器 {filt.name} 未通过不变量校验: {res}")
    logger.debug(f"构造滤波器 {filt.name}: {res}")
    return filt


def filter_by_name(name: str) -> WaveletFilter:
    """按名称构造滤波器，如 db3 / symmlet8 / haar"""
    return make_filter(*parse_filter_name(name))


def filter_to_json(filt: WaveletFilter) -> str:
    """导出为 JSON，系数保留 17 位有效数字"""
    def array_text(values):
        return "[" + ", ".join(f"{v:.17g}" for v in values) + "]"

    return (
        "{"
        f"\"family\": {json.dumps(filt.family)}, "
        f"\"order\": {filt.order}, "
        f"\"h\": {array_text(filt.h)}, "
        f"\"g\": {array_text(filt.g)}"
        "}"
    )


def filter_from_json(text: str) -> WaveletFilter:
    """读回 JSON 滤波器并校验与重新构造的一致性"""
    data = json.loads(text)
    try:
        filt = make_filter(data["family"], int(data["order"]))
    except KeyError as e:
        raise FormatError(f"滤波器 JSON 缺少字段: {e}") from e
    if not np.allclose(np.asarray(data["h"]), filt.h, rtol=0, atol=1e-15):
        raise FormatError(f"滤波器 {filt.name} 的系数与构造值不符")
    return filt


# ==================== 尺度函数与小波函数 ====================

def _integer_values(filt: WaveletFilter) -> np.ndarray:
    """φ 在整数点的值: 细化矩阵 √2·h_{2i-j} 特征值 1 的特征向量"""
    h = filt.h
    L = len(h)
    if L == 2:
        return np.array([1.0, 0.0])
    interior = np.arange(1, L - 1)
    mat = np.zeros((L - 2, L - 2))
    for a, i in enumerate(interior):
        for b, j in enumerate(interior):
            k = 2 * i - j
            if 0 <= k < L:
                mat[a, b] = sqrt(2.0) * h[k]
    eigvals, eigvecs = np.linalg.eig(mat)
    idx = int(np.argmin(np.abs(eigvals - 1.0)))
    vec = np.real(eigvecs[:, idx])
    values = np.zeros(L)
    values[1:L - 1] = vec / vec.sum()
    return values


def _refine(values: np.ndarray, coeffs: np.ndarray, step: int) -> np.ndarray:
    """
    一次二进细化 f(y) = √2 Σ c_k φ(2y - k)

    values 为 φ 在间距 1/step 网格上的采样，返回间距 1/(2 step) 的采样
    """
    n_prev = len(values)
    n_new = 2 * (n_prev - 1) + 1
    out = np.zeros(n_new)
    m = np.arange(n_new)
    for k, c in enumerate(coeffs):
        idx = m - k * step
        valid = (idx >= 0) & (idx < n_prev)
        out[valid] += sqrt(2.0) * c * values[idx[valid]]
    return out


def cascade_eval(filt: WaveletFilter, dyadic_depth: int) -> CascadeResult:
    """
    在 [0, L-1] 的二进网格上求 φ 与 Ψ

    返回 2^depth·(L-1) + 1 个采样点
    """
    if not 1 <= dyadic_depth <= 16:
        raise BadLength(f"dyadic_depth 必须在 1..16，收到 {dyadic_depth}")

    phi = _integer_values(filt)
    previous = phi
    for r in range(1, dyadic_depth + 1):
        previous = phi
        phi = _refine(phi, filt.h, 2 ** (r - 1))
    psi = _refine(previous, filt.g, 2 ** (dyadic_depth - 1))

    x = np.arange(len(phi)) / 2.0 ** dyadic_depth
    return CascadeResult(x=x, phi=phi, psi=psi, depth=dyadic_depth)


# ==================== 周期快速小波变换 ====================

def _window_index(n: int, length: int) -> np.ndarray:
    return (2 * np.arange(n // 2)[:, None] + np.arange(length)[None, :]) % n


def analysis_step(x: np.ndarray, filt: WaveletFilter) -> Tuple[np.ndarray, np.ndarray]:
    """单层分析，作用于最后一个轴"""
    windows = x[..., _window_index(x.shape[-1], filt.length)]
    return windows @ filt.h, windows @ filt.g


def synthesis_step(a: np.ndarray, d: np.ndarray, filt: WaveletFilter) -> np.ndarray:
    """单层综合，analysis_step 的转置"""
    half = a.shape[-1]
    n = 2 * half
    out = np.zeros(a.shape[:-1] + (n,))
    base = 2 * np.arange(half)
    for k in range(filt.length):
        # 同一个 k 下 (base + k) mod n 互不相同
        out[..., (base + k) % n] += a * filt.h[k] + d * filt.g[k]
    return out


def _check_signal(n: int, filt: WaveletFilter, levels: int) -> int:
    J = log2_exact(n)
    if n < filt.length:
        raise BadLength(f"信号长度 {n} 短于滤波器长度 {filt.length}")
    if levels < 0 or levels > J:
        raise TooManyLevels(f"层数 {levels} 超出 0..{J}")
    return J


def dwt_periodic(signal: np.ndarray, filt: WaveletFilter, levels: int) -> MraDecomposition:
    """
    周期正交小波分解

    Raises:
        BadLength: 长度不是 2 的幂
        TooManyLevels: levels > J
    """
    x = np.asarray(signal, dtype=float)
    n = x.shape[-1]
    J = _check_signal(n, filt, levels)

    details = []
    approx = x
    for _ in range(levels):
        approx, detail = analysis_step(approx, filt)
        details.append(detail)
    details.reverse()
    return MraDecomposition(
        coarse_level=J - levels,
        coarse=approx,
        details=details,
        original_length=n,
        wavelet=filt,
    )


def idwt_periodic(decomp: MraDecomposition, filt: WaveletFilter) -> np.ndarray:
    """
    周期正交小波重构

    Raises:
        ShapeMismatch: 各层长度与原始长度不一致
    """
    expected = decomp.original_length >> decomp.levels
    if decomp.coarse.shape[-1] != expected:
        raise ShapeMismatch(
            f"粗层长度 {decomp.coarse.shape[-1]} 与期望 {expected} 不符")
    approx = decomp.coarse
    for detail in decomp.details:
        if detail.shape != approx.shape:
            raise ShapeMismatch(f"细节层形状 {detail.shape} 与 {approx.shape} 不符")
        approx = synthesis_step(approx, detail, filt)
    return approx


def wavedec_flat(x: np.ndarray, filt: WaveletFilter, levels: int) -> np.ndarray:
    """分解后按 [coarse, d_c, ..., d_{J-1}] 拼接"""
    return dwt_periodic(x, filt, levels).flat()


def split_flat(coeffs: np.ndarray, levels: int) -> MraDecomposition:
    """把拼接系数切回 MraDecomposition"""
    n = coeffs.shape[-1]
    J = log2_exact(n)
    coarse_len = n >> levels
    details = []
    start = coarse_len
    for j in range(J - levels, J):
        size = 2 ** j
        details.append(coeffs[..., start:start + size])
        start += size
    return MraDecomposition(
        coarse_level=J - levels,
        coarse=coeffs[..., :coarse_len],
        details=details,
        original_length=n,
    )


def waverec_flat(coeffs: np.ndarray, filt: WaveletFilter, levels: int) -> np.ndarray:
    return idwt_periodic(split_flat(coeffs, levels), filt)


def analysis_matrix(n: int, filt: WaveletFilter, levels: int) -> np.ndarray:
    """稠密正交变换矩阵 W，满足 W x = wavedec_flat(x)"""
    return wavedec_flat(np.eye(n), filt, levels).T


# ==================== 小波包与最优基 ====================

def shannon_cost(coeffs: np.ndarray, energy: float) -> float:
    """可加熵代价 -Σ p log p，p = c²/E，约定 0·log0 = 0"""
    if energy <= 0:
        return 0.0
    p = np.asarray(coeffs, dtype=float) ** 2 / energy
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def packet_decompose(signal: np.ndarray, filt: WaveletFilter, depth: int) -> PacketTree:
    """完整小波包树"""
    x = np.asarray(signal, dtype=float)
    J = _check_signal(x.shape[-1], filt, depth)
    nodes: Dict[PacketNode, np.ndarray] = {(0, ()): x}
    for level in range(depth):
        for path in itertools.product((0, 1), repeat=level):
            low, high = analysis_step(nodes[(level, path)], filt)
            nodes[(level + 1, path + (0,))] = low
            nodes[(level + 1, path + (1,))] = high
    logger.debug(f"小波包树: 深度 {depth}/{J}, 节点 {len(nodes)}")
    return PacketTree(depth=depth, nodes=nodes, energy=float(x @ x))


def packet_best_basis(signal: np.ndarray, filt: WaveletFilter, depth: int) -> PacketTree:
    """
    自底向上动态规划选择 Shannon 熵最小的铺砌

    代价相等时保留父节点
    """
    tree = packet_decompose(signal, filt, depth)

    def best(node: PacketNode) -> Tuple[float, Set[PacketNode]]:
        level, path = node
        own = shannon_cost(tree.nodes[node], tree.energy)
        if level == depth:
            return own, {node}
        cost_low, basis_low = best((level + 1, path + (0,)))
        cost_high, basis_high = best((level + 1, path + (1,)))
        if cost_low + cost_high < own:
            return cost_low + cost_high, basis_low | basis_high
        return own, {node}

    _, chosen = best((0, ()))
    tree.chosen_basis = chosen
    return tree


def dwt_basis_nodes(depth: int) -> Set[PacketNode]:
    """纯小波 (只分解低通) 的铺砌"""
    if depth == 0:
        return {(0, ())}
    nodes = {(depth, (0,) * depth)}
    for level in range(1, depth + 1):
        nodes.add((level, (0,) * (level - 1) + (1,)))
    return nodes


def enumerate_tilings(depth: int, node: PacketNode = (0, ())) -> List[Set[PacketNode]]:
    """穷举深度 depth 内的全部铺砌 (深度 3 共 26 种)"""
    level, path = node
    tilings = [{node}]
    if level < depth:
        for left in enumerate_tilings(depth, (level + 1, path + (0,))):
            for right in enumerate_tilings(depth, (level + 1, path + (1,))):
                tilings.append(left | right)
    return tilings


def uniform_tiling(depth: int) -> Set[PacketNode]:
    """深度 depth 上全部 2^depth 个节点"""
    return {(depth, path) for path in itertools.product((0, 1), repeat=depth)}


def _node_start(node: PacketNode) -> float:
    _, path = node
    return sum(bit / 2.0 ** (i + 1) for i, bit in enumerate(path))


def ordered_tiling(nodes) -> List[PacketNode]:
    """
    按频带起点排序并校验铺砌

    纯小波铺砌的顺序即 [coarse, d_c, ..., d_{J-1}]

    Raises:
        BadParams: 节点重叠或没有覆盖整个频带
    """
    ordered = sorted(set(nodes), key=_node_start)
    position = 0.0
    for node in ordered:
        if abs(_node_start(node) - position) > 1e-12:
            raise BadParams(f"小波包节点 {node} 不构成铺砌")
        position += 2.0 ** -node[0]
    if not ordered or abs(position - 1.0) > 1e-12:
        raise BadParams("小波包节点没有覆盖整个频带")
    return ordered


def packet_basis(n: int, filt: WaveletFilter, nodes) -> np.ndarray:
    """
    铺砌对应的正交小波包基，n × n，列按 ordered_tiling 顺序排列

    Raises:
        TooManyLevels: 节点深度超出 log2(n)
    """
    J = log2_exact(n)
    columns = []
    for level, path in ordered_tiling(nodes):
        if level > J:
            raise TooManyLevels(f"小波包节点深度 {level} 超出 {J}")
        block = np.eye(n >> level)
        for bit in reversed(path):
            zeros = np.zeros_like(block)
            block = synthesis_step(zeros, block, filt) if bit else synthesis_step(block, zeros, filt)
        columns.append(block)
    return np.concatenate(columns, axis=0).T

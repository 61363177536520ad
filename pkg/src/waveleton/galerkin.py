"""
Galerkin 约化模块
在张量小波模式上展开未知量，施加 Galerkin 残差条件得到约化代数系统 (GDR)，
在系数空间推进并与网格推进比较

算子以线性 Q 形式给出: Σ c·f(q)·g(p)·∂_q^a ∂_p^b W
约化后 dA/dt = Σ_t X_t A Y_tᵀ，X_t = S_qᵀ F_t D_q^a S_q，Y_t = S_pᵀ G_t D_p^b S_p
"""
import math
import logging
from pathlib import Path
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import legendre
from numpy.polynomial import polynomial as P
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import (
    BadParams, CflViolation, ShapeMismatch, SolverDivergence, UnsupportedNonlinearity,
)
from .formats import write_coo_csv, write_json
from .operator_ns import connection_coeffs, differentiation_matrix
from .tensor2d import Grid2D
from .utils import log2_exact
from .wavelet_core import WaveletFilter, waverec_flat
from .wigner_dyn import (
    LindbladParams, PhaseSpaceDerivative, PolynomialPotential, WignerState, series_coefficient,
)

logger = logging.getLogger(__name__)

# rk4 在虚轴上的稳定区间约为 2√2
RK4_STABILITY = 2.8


# ==================== 线性 Q 形式 ====================

@dataclass(frozen=True)
class QFormTerm:
    """coefficient · q_poly(q) · p_poly(p) · ∂_q^dq ∂_p^dp W^w_power"""
    coefficient: float
    q_poly: Tuple[float, ...] = (1.0,)
    p_poly: Tuple[float, ...] = (1.0,)
    dq: int = 0
    dp: int = 0
    w_power: int = 1

    def scaled(self, factor: float) -> "QFormTerm":
        return QFormTerm(self.coefficient * factor, self.q_poly, self.p_poly,
                         self.dq, self.dp, self.w_power)


@dataclass(frozen=True)
class QForm:
    """项的线性组合，支持加法与数乘"""
    terms: Tuple[QFormTerm, ...] = ()

    def __add__(self, other: "QForm") -> "QForm":
        return QForm(self.terms + other.terms)

    def __mul__(self, factor: float) -> "QForm":
        return QForm(tuple(t.scaled(factor) for t in self.terms))

    __rmul__ = __mul__

    def is_linear(self) -> bool:
        return all(t.w_power == 1 for t in self.terms)


def identity_qform() -> QForm:
    return QForm((QFormTerm(1.0),))


def moyal_qform(U: PolynomialPotential, hbar: float = 1.0, mass: float = 1.0) -> QForm:
    """-(p/m)∂_q + Σ_ℓ c_ℓ U^{(2ℓ+1)}(q) ∂_p^{2ℓ+1}"""
    terms = [QFormTerm(-1.0 / mass, p_poly=(0.0, 1.0), dq=1)]
    for ell in U.series_indices():
        k = 2 * ell + 1
        terms.append(QFormTerm(series_coefficient(ell, hbar),
                               q_poly=tuple(U.derivative(k)), dp=k))
    return QForm(tuple(terms))


def lindblad_qform(U: PolynomialPotential, params: LindbladParams,
                   hbar: float = 1.0, mass: float = 1.0) -> QForm:
    """Moyal + 2γ(1 + p∂_p) + D∂²_p"""
    form = moyal_qform(U, hbar, mass)
    extra = []
    if params.gamma > 0:
        extra.append(QFormTerm(2 * params.gamma))
        extra.append(QFormTerm(2 * params.gamma, p_poly=(0.0, 1.0), dp=1))
    if params.diffusion > 0:
        extra.append(QFormTerm(params.diffusion, dp=2))
    return form + QForm(tuple(extra))


# ==================== 模式展开 ====================

@dataclass
class ModeAnsatz:
    """
    张量小波模式展开

    每个轴取 V_level 的层次基 [φ_{c,·}, Ψ_{c,·}, ..., Ψ_{level-1,·}]，
    在 grid 的节点上采样；q_modes/p_modes 可选取其中的子集
    """
    wavelet: WaveletFilter
    level: int
    grid: Grid2D
    coarse_level: Optional[int] = None
    q_modes: Optional[Sequence[int]] = None
    p_modes: Optional[Sequence[int]] = None
    _bases: Dict[str, np.ndarray] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.coarse_level is None:
            self.coarse_level = self.level
        for n in self.grid.values.shape:
            J = log2_exact(n)
            if not 0 <= self.coarse_level <= self.level <= J:
                raise BadParams(f"层号需满足 0 ≤ c ≤ level ≤ {J}: c={self.coarse_level}, level={self.level}")

    def _basis(self, axis: str) -> np.ndarray:
        if axis not in self._bases:
            n = self.grid.values.shape[0 if axis == "q" else 1]
            J = log2_exact(n)
            count = 2 ** self.level
            synth = waverec_flat(np.eye(n)[:count], self.wavelet, J - self.coarse_level).T
            modes = self.q_modes if axis == "q" else self.p_modes
            if modes is not None:
                modes = list(modes)
                if min(modes) < 0 or max(modes) >= count:
                    raise BadParams(f"{axis} 模式下标超出 0..{count - 1}")
                synth = synth[:, modes]
            self._bases[axis] = synth
        return self._bases[axis]

    @property
    def basis_q(self) -> np.ndarray:
        """S_q (nq × Nq)，列为基函数采样"""
        return self._basis("q")

    @property
    def basis_p(self) -> np.ndarray:
        return self._basis("p")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.basis_q.shape[1], self.basis_p.shape[1]

    def mode_levels(self, axis: str) -> np.ndarray:
        """每个模式所属的层 (粗层记为 c-1)"""
        count = 2 ** self.level
        labels = np.full(count, self.coarse_level - 1)
        for j in range(self.coarse_level, self.level):
            labels[2 ** j:2 ** (j + 1)] = j
        modes = self.q_modes if axis == "q" else self.p_modes
        return labels if modes is None else labels[list(modes)]


def synthesize_coefficients(ansatz: ModeAnsatz, coeffs: np.ndarray) -> np.ndarray:
    """W = S_q A S_pᵀ"""
    return ansatz.basis_q @ coeffs @ ansatz.basis_p.T


@dataclass
class Projection:
    coefficients: np.ndarray
    reconstruction_error: float
    level_energy: np.ndarray


def project_initial(state: WignerState, ansatz: ModeAnsatz) -> Projection:
    """
    a(0) = S_qᵀ W S_p，并以逐层能量报告重构误差
    """
    values = state.values
    if values.shape != ansatz.grid.values.shape:
        raise ShapeMismatch(f"状态网格 {values.shape} 与展开网格 {ansatz.grid.values.shape} 不符")
    coeffs = ansatz.basis_q.T @ values @ ansatz.basis_p
    recon = synthesize_coefficients(ansatz, coeffs)
    norm = np.linalg.norm(values)
    error = float(np.linalg.norm(values - recon) / norm) if norm > 0 else 0.0

    q_levels = ansatz.mode_levels("q")
    p_levels = ansatz.mode_levels("p")
    labels = list(range(ansatz.coarse_level - 1, ansatz.level))
    energy = np.zeros((len(labels), len(labels)))
    for a, lq in enumerate(labels):
        for b, lp in enumerate(labels):
            block = coeffs[np.ix_(q_levels == lq, p_levels == lp)]
            energy[a, b] = float(np.sum(block ** 2))
    return Projection(coefficients=coeffs, reconstruction_error=error, level_energy=energy)


# ==================== 约化系统 ====================

@dataclass
class ReducedSystem:
    """
    dA/dt = Σ_t X_t A Y_tᵀ + rhs

    matrix 按行优先展开 vec(X A Yᵀ) = (X ⊗ Y) vec(A)，按需构造
    """
    ansatz: ModeAnsatz
    terms: List[Tuple[np.ndarray, np.ndarray]]
    rhs: Optional[np.ndarray] = None
    constraints: Optional[np.ndarray] = None
    _matrix: Optional[sparse.csr_matrix] = field(default=None, init=False, repr=False)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.ansatz.shape

    @property
    def size(self) -> int:
        nq, n_p = self.shape
        return nq * n_p

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        out = np.zeros(self.shape)
        for X, Y in self.terms:
            out += X @ coeffs @ Y.T
        return out

    @property
    def matrix(self) -> sparse.csr_matrix:
        if self._matrix is None:
            total = sparse.csr_matrix((self.size, self.size))
            for X, Y in self.terms:
                total = total + sparse.kron(sparse.csr_matrix(X), sparse.csr_matrix(Y), format="csr")
            self._matrix = total.tocsr()
        return self._matrix

    def coo_triplets(self):
        coo = self.matrix.tocoo()
        return zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())


def export_system(system: ReducedSystem, path) -> Path:
    """坐标表 CSV (row, col, value) + 同名 .json 元数据，返回元数据路径"""
    path = Path(path)
    write_coo_csv(path, system.coo_triplets())
    ansatz = system.ansatz
    sidecar = path.with_suffix(".json")
    write_json(sidecar, {
        "shape": list(system.shape),
        "size": system.size,
        "nnz": int(system.matrix.nnz),
        "terms": len(system.terms),
        "filter": ansatz.wavelet.name,
        "level": ansatz.level,
        "coarse_level": ansatz.coarse_level,
        "ordering": "row-major vec(A)",
    })
    logger.info(f"📋 约化系统已导出: {path} ({system.matrix.nnz} 个非零元)")
    return sidecar


def _poly_diag(poly: Sequence[float], nodes: np.ndarray) -> Optional[np.ndarray]:
    if len(poly) == 1 and poly[0] == 1.0:
        return None
    return P.polyval(nodes, np.asarray(poly, dtype=float))


def _axis_factor(basis: np.ndarray, poly, order: int, nodes: np.ndarray,
                 spacing: float, wavelet: WaveletFilter) -> np.ndarray:
    """Sᵀ diag(poly) D^order S，变系数用单点求积"""
    mapped = basis
    if order > 0:
        D = differentiation_matrix(connection_coeffs(wavelet, order), len(nodes), spacing)
        mapped = D @ basis
    weights = _poly_diag(poly, nodes)
    if weights is not None:
        mapped = weights[:, None] * mapped
    return basis.T @ mapped


def assemble(form: QForm, ansatz: ModeAnsatz,
             derivative: Optional[PhaseSpaceDerivative] = None) -> ReducedSystem:
    """
    把线性 Q 形式投影到模式空间

    Raises:
        UnsupportedNonlinearity: 含 W 的非线性项
    """
    if not form.is_linear():
        raise UnsupportedNonlinearity("非线性算子需要多线性约化，不在支持范围")
    derivative = derivative if derivative is not None else PhaseSpaceDerivative()
    grid = ansatz.grid
    terms = []
    for term in form.terms:
        X = _axis_factor(ansatz.basis_q, term.q_poly, term.dq, grid.q, grid.dq, derivative.wavelet)
        Y = _axis_factor(ansatz.basis_p, term.p_poly, term.dp, grid.p, grid.dp, derivative.wavelet)
        terms.append((term.coefficient * X, Y))
    logger.debug(f"组装约化系统: {len(terms)} 项, 模式 {ansatz.shape}")
    return ReducedSystem(ansatz=ansatz, terms=terms)


def gdr_residual(system: ReducedSystem, coeffs: np.ndarray,
                 rate: Optional[np.ndarray] = None) -> np.ndarray:
    """
    约化方程的残差投影 ℓ = M·a + rhs - da/dt

    rate 缺省为零，即定常 GDR
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != system.shape:
        raise ShapeMismatch(f"系数形状 {coeffs.shape} 与系统 {system.shape} 不符")
    residual = system.apply(coeffs)
    if system.rhs is not None:
        residual = residual + system.rhs
    if rate is not None:
        residual = residual - rate
    return residual


def spectral_bound(system: ReducedSystem, iterations: int = 50, seed: int = 0) -> float:
    """幂迭代估计 ‖M‖₂"""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(system.shape)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(iterations):
        w = system.apply(v)
        # Mᵀ 作用: Σ Xᵀ W Y
        u = np.zeros(system.shape)
        for X, Y in system.terms:
            u += X.T @ w @ Y
        norm = np.linalg.norm(u)
        if norm == 0:
            return 0.0
        estimate = math.sqrt(norm)
        v = u / norm
    return estimate


def stable_steps(system: ReducedSystem, horizon: float, margin: float = 0.7) -> int:
    """rk4 在 horizon 内的最少稳定步数"""
    sigma = spectral_bound(system)
    return max(1, int(math.ceil(horizon * sigma / (margin * RK4_STABILITY))))


@dataclass
class CoefficientTrajectory:
    times: List[float]
    coefficients: List[np.ndarray]
    consistency: List[float] = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.coefficients[-1]


def solve_evolution(system: ReducedSystem, a0: np.ndarray, dt: float, steps: int,
                    method: str = "rk4", record_every: Optional[int] = None,
                    residual_tol: float = 1e-10) -> CoefficientTrajectory:
    """
    系数空间推进 da/dt = M a (+ rhs)

    consistency 记录每步的离散 GDR 残差 max|(a_{n+1}-a_n)/dt - M(a_n+a_{n+1})/2|

    Raises:
        CflViolation: rk4 下 dt·‖M‖ 超出稳定区间
        SolverDivergence: Crank-Nicolson 残差未达标
    """
    a = np.asarray(a0, dtype=float).copy()
    if a.shape != system.shape:
        raise ShapeMismatch(f"初始系数形状 {a.shape} 与系统 {system.shape} 不符")
    if dt <= 0:
        raise BadParams(f"dt 必须为正，收到 {dt}")
    record_every = record_every or max(steps, 1)
    rhs = system.rhs if system.rhs is not None else 0.0

    def f(x):
        return system.apply(x) + rhs

    if method == "rk4":
        sigma = spectral_bound(system)
        if dt * sigma > RK4_STABILITY:
            raise CflViolation(f"dt·‖M‖ = {dt * sigma:.3f} 超过 {RK4_STABILITY}")
        step = lambda x: _rk4(f, x, dt)
    elif method == "crank_nicolson":
        size = system.size
        identity = sparse.identity(size, format="csc")
        lhs = (identity - 0.5 * dt * system.matrix).tocsc()
        lu = splu(lhs)
        forcing = np.ravel(rhs * np.ones(system.shape)) if system.rhs is not None else 0.0

        def step(x):
            b = x.ravel() + 0.5 * dt * (system.matrix @ x.ravel()) + dt * forcing
            sol = lu.solve(b)
            res = np.linalg.norm(lhs @ sol - b) / max(np.linalg.norm(b), 1e-300)
            if res >= residual_tol:
                raise SolverDivergence(f"Crank-Nicolson 残差 {res:.2e}")
            return sol.reshape(system.shape)
    else:
        raise BadParams(f"未知积分方法: {method}")

    trajectory = CoefficientTrajectory(times=[0.0], coefficients=[a.copy()])
    for n in range(1, steps + 1):
        new = step(a)
        rate = (new - a) / dt
        trajectory.consistency.append(
            float(np.max(np.abs(gdr_residual(system, 0.5 * (a + new), rate)))))
        a = new
        if n % record_every == 0 or n == steps:
            trajectory.times.append(n * dt)
            trajectory.coefficients.append(a.copy())
    return trajectory


def _rk4(f, x, dt):
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


# ==================== 时空展开 ====================

def legendre_time_basis(n_time: int, horizon: float, nodes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """[0, T] 上的正交归一 Legendre 基及其导数，返回 (值, 导数)，形状 (n_time, len(nodes))"""
    x = 2.0 * nodes / horizon - 1.0
    values = np.zeros((n_time, len(nodes)))
    derivs = np.zeros((n_time, len(nodes)))
    for i in range(n_time):
        c = np.zeros(i + 1)
        c[i] = 1.0
        scale = math.sqrt((2 * i + 1) / horizon)
        values[i] = scale * legendre.legval(x, c)
        derivs[i] = scale * (2.0 / horizon) * legendre.legval(x, legendre.legder(c))
    return values, derivs


@dataclass
class SpaceTimeSolution:
    """a(t) = Σ_i c_i A_i(t)"""
    coefficients: np.ndarray
    horizon: float
    shape: Tuple[int, int]
    residual: float

    def evaluate(self, t: float) -> np.ndarray:
        values, _ = legendre_time_basis(self.coefficients.shape[0], self.horizon, np.array([t]))
        return np.tensordot(values[:, 0], self.coefficients, axes=1).reshape(self.shape)


def solve_space_time(system: ReducedSystem, a0: np.ndarray, horizon: float,
                     n_time: int = 8, penalty: float = 1e3) -> SpaceTimeSolution:
    """
    全时空展开: 时间方向正交 Legendre 基，Galerkin 条件
    ∫ A_j (Σ_i c_i A_i' - M Σ_i c_i A_i) dt = 0，初值以罚项行施加，最小二乘求解

    仅适合小模式数 (未知量 n_time·N²)
    """
    a0 = np.asarray(a0, dtype=float)
    if a0.shape != system.shape:
        raise ShapeMismatch(f"初始系数形状 {a0.shape} 与系统 {system.shape} 不符")
    K = system.size
    nodes, weights = legendre.leggauss(n_time + 2)
    t_nodes = 0.5 * horizon * (nodes + 1.0)
    t_weights = 0.5 * horizon * weights
    values, derivs = legendre_time_basis(n_time, horizon, t_nodes)
    coupling = (values * t_weights) @ derivs.T          # D[j, i] = ∫ A_j A_i'
    M = system.matrix.toarray()

    galerkin_rows = np.kron(coupling, np.eye(K)) - np.kron(np.eye(n_time), M)
    start, _ = legendre_time_basis(n_time, horizon, np.array([0.0]))
    initial_rows = penalty * np.kron(start[:, 0][None, :], np.eye(K))
    stacked = np.vstack([galerkin_rows, initial_rows])
    rhs = np.concatenate([np.zeros(n_time * K), penalty * a0.ravel()])
    if system.rhs is not None:
        forcing = np.kron((values * t_weights).sum(axis=1), np.ravel(system.rhs * np.ones(system.shape)))
        rhs[:n_time * K] += forcing
    solution, *_ = np.linalg.lstsq(stacked, rhs, rcond=None)
    residual = float(np.max(np.abs(stacked @ solution - rhs)))
    coeffs = solution.reshape(n_time, K)
    logger.info(f"📋 时空展开: {n_time} 个时间基 × {K} 个模式，残差 {residual:.2e}")
    return SpaceTimeSolution(coefficients=coeffs, horizon=horizon, shape=system.shape, residual=residual)

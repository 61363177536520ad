"""
Wigner 相空间动力学模块
波函数的 Wigner 变换、多项式势的截断 ħ 级数 Moyal 右端、Lindblad-Wigner 耗散右端、
非相干混合、时间推进与量子性指标

相空间盒周期，W 的行 = q，列 = p
"""
import math
import inspect
import logging
from dataclasses import dataclass, field, replace
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import special
from scipy.sparse.linalg import LinearOperator, gmres
from tqdm import tqdm

from .config import get_config
from .errors import BadParams, CflViolation, NotNormalized, SolverDivergence
from .operator_ns import ConnectionCoefficients, apply_stencil, connection_coeffs
from .tensor2d import Grid2D
from .utils import thread_cap
from .wavelet_core import WaveletFilter, filter_by_name

logger = logging.getLogger(__name__)

RK4 = "rk4"
CRANK_NICOLSON = "crank_nicolson"
METHODS = (RK4, CRANK_NICOLSON)


# ==================== 数据类型 ====================

@dataclass(frozen=True)
class PolynomialPotential:
    """U(q) = Σ u_k q^k"""
    coeffs: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(c) for c in self.coeffs)
        if not all(math.isfinite(c) for c in values):
            raise BadParams(f"势系数必须有限: {values}")
        # 去掉高次零系数
        while len(values) > 1 and values[-1] == 0.0:
            values = values[:-1]
        object.__setattr__(self, "coeffs", values or (0.0,))

    @classmethod
    def harmonic(cls, mass: float = 1.0, omega: float = 1.0) -> "PolynomialPotential":
        return cls((0.0, 0.0, 0.5 * mass * omega ** 2))

    @classmethod
    def quartic(cls, lam: float) -> "PolynomialPotential":
        return cls((0.0, 0.0, 0.0, 0.0, lam))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, q: np.ndarray) -> np.ndarray:
        return P.polyval(q, self.coeffs)

    def derivative(self, k: int) -> np.ndarray:
        """U^{(k)} 的系数"""
        return P.polyder(np.array(self.coeffs), k) if k <= self.degree else np.zeros(1)

    def series_indices(self) -> List[int]:
        """非零的 ħ 级数项 ℓ = 0..⌊(d-1)/2⌋"""
        if self.degree < 1:
            return []
        return list(range((self.degree - 1) // 2 + 1))

    def scaled(self, factor: float) -> "PolynomialPotential":
        return PolynomialPotential(tuple(factor * c for c in self.coeffs))


@dataclass
class WignerState:
    """相空间网格上的 W(q,p) 与 ħ、质量、时间"""
    grid: Grid2D
    hbar: float = 1.0
    mass: float = 1.0
    time: float = 0.0

    def __post_init__(self):
        if self.hbar <= 0 or self.mass <= 0:
            raise BadParams(f"ħ 与质量必须为正: ħ={self.hbar}, m={self.mass}")
        if not np.all(np.isfinite(self.grid.values)):
            raise BadParams("W 含非有限值")

    @property
    def values(self) -> np.ndarray:
        return self.grid.values

    @property
    def cell(self) -> float:
        return self.grid.dq * self.grid.dp

    def total_mass(self) -> float:
        return float(self.values.sum() * self.cell)

    def with_values(self, values: np.ndarray, time: Optional[float] = None) -> "WignerState":
        return replace(self, grid=self.grid.with_values(values),
                       time=self.time if time is None else time)

    def check_normalized(self, tol: float = 1e-6) -> bool:
        return abs(self.total_mass() - 1.0) <= tol


@dataclass
class MixtureSpec:
    """非相干混合: (权重, 势) 列表"""
    components: List[Tuple[float, PolynomialPotential]]

    def __post_init__(self):
        weights = np.array([w for w, _ in self.components], dtype=float)
        if len(weights) == 0 or np.any(weights < 0):
            raise BadParams(f"混合权重必须非负且非空: {weights}")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise BadParams(f"混合权重之和 {weights.sum():.15f} ≠ 1")

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])


@dataclass(frozen=True)
class LindbladParams:
    """阻尼率 γ 与扩散系数 D"""
    gamma: float = 0.0
    diffusion: float = 0.0

    def __post_init__(self):
        if self.gamma < 0 or self.diffusion < 0:
            raise BadParams(f"γ 与 D 必须非负: γ={self.gamma}, D={self.diffusion}")


@dataclass
class StepDiagnostics:
    step: int
    time: float
    mass: float
    l2_norm: float
    negativity: float
    purity: float


@dataclass
class Trajectory:
    """时间推进结果: 记录的状态 + 每步诊断"""
    states: List[WignerState] = field(default_factory=list)
    diagnostics: List[StepDiagnostics] = field(default_factory=list)
    boundary_warnings: int = 0

    @property
    def final(self) -> WignerState:
        return self.states[-1]

    @property
    def mass_drift(self) -> float:
        masses = [d.mass for d in self.diagnostics]
        return float(max(abs(m - masses[0]) for m in masses)) if masses else 0.0


@dataclass
class QuantumnessMetrics:
    negativity_volume: float
    purity: float
    min_value: float


# ==================== 网格与解析态 ====================

def conjugate_momentum_extent(q_extent: Sequence[float], nq: int, hbar: float = 1.0) -> Tuple[float, float]:
    """与 q 网格共轭的动量盒 ±πħ/(2Δq)，此时弦方法边缘分布精确"""
    dq = (q_extent[1] - q_extent[0]) / nq
    half = math.pi * hbar / (2.0 * dq)
    return -half, half


def phase_grid(q_extent: Sequence[float], p_extent: Sequence[float], nq: int, n_p: int) -> Grid2D:
    return Grid2D(np.zeros((nq, n_p)), q_extent[0], q_extent[1], p_extent[0], p_extent[1])


def oscillator_eigenstate(n: int, q: np.ndarray, hbar: float = 1.0,
                          mass: float = 1.0, omega: float = 1.0) -> np.ndarray:
    """谐振子本征态 ψ_n(q)"""
    xi = np.sqrt(mass * omega / hbar) * q
    norm = (mass * omega / (math.pi * hbar)) ** 0.25 / math.sqrt(2.0 ** n * math.factorial(n))
    return norm * special.eval_hermite(n, xi) * np.exp(-0.5 * xi ** 2)


def coherent_wavefunction(q: np.ndarray, q0: float, p0: float, hbar: float = 1.0,
                          mass: float = 1.0, omega: float = 1.0) -> np.ndarray:
    """相干态高斯波包"""
    a = mass * omega / hbar
    return (a / math.pi) ** 0.25 * np.exp(-0.5 * a * (q - q0) ** 2 + 1j * p0 * q / hbar)


def gaussian_wigner(grid: Grid2D, q0: float = 0.0, p0: float = 0.0,
                    sigma_q: float = math.sqrt(0.5), sigma_p: float = math.sqrt(0.5)) -> np.ndarray:
    """归一化相空间高斯"""
    q, p = grid.q[:, None], grid.p[None, :]
    return (np.exp(-0.5 * ((q - q0) / sigma_q) ** 2 - 0.5 * ((p - p0) / sigma_p) ** 2)
            / (2 * math.pi * sigma_q * sigma_p))


def coherent_wigner(grid: Grid2D, q0: float, p0: float, hbar: float = 1.0,
                    mass: float = 1.0, omega: float = 1.0) -> np.ndarray:
    """相干态 Wigner 函数 (1/πħ) exp(-mω(q-q0)²/ħ - (p-p0)²/(mωħ))"""
    sigma_q = math.sqrt(hbar / (2 * mass * omega))
    sigma_p = math.sqrt(hbar * mass * omega / 2)
    return gaussian_wigner(grid, q0, p0, sigma_q, sigma_p)


def eigenstate_wigner(n: int, grid: Grid2D, hbar: float = 1.0,
                      mass: float = 1.0, omega: float = 1.0) -> np.ndarray:
    """谐振子本征态的解析 Wigner 函数 ((-1)^n/πħ) e^{-2H/ħω} L_n(4H/ħω)"""
    q, p = grid.q[:, None], grid.p[None, :]
    energy = p ** 2 / (2 * mass) + 0.5 * mass * omega ** 2 * q ** 2
    x = 4 * energy / (hbar * omega)
    return (-1) ** n / (math.pi * hbar) * np.exp(-0.5 * x) * special.eval_laguerre(n, x)


def stationary_lindblad_gaussian(grid: Grid2D, params: LindbladParams,
                                 mass: float = 1.0, omega: float = 1.0) -> np.ndarray:
    """有阻尼谐振子的稳态高斯: σ_p² = D/(2γ)，σ_q² = σ_p²/(m²ω²)"""
    if params.gamma <= 0 or params.diffusion <= 0:
        raise BadParams("稳态高斯要求 γ > 0 且 D > 0")
    sigma_p = math.sqrt(params.diffusion / (2 * params.gamma))
    sigma_q = sigma_p / (mass * omega)
    return gaussian_wigner(grid, 0.0, 0.0, sigma_q, sigma_p)


# ==================== Wigner 变换 ====================

def wigner_transform(psi: np.ndarray, hbar: float, grid: Grid2D,
                     mass: float = 1.0, tol: float = 1e-8) -> WignerState:
    """
    弦方法: ξ = 2nΔq，|n| < nq/4

    W[i,k] = (Δq/πħ) Re Σ_n ψ*_{i-n} ψ_{i+n} exp(-2i p_k nΔq/ħ)

    Raises:
        NotNormalized: Σ|ψ|²Δq 偏离 1
    """
    psi = np.asarray(psi, dtype=complex)
    nq = grid.values.shape[0]
    if psi.shape != (nq,):
        raise BadParams(f"波函数长度 {psi.shape} 与网格 {nq} 不符")
    dq = grid.dq
    norm = float(np.sum(np.abs(psi) ** 2) * dq)
    if abs(norm - 1.0) > tol:
        raise NotNormalized(f"Σ|ψ|²Δq = {norm:.10f}")

    half = nq // 4
    shifts = np.arange(-half + 1, half)
    i = np.arange(nq)[:, None]
    chords = np.conj(psi[(i - shifts) % nq]) * psi[(i + shifts) % nq]
    phases = np.exp(-2j * np.outer(shifts, grid.p) * dq / hbar)
    values = dq / (math.pi * hbar) * np.real(chords @ phases)
    return WignerState(grid=grid.with_values(values), hbar=hbar, mass=mass)


# ==================== 相空间导数 ====================

def spectral_derivative(values: np.ndarray, spacing: float, order: int, axis: int) -> np.ndarray:
    """FFT 导数预言机，奇数阶时 Nyquist 模置零"""
    n = values.shape[axis]
    k = 2 * math.pi * np.fft.fftfreq(n, d=spacing)
    factor = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        factor[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    transformed = np.fft.fft(values, axis=axis) * factor.reshape(shape)
    return np.real(np.fft.ifft(transformed, axis=axis))


class PhaseSpaceDerivative:
    """
    沿 q 或 p 轴的周期导数

    默认使用连接系数模板；spectral=True 时改用 FFT 预言机 (仅供交叉校验)
    """

    def __init__(self, wavelet: Optional[WaveletFilter] = None, spectral: bool = False):
        if wavelet is None and not spectral:
            wavelet = filter_by_name(get_config().operator.derivative_filter)
        self.wavelet = wavelet
        self.spectral = spectral

    def coefficients(self, order: int) -> ConnectionCoefficients:
        return connection_coeffs(self.wavelet, order)

    def __call__(self, grid: Grid2D, values: np.ndarray, axis: int, order: int) -> np.ndarray:
        spacing = grid.dq if axis == 0 else grid.dp
        if self.spectral:
            return spectral_derivative(values, spacing, order, axis)
        return apply_stencil(values, self.coefficients(order), spacing=spacing, axis=axis)

    def dq(self, grid: Grid2D, values: np.ndarray, order: int = 1) -> np.ndarray:
        return self(grid, values, 0, order)

    def dp(self, grid: Grid2D, values: np.ndarray, order: int = 1) -> np.ndarray:
        return self(grid, values, 1, order)


def _default_derivative(derivative: Optional[PhaseSpaceDerivative]) -> PhaseSpaceDerivative:
    return derivative if derivative is not None else PhaseSpaceDerivative()


# ==================== 右端项 ====================

def series_coefficient(ell: int, hbar: float) -> float:
    """(-1)^ℓ (ħ/2)^{2ℓ} / (2ℓ+1)!"""
    return (-1) ** ell * (hbar / 2.0) ** (2 * ell) / math.factorial(2 * ell + 1)


def moyal_series_terms(state: WignerState, U: PolynomialPotential,
                       derivative: Optional[PhaseSpaceDerivative] = None) -> Dict[int, np.ndarray]:
    """势能级数各项 ℓ → c_ℓ U^{(2ℓ+1)}(q) ∂_p^{2ℓ+1} W，ℓ > ⌊(d-1)/2⌋ 的项不出现"""
    derivative = _default_derivative(derivative)
    grid = state.grid
    terms = {}
    for ell in U.series_indices():
        k = 2 * ell + 1
        u_k = P.polyval(grid.q, U.derivative(k))[:, None]
        terms[ell] = series_coefficient(ell, state.hbar) * u_k * derivative.dp(grid, state.values, k)
    return terms


def moyal_rhs(state: WignerState, U: PolynomialPotential,
              derivative: Optional[PhaseSpaceDerivative] = None) -> Grid2D:
    """∂W/∂t = -(p/m)∂_q W + Σ_ℓ c_ℓ U^{(2ℓ+1)}(q) ∂_p^{2ℓ+1} W"""
    derivative = _default_derivative(derivative)
    grid = state.grid
    rhs = -(grid.p[None, :] / state.mass) * derivative.dq(grid, state.values)
    for term in moyal_series_terms(state, U, derivative).values():
        rhs = rhs + term
    return grid.with_values(rhs)


def lindblad_rhs(state: WignerState, U: PolynomialPotential, params: LindbladParams,
                 derivative: Optional[PhaseSpaceDerivative] = None) -> Grid2D:
    """moyal_rhs + 2γ ∂_p(pW) + D ∂²_p W"""
    derivative = _default_derivative(derivative)
    rhs = moyal_rhs(state, U, derivative)
    if params.gamma == 0 and params.diffusion == 0:
        return rhs
    grid = state.grid
    extra = np.zeros_like(state.values)
    if params.gamma > 0:
        extra += 2 * params.gamma * derivative.dp(grid, grid.p[None, :] * state.values)
    if params.diffusion > 0:
        extra += params.diffusion * derivative.dp(grid, state.values, 2)
    return grid.with_values(rhs.values + extra)


def rhs_function(U: PolynomialPotential, params: Optional[LindbladParams] = None,
                 derivative: Optional[PhaseSpaceDerivative] = None) -> Callable[[WignerState], np.ndarray]:
    derivative = _default_derivative(derivative)
    if params is None:
        return lambda s: moyal_rhs(s, U, derivative).values
    return lambda s: lindblad_rhs(s, U, params, derivative).values


# ==================== 诊断 ====================

def quantumness_metrics(state: WignerState) -> QuantumnessMetrics:
    """负性体积 ∬|W| − ∬W、纯度 2πħ∬W²、最小值"""
    values = state.values
    cell = state.cell
    return QuantumnessMetrics(
        negativity_volume=max(0.0, float(np.abs(values).sum() * cell - values.sum() * cell)),
        purity=float(2 * math.pi * state.hbar * np.sum(values ** 2) * cell),
        min_value=float(values.min()),
    )


def _diagnose(step: int, state: WignerState) -> StepDiagnostics:
    metrics = quantumness_metrics(state)
    return StepDiagnostics(
        step=step,
        time=state.time,
        mass=state.total_mass(),
        l2_norm=float(np.sqrt(np.sum(state.values ** 2) * state.cell)),
        negativity=metrics.negativity_volume,
        purity=metrics.purity,
    )


def boundary_excess(state: WignerState, band: int = 4) -> float:
    """边界带内 max|W| 与全局 max|W| 之比"""
    values = np.abs(state.values)
    peak = values.max()
    if peak == 0:
        return 0.0
    edge = max(values[:band].max(), values[-band:].max(),
               values[:, :band].max(), values[:, -band:].max())
    return float(edge / peak)


def cfl_limit(state: WignerState, U: PolynomialPotential, safety: float = 0.4) -> float:
    """rk4 步长上限 safety·min(Δq·m/p_max, Δp/max|U'|)"""
    grid = state.grid
    p_max = float(np.max(np.abs(grid.p)))
    force = float(np.max(np.abs(P.polyval(grid.q, U.derivative(1)))))
    limits = []
    if p_max > 0:
        limits.append(grid.dq * state.mass / p_max)
    if force > 0:
        limits.append(grid.dp / force)
    return safety * min(limits) if limits else math.inf


# ==================== 时间推进 ====================

def _gmres(operator: LinearOperator, rhs: np.ndarray, x0: np.ndarray, rtol: float, maxiter: int):
    """兼容 scipy 新旧版本的 rtol/tol 参数名"""
    kwargs = {"x0": x0, "maxiter": maxiter, "restart": 50, "atol": 0.0}
    if "rtol" in inspect.signature(gmres).parameters:
        kwargs["rtol"] = rtol
    else:
        kwargs["tol"] = rtol
    return gmres(operator, rhs, **kwargs)


def _rk4_step(state: WignerState, f: Callable, dt: float) -> np.ndarray:
    w = state.values
    k1 = f(state)
    k2 = f(state.with_values(w + 0.5 * dt * k1))
    k3 = f(state.with_values(w + 0.5 * dt * k2))
    k4 = f(state.with_values(w + dt * k3))
    return w + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _cn_step(state: WignerState, f: Callable, dt: float, residual_tol: float, maxiter: int) -> np.ndarray:
    shape = state.values.shape
    size = state.values.size

    def apply_l(vec):
        return f(state.with_values(vec.reshape(shape))).ravel()

    lhs = LinearOperator((size, size), matvec=lambda v: v - 0.5 * dt * apply_l(v), dtype=float)
    rhs = state.values.ravel() + 0.5 * dt * apply_l(state.values.ravel())
    solution, info = _gmres(lhs, rhs, state.values.ravel(), 0.1 * residual_tol, maxiter)
    residual = np.linalg.norm(lhs.matvec(solution) - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if residual >= residual_tol:
        raise SolverDivergence(f"Crank-Nicolson 残差 {residual:.2e} ≥ {residual_tol:.0e} (gmres info={info})")
    return solution.reshape(shape)


class _Propagator:
    """单个分量的逐步推进与诊断记录"""

    def __init__(self, state: WignerState, U: PolynomialPotential, params: Optional[LindbladParams],
                 dt: float, method: str, derivative: Optional[PhaseSpaceDerivative],
                 record_every: int):
        config = get_config()
        if dt <= 0:
            raise BadParams(f"dt 必须为正，收到 {dt}")
        if method not in METHODS:
            raise BadParams(f"未知积分方法: {method}")
        if method == RK4:
            limit = cfl_limit(state, U, config.dynamics.cfl_safety)
            if dt > limit:
                raise CflViolation(f"dt={dt:.3e} 超过 CFL 上限 {limit:.3e}")
        self.f = rhs_function(U, params, derivative)
        self.dt = dt
        self.method = method
        self.record_every = record_every
        self.start_time = state.time
        self.current = state
        self.trajectory = Trajectory(states=[state], diagnostics=[_diagnose(0, state)])
        self._residual_tol = config.tolerances.solver_residual
        self._maxiter = config.tolerances.gmres_maxiter
        self._band = config.dynamics.boundary_band
        self._tolerance = config.dynamics.boundary_tolerance
        self._warned = False

    def advance(self, step: int, last: bool) -> WignerState:
        if self.method == RK4:
            values = _rk4_step(self.current, self.f, self.dt)
        else:
            values = _cn_step(self.current, self.f, self.dt, self._residual_tol, self._maxiter)
        self.current = self.current.with_values(values, time=self.start_time + step * self.dt)
        self.trajectory.diagnostics.append(_diagnose(step, self.current))
        if boundary_excess(self.current, self._band) > self._tolerance:
            self.trajectory.boundary_warnings += 1
            if not self._warned:
                logger.warning(f"⚠️ 第 {step} 步 W 在边界带的幅度超过 {self._tolerance:g}·max，可能发生周期折叠")
                self._warned = True
        if step % self.record_every == 0 or last:
            self.trajectory.states.append(self.current)
        return self.current


def evolve(state: WignerState, U: PolynomialPotential, params: Optional[LindbladParams] = None,
           dt: float = 1e-3, steps: int = 0, method: str = RK4,
           derivative: Optional[PhaseSpaceDerivative] = None,
           record_every: Optional[int] = None, progress: Optional[bool] = None) -> Trajectory:
    """
    时间推进，返回记录的状态与每步诊断

    Raises:
        CflViolation: rk4 步长超过 CFL 上限
        SolverDivergence: Crank-Nicolson 残差未达标
    """
    propagator = _Propagator(state, U, params, dt, method, derivative, record_every or max(steps, 1))
    show = get_config().dynamics.progress if progress is None else progress
    for step in tqdm(range(1, steps + 1), desc="evolve", disable=not show, leave=False):
        propagator.advance(step, step == steps)

    trajectory = propagator.trajectory
    logger.info(f"✅ 推进 {steps} 步 ({method})，质量漂移 {trajectory.mass_drift:.2e}")
    return trajectory


# ==================== 混合态 ====================

@dataclass
class MixtureResult:
    """组合 W = Σ w_n W_n (按记录时刻)、合成态每步诊断与各分量轨迹"""
    combined: List[WignerState]
    components: List[Trajectory]
    weights: np.ndarray
    diagnostics: List[StepDiagnostics] = field(default_factory=list)

    @property
    def combined_mass(self) -> List[float]:
        return [s.total_mass() for s in self.combined]

    @property
    def mass_drift(self) -> float:
        masses = [d.mass for d in self.diagnostics]
        return float(max(abs(m - masses[0]) for m in masses)) if masses else 0.0


def combine_states(weights: Sequence[float], states: Sequence[WignerState]) -> WignerState:
    values = sum(w * s.values for w, s in zip(weights, states))
    return states[0].with_values(values)


def mixture_evolve(mix: MixtureSpec, initial: Sequence[Union[WignerState, np.ndarray]],
                   dt: float, steps: int, params: Optional[LindbladParams] = None,
                   method: str = RK4, derivative: Optional[PhaseSpaceDerivative] = None,
                   grid: Optional[Grid2D] = None, hbar: float = 1.0, mass: float = 1.0,
                   record_every: Optional[int] = None,
                   parallel: Optional[bool] = None) -> MixtureResult:
    """
    各分量同步推进，每步按权重合成并记录合成态诊断 (纯度需要合成场)

    initial 可以是 WignerState，或 q 网格上的波函数 (此时需要 grid)
    并行时每步按分量下标顺序合并
    """
    if len(initial) != len(mix.components):
        raise BadParams(f"初态数 {len(initial)} 与混合分量数 {len(mix.components)} 不符")
    states = []
    for item in initial:
        if isinstance(item, WignerState):
            states.append(item)
        else:
            if grid is None:
                raise BadParams("以波函数给出初态时必须提供相空间网格")
            states.append(wigner_transform(item, hbar, grid, mass=mass))

    derivative = _default_derivative(derivative)
    config = get_config()
    use_threads = config.concurrency.parallel if parallel is None else parallel
    every = record_every or max(steps, 1)
    propagators = [
        _Propagator(state, potential, params, dt, method, derivative, every)
        for state, (_, potential) in zip(states, mix.components)
    ]

    weights = mix.weights
    first = combine_states(weights, states)
    combined = [first]
    diagnostics = [_diagnose(0, first)]
    pool = None
    if use_threads and len(propagators) > 1:
        pool = ThreadPoolExecutor(max_workers=thread_cap(config.concurrency.max_workers))
    try:
        for step in tqdm(range(1, steps + 1), desc="mixture", disable=not config.dynamics.progress,
                         leave=False):
            last = step == steps
            if pool is not None:
                currents = list(pool.map(lambda prop: prop.advance(step, last), propagators))
            else:
                currents = [prop.advance(step, last) for prop in propagators]
            mixed = combine_states(weights, currents)
            diagnostics.append(_diagnose(step, mixed))
            if step % every == 0 or last:
                combined.append(mixed)
    finally:
        if pool is not None:
            pool.shutdown()

    result = MixtureResult(combined=combined, components=[p.trajectory for p in propagators],
                           weights=weights, diagnostics=diagnostics)
    logger.info(f"✅ 混合态推进 {steps} 步 ({len(propagators)} 个分量)，合成质量漂移 {result.mass_drift:.2e}")
    return result


def poisson_weights(mean: float, n_max: int) -> np.ndarray:
    """截断到 n ≤ n_max 并重新归一化的 Poisson 权重"""
    if mean < 0 or n_max < 0:
        raise BadParams(f"非法 Poisson 参数: mean={mean}, n_max={n_max}")
    n = np.arange(n_max + 1)
    weights = np.exp(-mean) * mean ** n / special.factorial(n)
    return weights / weights.sum()


def fock_mixture(u0: float, coupling: Sequence[float] = (0.0, 0.0, 1.0),
                 mean_photons: float = 1.0, n_max: int = 2) -> MixtureSpec:
    """原子-光场模型: U_n(x) = n·U0·g(x)，权重为截断 Poisson 分布"""
    g = PolynomialPotential(tuple(coupling))
    weights = poisson_weights(mean_photons, n_max)
    return MixtureSpec(components=[(float(w), g.scaled(n * u0)) for n, w in enumerate(weights)])

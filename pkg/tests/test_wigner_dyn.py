"""
Wigner 相空间动力学测试
Wigner 变换、Moyal 级数、Lindblad 耗散、时间推进与混合态
"""
import math

import numpy as np
import pytest

from waveleton.errors import BadParams, CflViolation, NotNormalized
from waveleton.wigner_dyn import (
    LindbladParams, MixtureSpec, PhaseSpaceDerivative, PolynomialPotential, WignerState,
    boundary_excess, cfl_limit, coherent_wavefunction, coherent_wigner, combine_states,
    conjugate_momentum_extent,
    eigenstate_wigner, evolve, fock_mixture, gaussian_wigner, lindblad_rhs, mixture_evolve,
    moyal_rhs, moyal_series_terms, oscillator_eigenstate, phase_grid, poisson_weights,
    quantumness_metrics, series_coefficient, stationary_lindblad_gaussian, wigner_transform,
)


def _transform_grid(nq=256):
    q_extent = (-12.0, 12.0)
    return phase_grid(q_extent, conjugate_momentum_extent(q_extent, nq), nq, nq)


def _normalized(psi, dq):
    return psi / math.sqrt(np.sum(np.abs(psi) ** 2) * dq)


# ==================== Wigner 变换 ====================

@pytest.mark.parametrize("n", [0, 1, 3])
def test_eigenstate_wigner_matches_analytic(n):
    grid = _transform_grid()
    psi = _normalized(oscillator_eigenstate(n, grid.q), grid.dq)
    state = wigner_transform(psi, 1.0, grid)
    assert np.max(np.abs(state.values - eigenstate_wigner(n, grid))) < 1e-6


def test_marginal_and_purity_identities(rng):
    """随机本征态叠加: ∫W dp = |ψ|²，2πħ∬W² = 1"""
    grid = _transform_grid()
    for _ in range(10):
        weights = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        psi = sum(w * oscillator_eigenstate(k, grid.q) for k, w in enumerate(weights))
        psi = _normalized(psi, grid.dq)
        state = wigner_transform(psi, 1.0, grid)
        marginal = state.values.sum(axis=1) * grid.dp
        assert np.max(np.abs(marginal - np.abs(psi) ** 2)) < 1e-6
        assert state.total_mass() == pytest.approx(1.0, abs=1e-10)
        assert quantumness_metrics(state).purity == pytest.approx(1.0, abs=1e-4)


def test_coherent_state_transform():
    grid = _transform_grid()
    psi = _normalized(coherent_wavefunction(grid.q, 1.0, -2.0), grid.dq)
    state = wigner_transform(psi, 1.0, grid)
    assert np.max(np.abs(state.values - coherent_wigner(grid, 1.0, -2.0))) < 1e-6
    assert quantumness_metrics(state).negativity_volume < 1e-6


def test_first_excited_state_negativity():
    """n = 1 时 ∬|W| - 1 = 4e^{-1/2} - 2"""
    grid = _transform_grid()
    psi = _normalized(oscillator_eigenstate(1, grid.q), grid.dq)
    metrics = quantumness_metrics(wigner_transform(psi, 1.0, grid))
    assert metrics.negativity_volume == pytest.approx(4 * math.exp(-0.5) - 2, abs=5e-3)
    assert metrics.min_value == pytest.approx(-1.0 / math.pi, abs=1e-3)


def test_transform_requires_normalization():
    grid = _transform_grid(64)
    with pytest.raises(NotNormalized):
        wigner_transform(2.0 * oscillator_eigenstate(0, grid.q), 1.0, grid)
    with pytest.raises(BadParams):
        wigner_transform(np.ones(32), 1.0, grid)


# ==================== Moyal 级数 ====================

def test_series_terminates_for_polynomials():
    assert PolynomialPotential.harmonic().series_indices() == [0]
    assert PolynomialPotential((0.0, 0.0, 0.0, 1.0)).series_indices() == [0, 1]
    assert PolynomialPotential.quartic(0.3).series_indices() == [0, 1]
    assert PolynomialPotential((1.0,)).series_indices() == []
    assert PolynomialPotential((0.0, 1.0, 0.0, 0.0)).degree == 1


def test_quartic_correction_term(rng):
    """U = λq⁴ 的 ℓ = 1 项等于 -ħ²λq ∂³_p W"""
    lam, hbar = 0.7, 0.8
    U = PolynomialPotential.quartic(lam)
    grid = phase_grid((-4.0, 4.0), (-4.0, 4.0), 128, 128)
    oracle = PhaseSpaceDerivative(spectral=True)
    q = grid.q[:, None]
    for _ in range(10):
        q0, p0 = rng.uniform(-1.0, 1.0, size=2)
        values = gaussian_wigner(grid, q0, p0, 0.6, 0.6) * rng.uniform(0.5, 2.0)
        state = WignerState(grid.with_values(values), hbar=hbar)
        terms = moyal_series_terms(state, U, oracle)
        assert sorted(terms) == [0, 1]
        expected = -hbar ** 2 * lam * q * oracle.dp(grid, values, 3)
        rel = np.linalg.norm(terms[1] - expected) / np.linalg.norm(expected)
        assert rel < 1e-12


def test_series_coefficients():
    assert series_coefficient(0, 1.0) == 1.0
    assert series_coefficient(1, 2.0) == pytest.approx(-1.0 / 6.0)


def test_wavelet_derivative_matches_spectral():
    grid = phase_grid((-8.0, 8.0), (-8.0, 8.0), 128, 128)
    values = gaussian_wigner(grid, 0.5, -1.0)
    wavelet = PhaseSpaceDerivative()
    spectral = PhaseSpaceDerivative(spectral=True)
    for order in (1, 2, 3):
        a = wavelet.dp(grid, values, order)
        b = spectral.dp(grid, values, order)
        assert np.max(np.abs(a - b)) < 1e-4 * np.max(np.abs(b))
    a, b = wavelet.dq(grid, values), spectral.dq(grid, values)
    assert np.max(np.abs(a - b)) < 1e-4 * np.max(np.abs(b))


def test_harmonic_rhs_is_classical_flow():
    """谐振子 Moyal 右端等于经典 Liouville 流 -p∂_q W + q∂_p W"""
    grid = phase_grid((-8.0, 8.0), (-8.0, 8.0), 128, 128)
    state = WignerState(grid.with_values(gaussian_wigner(grid, 1.0, 0.5)))
    oracle = PhaseSpaceDerivative(spectral=True)
    rhs = moyal_rhs(state, PolynomialPotential.harmonic(), oracle).values
    expected = (-grid.p[None, :] * oracle.dq(grid, state.values)
                + grid.q[:, None] * oracle.dp(grid, state.values))
    np.testing.assert_allclose(rhs, expected, atol=1e-12)


def test_stationary_states_have_zero_rhs():
    grid = phase_grid((-8.0, 8.0), (-8.0, 8.0), 128, 128)
    U = PolynomialPotential.harmonic()
    ground = WignerState(grid.with_values(eigenstate_wigner(0, grid)))
    assert np.max(np.abs(moyal_rhs(ground, U).values)) < 1e-5

    params = LindbladParams(gamma=0.5, diffusion=0.5)
    stationary = WignerState(grid.with_values(stationary_lindblad_gaussian(grid, params)))
    residual = np.max(np.abs(lindblad_rhs(stationary, U, params).values))
    assert residual < 1e-4 * np.max(stationary.values)


# ==================== 时间推进 ====================

def test_harmonic_quarter_period_rotation():
    """相干态在四分之一周期后从 (2, 0) 转到 (0, -2)"""
    grid = phase_grid((-8.0, 8.0), (-8.0, 8.0), 128, 128)
    start = WignerState(grid.with_values(coherent_wigner(grid, 2.0, 0.0)))
    steps = 260
    trajectory = evolve(start, PolynomialPotential.harmonic(), None, 0.5 * math.pi / steps, steps)
    final = trajectory.final
    assert final.time == pytest.approx(0.5 * math.pi)
    assert np.max(np.abs(final.values - coherent_wigner(grid, 0.0, -2.0))) < 1e-3
    assert trajectory.mass_drift < 1e-10


def test_harmonic_half_period_reflection(harmonic_benchmark):
    """半周期后相干态到达 (-1.5, 0)，质量守恒"""
    final = harmonic_benchmark["final"]
    grid = harmonic_benchmark["grid"]
    expected = coherent_wigner(grid, -1.5, 0.0)
    gap = np.linalg.norm(final.values - expected) / np.linalg.norm(expected)
    assert gap < 1e-2
    assert abs(final.total_mass() - harmonic_benchmark["initial"].total_mass()) < 1e-10


def test_free_particle_shear_matches_analytic():
    """U = 0: W(q, p, t) = W(q - pt/m, p, 0)，p 边缘分布不变"""
    grid = phase_grid((-8.0, 8.0), (-8.0, 8.0), 128, 128)
    sigma = math.sqrt(0.5)
    start = WignerState(grid.with_values(gaussian_wigner(grid, 0.0, 0.0, sigma, sigma)))
    free = PolynomialPotential((0.0,))
    steps, horizon = 200, 1.0
    final = evolve(start, free, None, horizon / steps, steps).final
    q, p = grid.q[:, None], grid.p[None, :]
    expected = (np.exp(-0.5 * ((q - p * horizon) / sigma) ** 2 - 0.5 * (p / sigma) ** 2)
                / (2 * math.pi * sigma * sigma))
    gap = np.linalg.norm(final.values - expected) / np.linalg.norm(expected)
    assert gap < 1e-2
    np.testing.assert_allclose(final.values.sum(axis=0), start.values.sum(axis=0), atol=1e-10)


@pytest.mark.slow
def test_harmonic_full_period_round_trip(full_period_benchmark):
    """256² 网格推进一个完整周期回到初态"""
    start = full_period_benchmark["initial"]
    trajectory = full_period_benchmark["trajectory"]
    dt = full_period_benchmark["horizon"] / full_period_benchmark["steps"]
    assert dt <= cfl_limit(start, full_period_benchmark["potential"])
    final = trajectory.final
    assert final.time == pytest.approx(2 * math.pi)
    gap = np.linalg.norm(final.values - start.values) / np.linalg.norm(start.values)
    assert gap < 1e-2
    assert trajectory.mass_drift < 1e-6


def test_lindblad_mass_conservation():
    grid = phase_grid((-8.0, 8.0), (-8.0, 8.0), 64, 64)
    start = WignerState(grid.with_values(coherent_wigner(grid, 1.0, 0.0)))
    params = LindbladParams(gamma=0.2, diffusion=0.4)
    dt = 0.9 * cfl_limit(start, PolynomialPotential.harmonic())
    trajectory = evolve(start, PolynomialPotential.harmonic(), params, dt, 1000, record_every=500)
    assert len(trajectory.states) == 3
    assert len(trajectory.diagnostics) == 1001
    assert trajectory.mass_drift < 1e-8
    # 扩散使纯度下降
    assert trajectory.diagnostics[-1].purity < trajectory.diagnostics[0].purity


def test_crank_nicolson_matches_rk4():
    grid = phase_grid((-6.0, 6.0), (-6.0, 6.0), 64, 64)
    start = WignerState(grid.with_values(coherent_wigner(grid, 1.0, 0.0)))
    U = PolynomialPotential.harmonic()
    dt = 0.4 * cfl_limit(start, U)
    rk4 = evolve(start, U, None, dt, 20).final
    cn = evolve(start, U, None, dt, 20, method="crank_nicolson").final
    assert np.max(np.abs(rk4.values - cn.values)) < 1e-3 * np.max(np.abs(rk4.values))


def test_cfl_violation():
    grid = phase_grid((-8.0, 8.0), (-8.0, 8.0), 64, 64)
    start = WignerState(grid.with_values(coherent_wigner(grid, 1.0, 0.0)))
    U = PolynomialPotential.harmonic()
    limit = cfl_limit(start, U)
    assert limit == pytest.approx(0.4 * 0.25 / 8.0)
    with pytest.raises(CflViolation):
        evolve(start, U, None, 2 * limit, 1)
    with pytest.raises(BadParams):
        evolve(start, U, None, -1.0, 1)
    with pytest.raises(BadParams):
        evolve(start, U, None, limit, 1, method="euler")


def test_boundary_excess_detects_leakage():
    grid = phase_grid((-8.0, 8.0), (-8.0, 8.0), 64, 64)
    centred = WignerState(grid.with_values(gaussian_wigner(grid)))
    edge = WignerState(grid.with_values(gaussian_wigner(grid, 7.9, 0.0)))
    assert boundary_excess(centred) < 1e-10
    assert boundary_excess(edge) > 0.1


# ==================== 混合态 ====================

def test_mixture_weights_validated():
    U = PolynomialPotential.harmonic()
    with pytest.raises(BadParams):
        MixtureSpec([(0.5, U), (0.4, U)])
    with pytest.raises(BadParams):
        MixtureSpec([(1.2, U), (-0.2, U)])


def test_mixture_of_identical_components_matches_single():
    grid = phase_grid((-8.0, 8.0), (-8.0, 8.0), 32, 32)
    U = PolynomialPotential.harmonic()
    start = WignerState(grid.with_values(coherent_wigner(grid, 1.0, 0.0)))
    dt = 0.5 * cfl_limit(start, U)
    single = evolve(start, U, None, dt, 10).final
    mix = MixtureSpec([(0.25, U), (0.75, U)])
    result = mixture_evolve(mix, [start, start], dt, 10)
    np.testing.assert_allclose(result.combined[-1].values, single.values, atol=1e-14)
    assert result.combined_mass[-1] == pytest.approx(single.total_mass(), abs=1e-12)


def test_parallel_mixture_is_bit_identical():
    grid = phase_grid((-8.0, 8.0), (-8.0, 8.0), 32, 32)
    start = WignerState(grid.with_values(coherent_wigner(grid, 1.0, 0.0)))
    mix = fock_mixture(0.5, mean_photons=1.0, n_max=2)
    dt = 0.5 * cfl_limit(start, mix.components[-1][1])
    serial = mixture_evolve(mix, [start] * 3, dt, 5, parallel=False)
    threaded = mixture_evolve(mix, [start] * 3, dt, 5, parallel=True)
    assert np.array_equal(serial.combined[-1].values, threaded.combined[-1].values)
    assert [d.purity for d in serial.diagnostics] == [d.purity for d in threaded.diagnostics]


def test_separated_gaussians_mixed_evenly_have_half_purity():
    grid = phase_grid((-8.0, 8.0), (-8.0, 8.0), 128, 128)
    left = WignerState(grid.with_values(coherent_wigner(grid, -3.0, 0.0)))
    right = WignerState(grid.with_values(coherent_wigner(grid, 3.0, 0.0)))
    assert quantumness_metrics(left).purity == pytest.approx(1.0, abs=1e-6)
    mixed = combine_states([0.5, 0.5], [left, right])
    assert quantumness_metrics(mixed).purity == pytest.approx(0.5, abs=1e-6)
    assert quantumness_metrics(mixed).negativity_volume < 1e-12


def test_mixture_records_combined_diagnostics_every_step():
    """合成态诊断逐步记录，纯度随分量分离而下降"""
    grid = phase_grid((-8.0, 8.0), (-8.0, 8.0), 64, 64)
    start = WignerState(grid.with_values(coherent_wigner(grid, 2.0, 0.0)))
    mix = MixtureSpec([(0.5, PolynomialPotential.harmonic()), (0.5, PolynomialPotential((0.0,)))])
    result = mixture_evolve(mix, [start, start], 0.005, 100, record_every=50)
    assert [d.step for d in result.diagnostics] == list(range(101))
    assert len(result.combined) == 3
    assert result.diagnostics[50].purity == pytest.approx(quantumness_metrics(result.combined[1]).purity,
                                                          rel=1e-12)
    assert result.diagnostics[0].purity == pytest.approx(quantumness_metrics(start).purity, rel=1e-12)
    assert result.diagnostics[-1].purity < result.diagnostics[0].purity - 0.05
    assert result.mass_drift < 1e-10
    for component in result.components:
        assert len(component.diagnostics) == 101


def test_fock_mixture_conserves_combined_mass():
    grid = phase_grid((-8.0, 8.0), (-8.0, 8.0), 64, 64)
    start = WignerState(grid.with_values(coherent_wigner(grid, 1.0, 0.0)))
    mix = fock_mixture(0.5, n_max=2)
    dt = 0.005
    assert dt <= cfl_limit(start, mix.components[-1][1])
    result = mixture_evolve(mix, [start] * 3, dt, 200)
    assert len(result.diagnostics) == 201
    assert result.mass_drift < 1e-8


def test_mixture_from_wavefunctions():
    grid = _transform_grid(64)
    psi = _normalized(oscillator_eigenstate(0, grid.q), grid.dq)
    mix = MixtureSpec([(1.0, PolynomialPotential.harmonic())])
    result = mixture_evolve(mix, [psi], 1e-4, 0, grid=grid)
    assert result.combined[0].total_mass() == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(BadParams):
        mixture_evolve(mix, [psi], 1e-4, 0)


def test_poisson_weights_and_fock_mixture():
    weights = poisson_weights(1.0, 2)
    assert weights.sum() == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(weights, np.array([1.0, 1.0, 0.5]) / 2.5)
    mix = fock_mixture(2.0, coupling=(0.0, 0.0, 1.0), n_max=2)
    assert [p.coeffs for _, p in mix.components] == [(0.0,), (0.0, 0.0, 2.0), (0.0, 0.0, 4.0)]


def test_combine_states_is_weighted_sum():
    grid = phase_grid((-4.0, 4.0), (-4.0, 4.0), 16, 16)
    a = WignerState(grid.with_values(np.ones((16, 16))))
    b = WignerState(grid.with_values(np.zeros((16, 16))))
    combined = combine_states([0.25, 0.75], [a, b])
    np.testing.assert_allclose(combined.values, 0.25)

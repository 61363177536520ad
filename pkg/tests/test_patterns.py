"""
相空间图样测试
系数矩阵生成、张量基合成、局域化指标、分类与时间持续性
"""
import numpy as np
import pytest

from waveleton.config import PatternConfig
from waveleton.errors import BadParams, BadSpec, ShapeMismatch, ZeroField
from waveleton.patterns import (
    EvolutionSpec, MatrixKind, MatrixSpec, PatternClass, PatternMetrics, classify,
    compute_metrics, flat_mode_levels, generate_matrix, mode_count, partial_syntheses,
    synthesize, waveleton_persistence,
)
from waveleton.tensor2d import Grid2D
from waveleton.wavelet_core import (
    dwt_basis_nodes, filter_by_name, ordered_tiling, packet_basis, uniform_tiling, waverec_flat,
)
from waveleton.wigner_dyn import (
    LindbladParams, PolynomialPotential, WignerState, eigenstate_wigner, evolve, gaussian_wigner,
    phase_grid,
)


# ==================== 系数矩阵 ====================

def test_ones_and_band_matrices():
    assert np.array_equal(generate_matrix(MatrixSpec(MatrixKind.ONES), 4).values, np.ones((4, 4)))
    band = generate_matrix(MatrixSpec.parse("band:2,5,1"), 4).values
    expected = np.array([
        [5, 5, 1, 1],
        [5, 5, 5, 1],
        [1, 5, 5, 5],
        [1, 1, 5, 5],
    ], dtype=float)
    assert np.array_equal(band, expected)
    tri = generate_matrix(MatrixSpec.parse("tri:2,5,1"), 4).values
    assert np.array_equal(tri, np.where(np.tril(np.ones((4, 4))) - np.tril(np.ones((4, 4)), -2) > 0, 5.0, 1.0))


def test_random_matrix_is_seeded():
    a = generate_matrix(MatrixSpec.parse("random:7"), 16).values
    b = generate_matrix(MatrixSpec.parse("random:7"), 16).values
    c = generate_matrix(MatrixSpec.parse("random:8"), 16).values
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.all((a >= 0) & (a < 1))


def test_explicit_matrix_from_csv(tmp_path):
    path = tmp_path / "coeffs.csv"
    np.savetxt(path, np.arange(9.0).reshape(3, 3), delimiter=",")
    spec = MatrixSpec.parse(str(path))
    assert spec.kind == MatrixKind.EXPLICIT
    assert generate_matrix(spec, 3).values[2, 1] == 7.0
    with pytest.raises(BadSpec):
        generate_matrix(spec, 4)


@pytest.mark.parametrize("text", ["foo", "band:1,2", "tri:a,b,c", "missing.csv"])
def test_unparseable_specs(text):
    with pytest.raises(BadSpec):
        MatrixSpec.parse(text)


def test_invalid_generator_arguments():
    with pytest.raises(BadSpec):
        generate_matrix(MatrixSpec(MatrixKind.ONES), 1)
    with pytest.raises(BadSpec):
        generate_matrix(MatrixSpec(MatrixKind.BAND_DIAGONAL, width=0), 8)
    with pytest.raises(BadSpec):
        generate_matrix(MatrixSpec(MatrixKind.BAND_TRIANGULAR, width=8), 8)
    with pytest.raises(BadSpec):
        generate_matrix(MatrixSpec(MatrixKind.EXPLICIT), 8)


# ==================== 合成 ====================

def test_synthesis_is_linear_and_isometric(rng):
    filt = filter_by_name("daubechies2")
    a = rng.standard_normal((8, 8))
    b = rng.standard_normal((8, 8))
    left = synthesize(a + 2 * b, filt, 2, 32).values
    right = synthesize(a, filt, 2, 32).values + 2 * synthesize(b, filt, 2, 32).values
    np.testing.assert_allclose(left, right, atol=1e-12)
    assert np.linalg.norm(synthesize(a, filt, 2, 32).values) == pytest.approx(np.linalg.norm(a))


def test_one_hot_synthesis_has_unit_norm():
    filt = filter_by_name("symmlet8")
    one_hot = np.zeros((16, 16))
    one_hot[10, 13] = 1.0
    pattern = synthesize(one_hot, filt, 3, 64).values
    assert np.sum(pattern ** 2) == pytest.approx(1.0, abs=1e-12)


def test_synthesis_rejects_oversized_matrix():
    with pytest.raises(ShapeMismatch):
        synthesize(np.ones((64, 64)), filter_by_name("daubechies2"), 3, 32)


def test_matrix_must_match_included_mode_count():
    """max_level = 4 含 32 个模式，64 阶矩阵不被接受"""
    filt = filter_by_name("symmlet8")
    assert mode_count(4) == 32
    with pytest.raises(ShapeMismatch):
        synthesize(np.ones((64, 64)), filt, 4, 512)
    with pytest.raises(ShapeMismatch):
        synthesize(np.ones((16, 16)), filt, 4, 512)
    assert synthesize(np.ones((32, 32)), filt, 4, 512).values.shape == (512, 512)


@pytest.mark.parametrize("text", ["ones", "random:5"])
def test_synthesis_matches_direct_mode_summation(text):
    """64² 网格上逐模式累加 a_ij U^i ⊗ V^j"""
    filt = filter_by_name("symmlet8")
    n, level = 64, 4
    count = mode_count(level)
    matrix = generate_matrix(MatrixSpec.parse(text), count).values
    modes = waverec_flat(np.eye(n)[:count], filt, 6)
    expected = np.zeros((n, n))
    for i in range(count):
        for j in range(count):
            expected += matrix[i, j] * np.outer(modes[i], modes[j])
    np.testing.assert_allclose(synthesize(matrix, filt, level, n).values, expected, atol=1e-12)


def test_all_ones_is_sum_of_included_modes():
    filt = filter_by_name("symmlet8")
    coeffs = np.zeros(512)
    coeffs[:mode_count(4)] = 1.0
    total = waverec_flat(coeffs, filt, 9)
    pattern = synthesize(np.ones((32, 32)), filt, 4, 512).values
    np.testing.assert_allclose(pattern, np.outer(total, total), atol=1e-10)


def test_partial_syntheses_end_with_full_pattern(rng):
    filt = filter_by_name("daubechies2")
    matrix = generate_matrix(MatrixSpec.parse("random:3"), 8)
    grid = Grid2D.zeros(32, 32, (-4.0, 4.0, -4.0, 4.0))
    partial = partial_syntheses(matrix, filt, 2, grid)
    assert [j for j, _ in partial] == [-1, 0, 1, 2]
    np.testing.assert_allclose(partial[-1][1].values, synthesize(matrix, filt, 2, grid).values, atol=1e-12)
    assert partial[-1][1].extents == (-4.0, 4.0, -4.0, 4.0)
    # 仅含最粗层的部分和能量最小
    energies = [np.sum(g.values ** 2) for _, g in partial]
    assert energies == sorted(energies)


def test_flat_mode_levels():
    assert list(flat_mode_levels(16, 2)) == [1, 1, 1, 1, 2, 2, 2, 2] + [3] * 8


# ==================== 指标与分类 ====================

def test_uniform_field_metrics():
    grid = Grid2D(np.ones((16, 16)))
    metrics = compute_metrics(grid)
    assert metrics.participation_ratio == pytest.approx(1.0)
    assert metrics.coeff_entropy == pytest.approx(1.0)
    assert metrics.concentration_50 == pytest.approx(0.5)
    assert metrics.max_cell_share == pytest.approx(1.0 / 256)
    assert metrics.separability_defect == pytest.approx(0.0, abs=1e-12)


def test_metrics_are_scale_invariant(rng):
    grid = Grid2D(rng.standard_normal((32, 32)))
    filt = filter_by_name("daubechies4")
    a = compute_metrics(grid, filt, 2)
    b = compute_metrics(grid.with_values(-3.0 * grid.values), filt, 2)
    for key, value in a.to_dict().items():
        assert getattr(b, key) == pytest.approx(value, rel=1e-9, abs=1e-12)


def test_zero_field_rejected():
    with pytest.raises(ZeroField):
        compute_metrics(Grid2D(np.zeros((8, 8))))


@pytest.mark.parametrize("metrics, expected", [
    (PatternMetrics(0.01, 0.001, 0.1, 0.5), PatternClass.WAVELETON),
    (PatternMetrics(0.3, 0.9, 0.95, 0.001), PatternClass.CHAOTIC_LIKE),
    (PatternMetrics(0.3, 0.2, 0.6, 0.01), PatternClass.INTERMEDIATE),
    (PatternMetrics(0.01, 0.2, 0.7, 0.01), PatternClass.INTERMEDIATE),
])
def test_classify_default_thresholds(metrics, expected):
    assert classify(metrics) == expected


def test_classify_custom_thresholds():
    metrics = PatternMetrics(0.3, 0.2, 0.4, 0.01)
    assert classify(metrics) == PatternClass.INTERMEDIATE
    assert classify(metrics, PatternConfig(c_lo=0.5)) == PatternClass.WAVELETON


def test_pattern_ordering_at_full_size():
    """N = 512: 带状矩阵比全一矩阵更局域，单个细尺度模式是 waveleton"""
    filt = filter_by_name("symmlet8")
    n, level = 512, 6
    count = mode_count(level)

    def metrics_for(values):
        return compute_metrics(synthesize(values, filt, level, n), filt, level)

    ones = metrics_for(generate_matrix(MatrixSpec.parse("ones"), count).values)
    band = metrics_for(generate_matrix(MatrixSpec.parse("band:8,5,1"), count).values)
    one_hot = np.zeros((count, count))
    one_hot[100, 100] = 1.0
    single = metrics_for(one_hot)

    assert ones.coeff_entropy == pytest.approx(1.0)
    assert classify(ones) == PatternClass.CHAOTIC_LIKE
    assert band.coeff_entropy < ones.coeff_entropy
    assert band.concentration_50 < ones.concentration_50
    assert single.concentration_50 <= 0.05
    assert single.coeff_entropy == pytest.approx(0.0, abs=1e-9)
    assert classify(single) == PatternClass.WAVELETON


# ==================== 小波包基 ====================

def test_packet_basis_is_orthonormal():
    filt = filter_by_name("daubechies4")
    for nodes in (uniform_tiling(3), dwt_basis_nodes(4), {(1, (0,)), (2, (1, 0)), (2, (1, 1))}):
        P = packet_basis(32, filt, nodes)
        np.testing.assert_allclose(P.T @ P, np.eye(32), atol=1e-12)


def test_invalid_tiling_rejected():
    with pytest.raises(BadParams):
        ordered_tiling({(1, (0,)), (2, (0, 1))})
    with pytest.raises(BadParams):
        ordered_tiling({(1, (0,)), (2, (0, 0)), (1, (1,))})


def test_wavelet_tiling_reproduces_wavelet_synthesis(rng):
    filt = filter_by_name("daubechies2")
    level = 3
    matrix = rng.standard_normal((mode_count(level), mode_count(level)))
    packet = synthesize(matrix, filt, level, 64, basis="packet", nodes=dwt_basis_nodes(level + 1))
    np.testing.assert_allclose(packet.values, synthesize(matrix, filt, level, 64).values, atol=1e-12)


def test_packet_synthesis_band_is_more_ordered_than_ones():
    """小波包基下: 全一矩阵的系数熵仍为 1，带状矩阵更低"""
    filt = filter_by_name("daubechies4")
    n, level = 256, 5
    count = mode_count(level)

    def metrics_for(text):
        values = generate_matrix(MatrixSpec.parse(text), count).values
        grid = synthesize(values, filt, level, n, basis="packet")
        return compute_metrics(grid, filt, level, basis="packet")

    ones = metrics_for("ones")
    band = metrics_for("band:8,5,1")
    assert ones.coeff_entropy == pytest.approx(1.0)
    assert classify(ones) == PatternClass.CHAOTIC_LIKE
    assert band.coeff_entropy < ones.coeff_entropy


def test_packet_synthesis_keeps_mode_count_contract():
    filt = filter_by_name("daubechies2")
    with pytest.raises(ShapeMismatch):
        synthesize(np.ones((8, 8)), filt, 3, 64, basis="packet")
    with pytest.raises(BadParams):
        synthesize(np.ones((16, 16)), filt, 3, 64, basis="packet", nodes={(1, (0,))})


# ==================== 时间持续性 ====================

def _ground_grid():
    grid = phase_grid((-8.0, 8.0), (-8.0, 8.0), 64, 64)
    return grid.with_values(eigenstate_wigner(0, grid))


def test_stationary_state_stays_localized():
    equation = EvolutionSpec(PolynomialPotential.harmonic(), dt=0.01, sample_every=10)
    report = waveleton_persistence(_ground_grid(), equation, horizon=0.5)
    assert len(report.times) == 6
    assert report.localized_throughout
    first = report.metrics[0]
    for m in report.metrics[1:]:
        assert m.concentration_50 == pytest.approx(first.concentration_50, rel=1e-2)
        assert m.coeff_entropy == pytest.approx(first.coeff_entropy, rel=1e-2)


def test_zero_horizon_samples_initial_state_only():
    equation = EvolutionSpec(PolynomialPotential.harmonic(), dt=0.01)
    report = waveleton_persistence(_ground_grid(), equation, horizon=0.0)
    assert report.times == [0.0]
    assert len(report.metrics) == 1


def test_diffusion_delocalizes():
    """扩散让相空间面积增长，concentration_50 随时间上升"""
    equation = EvolutionSpec(
        PolynomialPotential.harmonic(), dt=0.01,
        lindblad=LindbladParams(gamma=0.0, diffusion=0.5), sample_every=25,
    )
    report = waveleton_persistence(_ground_grid(), equation, horizon=1.0)
    assert report.concentration[-1] > report.concentration[0]
    assert np.all(np.diff(report.concentration) >= 0)


def test_free_streaming_bump_shears():
    """U = 0: 相空间面积守恒，支撑沿 q 方向剪切展开"""
    grid = phase_grid((-8.0, 8.0), (-8.0, 8.0), 128, 128)
    bump = grid.with_values(gaussian_wigner(grid, 0.0, 0.0, 0.5, 1.0))
    free = PolynomialPotential((0.0,))
    equation = EvolutionSpec(free, dt=0.005, sample_every=100)
    report = waveleton_persistence(bump, equation, horizon=2.0)
    assert len(report.times) == 5
    assert report.concentration[-1] == pytest.approx(report.concentration[0], rel=0.2)

    start = WignerState(bump)
    final = evolve(start, free, None, 0.005, 400).final.values
    q, p = grid.q[:, None], grid.p[None, :]

    def q_rows(values):
        return int(np.sum(np.any(np.abs(values) > 1e-3 * np.abs(values).max(), axis=1)))

    assert q_rows(final) > 3 * q_rows(bump.values)
    # d<qp>/dt = <p²>/m
    mass = final.sum()
    covariance = np.sum(q * p * final) / mass
    assert covariance == pytest.approx(2.0 * np.sum(p ** 2 * final) / mass, rel=1e-2)
